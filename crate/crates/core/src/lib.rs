//! Rigid-body simulation of fixed- and floating-base robots standing on flat
//! ground: kinematics and dynamics, contact forces from a dense QP, impacts,
//! loop closures, actuator models and a multi-rate scenario harness.

pub mod actuation;
pub mod batch;
pub mod contact;
pub mod fixtures;
pub mod harness;
pub mod kindyn;
pub mod model;
pub mod qpsolver;
mod spatial;
pub mod stepper;
