use nalgebra::DVector;
use proptest::prelude::*;
use wbsim::actuation::{apply_actuator_dynamics, joint_friction, ActuatorParams, JointActuator};

fn params(kv: f64, kc: f64, eps: f64) -> ActuatorParams {
    ActuatorParams::uniform(1, JointActuator { motor_inertia: 0.02, viscous: kv, coulomb: kc, smoothing: eps })
}

#[test]
fn zero_smoothing_is_the_sign_law() {
    let p = params(0.0, 1.5, 0.0);
    let f = |v: f64| joint_friction(&DVector::from_element(1, v), &p).unwrap()[0];
    assert_eq!(f(1e-12), -1.5);
    assert_eq!(f(-1e-12), 1.5);
    assert_eq!(f(0.0), 0.0);
}

#[test]
fn smoothing_width_sets_the_transition() {
    let p = params(0.0, 1.0, 0.01);
    let f = joint_friction(&DVector::from_element(1, 0.01), &p).unwrap()[0];
    assert!((f + 1f64.tanh()).abs() < 1e-15);
}

proptest! {
    #[test]
    fn friction_dissipates_and_is_bounded(qd in -50.0..50.0f64, kv in 0.0..2.0f64, kc in 0.0..5.0f64, eps in 0.0..0.1f64) {
        let p = params(kv, kc, eps);
        let f = joint_friction(&DVector::from_element(1, qd), &p).unwrap()[0];
        prop_assert!(f * qd <= 0.0);
        prop_assert!(f.abs() <= kv * qd.abs() + kc + 1e-12);
        let g = joint_friction(&DVector::from_element(1, -qd), &p).unwrap()[0];
        prop_assert_eq!(f, -g);
    }

    #[test]
    fn applied_is_command_plus_friction(cmd in -10.0..10.0f64, qd in -5.0..5.0f64) {
        let p = params(0.3, 0.7, 1e-3);
        let out = apply_actuator_dynamics(&DVector::from_element(1, cmd), &DVector::from_element(1, qd), &p).unwrap();
        let f = joint_friction(&DVector::from_element(1, qd), &p).unwrap()[0];
        prop_assert_eq!(out.applied[0], cmd + f);
        prop_assert_eq!(out.mass_diagonal[0], 0.02);
    }
}
