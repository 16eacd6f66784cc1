//! Actuator model between commanded and applied joint torques: reflected
//! motor inertia on the mass-matrix diagonal and smooth joint friction
//! τ_f = −K_v q̇ − K_c tanh(q̇/ε).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActuationError {
    #[error("actuator parameters cover {got} joints, model has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("joint {joint}: {name} must be finite and non-negative, got {value}")]
    InvalidParameter { joint: usize, name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointActuator {
    /// Reflected rotor inertia Γ (kg·m²).
    pub motor_inertia: f64,
    /// K_v (N·m·s/rad).
    pub viscous: f64,
    /// K_c (N·m).
    pub coulomb: f64,
    /// ε (rad/s).
    pub smoothing: f64,
}

impl Default for JointActuator {
    fn default() -> Self {
        JointActuator { motor_inertia: 0.0, viscous: 0.0, coulomb: 0.0, smoothing: 1e-3 }
    }
}

impl JointActuator {
    fn validate(&self, joint: usize) -> Result<(), ActuationError> {
        for (name, value) in [
            ("motor_inertia", self.motor_inertia),
            ("viscous", self.viscous),
            ("coulomb", self.coulomb),
            ("smoothing", self.smoothing),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(ActuationError::InvalidParameter { joint, name, value });
            }
        }
        Ok(())
    }

    pub fn friction(&self, qd: f64) -> f64 {
        let coulomb = if self.smoothing > 0.0 { (qd / self.smoothing).tanh() } else { sign(qd) };
        -self.viscous * qd - self.coulomb * coulomb
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorParams {
    pub enabled: bool,
    pub joints: Vec<JointActuator>,
}

impl ActuatorParams {
    pub fn disabled(n: usize) -> Self {
        ActuatorParams { enabled: false, joints: vec![JointActuator::default(); n] }
    }

    pub fn uniform(n: usize, joint: JointActuator) -> Self {
        ActuatorParams { enabled: true, joints: vec![joint; n] }
    }

    pub fn validate(&self, n: usize) -> Result<(), ActuationError> {
        if self.joints.len() != n {
            return Err(ActuationError::Dimension { expected: n, got: self.joints.len() });
        }
        self.joints.iter().enumerate().try_for_each(|(i, j)| j.validate(i))
    }

    /// Γ per joint, zero when disabled.
    pub fn inertia_diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.joints.len(),
            self.joints.iter().map(|j| if self.enabled { j.motor_inertia } else { 0.0 }),
        )
    }
}

/// Friction torque of every joint.
pub fn joint_friction(joint_velocities: &DVector<f64>, params: &ActuatorParams) -> Result<DVector<f64>, ActuationError> {
    params.validate(joint_velocities.len())?;
    Ok(DVector::from_iterator(
        joint_velocities.len(),
        params.joints.iter().zip(joint_velocities.iter()).map(|(j, &qd)| j.friction(qd)),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorOutput {
    pub applied: DVector<f64>,
    /// Addition to the joint-joint diagonal of M.
    pub mass_diagonal: DVector<f64>,
}

pub fn apply_actuator_dynamics(
    commanded: &DVector<f64>,
    joint_velocities: &DVector<f64>,
    params: &ActuatorParams,
) -> Result<ActuatorOutput, ActuationError> {
    let n = commanded.len();
    if joint_velocities.len() != n {
        return Err(ActuationError::Dimension { expected: n, got: joint_velocities.len() });
    }
    params.validate(n)?;
    if !params.enabled {
        return Ok(ActuatorOutput { applied: commanded.clone(), mass_diagonal: DVector::zeros(n) });
    }
    Ok(ActuatorOutput {
        applied: commanded + joint_friction(joint_velocities, params)?,
        mass_diagonal: params.inertia_diagonal(),
    })
}

/// Adds Γ to the joint block of a generalized mass matrix whose joint
/// coordinates start at `base_dofs`.
pub fn add_reflected_inertia(mass_matrix: &mut DMatrix<f64>, base_dofs: usize, diagonal: &DVector<f64>) {
    for (i, g) in diagonal.iter().enumerate() {
        mass_matrix[(base_dofs + i, base_dofs + i)] += g;
    }
}
