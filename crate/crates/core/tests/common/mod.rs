#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3, Vector6};
use wbsim::fixtures;
use wbsim::kindyn::{forward_kinematics, inverse_dynamics, RobotState, WrenchMap};
use wbsim::model::RobotModel;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Models exercised by the oracle tests.
pub fn test_models() -> Vec<(&'static str, RobotModel)> {
    fixtures::BUILTIN_NAMES.iter().map(|n| (*n, fixtures::builtin(n).unwrap())).collect()
}

/// Moves the state by `eps` along generalized velocity direction `dir`,
/// without touching the velocities.
pub fn displace(model: &RobotModel, state: &RobotState, dir: &DVector<f64>, eps: f64) -> RobotState {
    let mut s = state.clone();
    let nb = model.base_dofs();
    if model.is_floating() {
        s.base_position += Vector3::new(dir[0], dir[1], dir[2]) * eps;
        let w = Vector3::new(dir[3], dir[4], dir[5]) * eps;
        s.base_orientation = UnitQuaternion::from_scaled_axis(w) * state.base_orientation;
    }
    s.joint_positions += dir.rows(nb, model.dof_count()) * eps;
    s
}

/// Central-difference Jacobian of a frame: linear rows from the origin
/// position, angular rows from the relative rotation.
pub fn numeric_jacobian(model: &RobotModel, state: &RobotState, frame: &str, eps: f64) -> DMatrix<f64> {
    let nv = model.nv();
    let mut j = DMatrix::zeros(6, nv);
    for i in 0..nv {
        let mut e = DVector::zeros(nv);
        e[i] = 1.0;
        let plus = forward_kinematics(model, &displace(model, state, &e, eps)).unwrap()[frame];
        let minus = forward_kinematics(model, &displace(model, state, &e, -eps)).unwrap()[frame];
        let dp = (plus.translation.vector - minus.translation.vector) / (2.0 * eps);
        let dr = (plus.rotation * minus.rotation.inverse()).scaled_axis() / (2.0 * eps);
        for r in 0..3 {
            j[(r, i)] = dp[r];
            j[(r + 3, i)] = dr[r];
        }
    }
    j
}

/// Mass matrix assembled column by column from inverse dynamics at zero
/// velocity and gravity: M e_i = ID(q, 0, e_i).
pub fn mass_matrix_from_rnea(model: &RobotModel, state: &RobotState) -> DMatrix<f64> {
    let mut s = state.clone();
    s.set_velocity(model, &DVector::zeros(model.nv()));
    let nv = model.nv();
    let g = Vector3::zeros();
    let mut m = DMatrix::zeros(nv, nv);
    for i in 0..nv {
        let mut e = DVector::zeros(nv);
        e[i] = 1.0;
        m.set_column(i, &inverse_dynamics(model, &s, &e, &WrenchMap::new(), &g).unwrap());
    }
    m
}

pub fn wrench(f: [f64; 3], m: [f64; 3]) -> Vector6<f64> {
    Vector6::new(f[0], f[1], f[2], m[0], m[1], m[2])
}

/// Largest pyramid violation over a set of forces: max of −f_z and
/// |f_t| − μ f_z. Negative slack means violation.
pub fn pyramid_slack(forces: impl IntoIterator<Item = Vector3<f64>>, mu: f64) -> f64 {
    forces
        .into_iter()
        .map(|f| f.z.min(mu * f.z - f.x.abs()).min(mu * f.z - f.y.abs()))
        .fold(f64::INFINITY, f64::min)
}
