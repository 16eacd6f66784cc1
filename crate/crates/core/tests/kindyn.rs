mod common;

use approx::assert_relative_eq;
use common::{displace, mass_matrix_from_rnea, numeric_jacobian, test_models, wrench};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;
use wbsim::fixtures;
use wbsim::kindyn::{
    actuated_forces, bias_forces, compute_quantities, default_gravity, external_forces, forward_dynamics,
    frame_bias_acceleration, frame_jacobian, inverse_dynamics, kinetic_energy, mass_matrix, potential_energy,
    RobotState, WrenchMap,
};

#[test]
fn crba_matches_rnea_columns_on_every_model() {
    for (name, model) in test_models() {
        for seed in 0..10 {
            let s = fixtures::random_state(&model, seed);
            let m = mass_matrix(&model, &s).unwrap();
            let oracle = mass_matrix_from_rnea(&model, &s);
            let err = (&m - &oracle).amax();
            assert!(err <= 1e-10 * m.amax(), "{name} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn jacobians_match_finite_differences() {
    for (name, model) in test_models() {
        for seed in 0..3 {
            let s = fixtures::random_state(&model, seed);
            for frame in model.frame_names() {
                let j = frame_jacobian(&model, &s, frame).unwrap();
                let oracle = numeric_jacobian(&model, &s, frame, 1e-6);
                let err = (&j - &oracle).amax();
                assert!(err <= 1e-6, "{name}/{frame} seed {seed}: {err:e}");
            }
        }
    }
}

#[test]
fn bias_acceleration_is_jacobian_rate_times_velocity() {
    for (name, model) in test_models() {
        let s = fixtures::random_state(&model, 7);
        let nu = s.velocity(&model);
        let eps = 1e-6;
        for frame in model.frame_names() {
            let plus = frame_jacobian(&model, &displace(&model, &s, &nu, eps), frame).unwrap();
            let minus = frame_jacobian(&model, &displace(&model, &s, &nu, -eps), frame).unwrap();
            let jdot_nu = (plus - minus) * &nu / (2.0 * eps);
            let bias = frame_bias_acceleration(&model, &s, frame).unwrap();
            let err = (bias - &jdot_nu).amax();
            assert!(err <= 1e-5, "{name}/{frame}: {err:e}\n{bias}\n{jdot_nu}");
        }
    }
}

#[test]
fn planar_pendulum_matches_closed_form() {
    let (m, l) = (2.0, 0.7);
    let model = fixtures::planar_pendulum(m, l);
    let mut s = RobotState::new(&model);
    s.joint_positions[0] = 0.4;
    s.joint_velocities[0] = 1.3;
    // Gravity along −y in the plane of motion.
    let g = Vector3::new(0.0, -9.81, 0.0);
    let izz = mass_matrix(&model, &s).unwrap()[(0, 0)];
    let rod = izz - m * l * l;
    assert!(rod >= 0.0 && rod < 0.01 * m * l * l);
    let h = bias_forces(&model, &s, &g).unwrap();
    assert_relative_eq!(h[0], m * 9.81 * l * 0.4f64.cos(), epsilon = 1e-12);
    let e_k = kinetic_energy(&model, &s).unwrap();
    assert_relative_eq!(e_k, 0.5 * izz * 1.3 * 1.3, epsilon = 1e-12);
    let e_p = potential_energy(&model, &s, &g).unwrap();
    assert_relative_eq!(e_p, m * 9.81 * l * 0.4f64.sin(), epsilon = 1e-12);
}

#[test]
fn quantities_bundle_is_consistent_with_free_functions() {
    let model = fixtures::humanoid();
    let s = fixtures::random_state(&model, 3);
    let g = default_gravity();
    let kd = compute_quantities(&model, &s, &g).unwrap();
    assert_eq!(kd.mass_matrix, mass_matrix(&model, &s).unwrap());
    assert_eq!(kd.bias_forces, bias_forces(&model, &s, &g).unwrap());
    assert_eq!(kd.jacobian("l_foot").unwrap(), &frame_jacobian(&model, &s, "l_foot").unwrap());
    assert!(kd.jacobian("nope").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(seed in any::<u64>(), which in 0usize..fixtures::BUILTIN_NAMES.len()) {
        let model = fixtures::builtin(fixtures::BUILTIN_NAMES[which]).unwrap();
        let s = fixtures::random_state(&model, seed);
        let m = mass_matrix(&model, &s).unwrap();
        prop_assert!((&m - m.transpose()).amax() <= 1e-12 * m.amax());
        prop_assert!(m.clone().cholesky().is_some());
    }

    #[test]
    fn forward_and_inverse_dynamics_roundtrip(seed in any::<u64>(), fx in -20.0..20.0f64, tz in -5.0..5.0f64) {
        let model = fixtures::branched_floating();
        let s = fixtures::random_state(&model, seed);
        let g = default_gravity();
        let tau = DVector::from_fn(model.dof_count(), |i, _| (i as f64 + 1.0) * fx / 10.0);
        let mut ext = WrenchMap::new();
        ext.insert("foot_a".into(), wrench([fx, 1.0, 3.0], [0.0, 0.5, tz]));
        let accel = forward_dynamics(&model, &s, &tau, &ext, &g).unwrap();
        let back = inverse_dynamics(&model, &s, &accel, &ext, &g).unwrap();
        let applied = actuated_forces(&model, &tau).unwrap();
        let scale = 1.0 + applied.amax() + external_forces(&model, &s, &ext).unwrap().amax()
            + bias_forces(&model, &s, &g).unwrap().amax();
        prop_assert!((back - applied).amax() <= 1e-9 * scale);
    }

    #[test]
    fn kinetic_energy_is_half_quadratic_form(seed in any::<u64>()) {
        let model = fixtures::humanoid();
        let s = fixtures::random_state(&model, seed);
        let nu = s.velocity(&model);
        let m = mass_matrix(&model, &s).unwrap();
        let e = kinetic_energy(&model, &s).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert!((e - 0.5 * nu.dot(&(m * &nu))).abs() <= 1e-10 * (1.0 + e));
    }
}
