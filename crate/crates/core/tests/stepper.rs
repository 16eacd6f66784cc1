use approx::assert_relative_eq;
use nalgebra::{DVector, Vector3, Vector6};
use proptest::prelude::*;
use wbsim::actuation::{ActuatorParams, JointActuator};
use wbsim::contact::kinetic_energy as quadratic_energy;
use wbsim::fixtures;
use wbsim::kindyn::{kinetic_energy, mass_matrix, potential_energy, RobotState, WrenchMap};
use wbsim::model::RobotModel;
use wbsim::stepper::{Integrator, SimConfig, SimError, Simulator, StepFailure};

fn run(model: &RobotModel, state: &RobotState, cfg: SimConfig, steps: usize, push: Option<Vector6<f64>>) -> Vec<(RobotState, wbsim::stepper::OutputBus)> {
    let mut sim = Simulator::new(model, cfg, ActuatorParams::disabled(model.dof_count())).unwrap();
    let tau = DVector::zeros(model.dof_count());
    let mut ext = WrenchMap::new();
    if let Some(w) = push {
        ext.insert(model.base_link().to_string(), w);
    }
    let mut s = state.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, bus) = sim.step(&s, &tau, &ext).unwrap();
        out.push((next.clone(), bus));
        s = next;
    }
    out
}

fn total_energy(model: &RobotModel, s: &RobotState, g: &Vector3<f64>) -> f64 {
    kinetic_energy(model, s).unwrap() + potential_energy(model, s, g).unwrap()
}

#[test]
fn double_pendulum_conserves_energy() {
    let model = fixtures::double_pendulum_point_mass(1.0, 1.0, 0.0);
    let mut s = RobotState::new(&model);
    s.joint_positions = DVector::from_vec(vec![0.8, -0.4]);
    let cfg = SimConfig { dt: 1e-4, ..Default::default() };
    // Reference level below the lowest reachable point keeps E(0) positive.
    let e = |s: &RobotState| total_energy(&model, s, &cfg.gravity) + 2.0 * 9.81 * 3.0;
    let e0 = e(&s);
    let mut worst: f64 = 0.0;
    for (next, _) in run(&model, &s, cfg, 10_000, None) {
        worst = worst.max((e(&next) - e0).abs() / e0);
    }
    assert!(worst < 1e-2, "relative drift {worst}");
}

#[test]
fn explicit_euler_gains_energy_where_semi_implicit_does_not() {
    let model = fixtures::planar_pendulum(1.0, 1.0);
    let mut s = RobotState::new(&model);
    s.joint_positions[0] = -1.0;
    let g = Vector3::new(0.0, -9.81, 0.0);
    let semi = SimConfig { dt: 1e-2, gravity: g, ..Default::default() };
    let expl = SimConfig { integrator: Integrator::ExplicitEuler, ..semi };
    let e = |s: &RobotState| total_energy(&model, s, &g) + 9.81 * 2.0;
    let e0 = e(&s);
    let drift = |cfg| run(&model, &s, cfg, 2000, None).iter().map(|(n, _)| (e(n) - e0) / e0).fold(0.0, f64::max);
    assert!(drift(semi) < 0.05, "{}", drift(semi));
    assert!(drift(expl) > 0.5, "{}", drift(expl));
}

#[test]
fn dropped_box_stops_at_impact_and_settles() {
    let model = fixtures::box_model(1.0, 0.2, 0.2, 0.2);
    let mut s = RobotState::new(&model);
    s.base_position.z = 0.6;
    let cfg = SimConfig::default();
    let trace = run(&model, &s, cfg, 2500, None);
    let impact = trace.iter().position(|(_, b)| b.contact.impulse_applied).expect("impact");
    let bus = &trace[impact].1;
    let before = if impact == 0 { s.clone() } else { trace[impact - 1].0.clone() };
    let m = mass_matrix(&model, &before).unwrap();
    assert!(quadratic_energy(&m, &bus.state.velocity(&model)) <= quadratic_energy(&m, &before.velocity(&model)));
    assert!(bus.state.base_twist.fixed_rows::<3>(0).norm() <= 1e-8);
    let settle = impact + 1000;
    for (_, b) in &trace[settle..] {
        assert_relative_eq!(b.contact.total_normal_force(), 9.81, epsilon = 1e-6);
    }
}

#[test]
fn pushed_box_slides_at_the_coulomb_rate() {
    let model = fixtures::box_model(1.0, 0.2, 0.2, 0.2);
    let mut s = RobotState::new(&model);
    s.base_position.z = 0.1;
    let cfg = SimConfig { mu: 0.3, ..Default::default() };
    let trace = run(&model, &s, cfg, 1000, Some(Vector6::new(5.0, 0.0, 0.0, 0.0, 0.0, 0.0)));
    let expected = 5.0 - 0.3 * 9.81;
    for (_, b) in &trace[100..] {
        assert_relative_eq!(b.acceleration[0], expected, max_relative = 1e-2);
        let fx: f64 = b.contact.forces.values().map(|f| f.x).sum();
        assert_relative_eq!(-fx, 0.3 * b.contact.total_normal_force(), max_relative = 1e-6);
    }
}

#[test]
fn simulation_is_deterministic() {
    let model = fixtures::humanoid();
    let s = fixtures::random_state(&model, 11);
    let cfg = SimConfig::default();
    let a = run(&model, &s, cfg, 200, None);
    let b = run(&model, &s, cfg, 200, None);
    for ((sa, ba), (sb, bb)) in a.iter().zip(&b) {
        assert_eq!(sa, sb);
        assert_eq!(ba.contact, bb.contact);
    }
}

#[test]
fn reflected_inertia_slows_a_joint() {
    let model = fixtures::planar_pendulum(1.0, 1.0);
    let s = RobotState::new(&model);
    let cfg = SimConfig { gravity: Vector3::zeros(), ..Default::default() };
    let tau = DVector::from_element(1, 1.0);
    let plain = Simulator::new(&model, cfg, ActuatorParams::disabled(1)).unwrap().step(&s, &tau, &WrenchMap::new()).unwrap().1;
    let geared = ActuatorParams::uniform(1, JointActuator { motor_inertia: 0.5, ..Default::default() });
    let slow = Simulator::new(&model, cfg, geared).unwrap().step(&s, &tau, &WrenchMap::new()).unwrap().1;
    let i = 1.0 / plain.acceleration[0];
    assert_relative_eq!(slow.acceleration[0], 1.0 / (i + 0.5), epsilon = 1e-12);
}

#[test]
fn bad_torque_vector_is_a_dimension_error() {
    let model = fixtures::humanoid();
    let mut sim = Simulator::new(&model, SimConfig::default(), ActuatorParams::disabled(model.dof_count())).unwrap();
    let err = sim.step(&RobotState::new(&model), &DVector::zeros(3), &WrenchMap::new()).unwrap_err();
    assert_eq!(err.class(), "DimensionError");
    let mut s = RobotState::new(&model);
    s.joint_velocities[0] = f64::NAN;
    let err = sim.step(&s, &DVector::zeros(model.dof_count()), &WrenchMap::new()).unwrap_err();
    assert!(matches!(err, SimError::Step { step: 1, failure: StepFailure::NonFiniteState }), "{err:?}");
}

fn linear_momentum(model: &RobotModel, s: &RobotState) -> Vector3<f64> {
    let p = mass_matrix(model, s).unwrap() * s.velocity(model);
    Vector3::new(p[0], p[1], p[2])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn floating_robot_in_free_space_keeps_its_momentum(seed in any::<u64>()) {
        let model = fixtures::branched_floating();
        let mut s = fixtures::random_state(&model, seed);
        s.base_position.z += 100.0;
        let cfg = SimConfig { dt: 1e-4, gravity: Vector3::zeros(), ..Default::default() };
        let p0 = linear_momentum(&model, &s);
        let trace = run(&model, &s, cfg, 200, None);
        let p1 = linear_momentum(&model, &trace.last().unwrap().0);
        prop_assert!((p1 - p0).norm() <= 1e-3 * (1.0 + p0.norm()), "{} vs {}", p1, p0);
    }

    #[test]
    fn quaternion_stays_normalized(seed in any::<u64>()) {
        let model = fixtures::humanoid();
        let mut s = fixtures::random_state(&model, seed);
        s.base_position.z += 10.0;
        s.base_twist *= 20.0;
        let trace = run(&model, &s, SimConfig { dt: 1e-3, ..Default::default() }, 50, None);
        for (n, _) in &trace {
            prop_assert!((n.base_orientation.quaternion().norm() - 1.0).abs() <= 1e-12);
        }
    }
}
