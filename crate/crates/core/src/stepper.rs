//! Fixed-step time integration of a robot in contact with the ground.
//!
//! One step evaluates the kinematic and dynamic quantities, detects contact,
//! applies an inelastic impulse for vertices that just touched down with an
//! inward velocity, solves the reaction-force QP, computes the constrained
//! acceleration and integrates.

use std::time::Instant;

use nalgebra::{DVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::{add_reflected_inertia, apply_actuator_dynamics, ActuationError, ActuatorParams};
use crate::contact::{
    contact_vertices, loop_closure_constraints, resolve_impacts, update_active_set, ContactConfig, ContactError,
    ContactResult, ContactSolver, ContactVertex, DynamicsTerms, VertexId,
};
use crate::kindyn::{
    actuated_forces, compute_quantities, default_gravity, external_forces, solve_mass_matrix, KinDynError,
    KinDynQuantities, RobotState, WrenchMap,
};
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    SemiImplicitEuler,
    ExplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// s
    pub dt: f64,
    pub gravity: Vector3<f64>,
    pub ground_height: f64,
    pub mu: f64,
    pub activation_tol: f64,
    pub baumgarte_lambda: f64,
    pub integrator: Integrator,
    pub enforce_joint_limits: bool,
    pub qp_regularization: f64,
    pub tangential_weight: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let c = ContactConfig::default();
        SimConfig {
            dt: 1e-3,
            gravity: default_gravity(),
            ground_height: c.ground_height,
            mu: c.mu,
            activation_tol: c.activation_tol,
            baumgarte_lambda: c.baumgarte_lambda,
            integrator: Integrator::SemiImplicitEuler,
            enforce_joint_limits: false,
            qp_regularization: c.regularization,
            tangential_weight: c.tangential_weight,
        }
    }
}

impl SimConfig {
    pub fn contact(&self) -> ContactConfig {
        ContactConfig {
            mu: self.mu,
            ground_height: self.ground_height,
            activation_tol: self.activation_tol,
            baumgarte_lambda: self.baumgarte_lambda,
            regularization: self.qp_regularization,
            tangential_weight: self.tangential_weight,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::Config(what.to_string()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return bad("mu must be non-negative");
        }
        if !(self.activation_tol.is_finite() && self.activation_tol >= 0.0) {
            return bad("activation_tol must be non-negative");
        }
        if !(self.baumgarte_lambda.is_finite() && self.baumgarte_lambda >= 0.0) {
            return bad("baumgarte_lambda must be non-negative");
        }
        if !(self.qp_regularization.is_finite() && self.qp_regularization > 0.0) {
            return bad("qp_regularization must be positive");
        }
        if !(self.tangential_weight.is_finite() && self.tangential_weight > 0.0) {
            return bad("tangential_weight must be positive");
        }
        if !self.gravity.iter().all(|g| g.is_finite()) || !self.ground_height.is_finite() {
            return bad("gravity and ground_height must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepFailure {
    #[error(transparent)]
    KinDyn(#[from] KinDynError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Actuation(#[from] ActuationError),
    #[error("non-finite state")]
    NonFiniteState,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("step {step}: {failure}")]
    Step { step: u64, failure: StepFailure },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl SimError {
    /// Short error class name, used for process exit reporting.
    pub fn class(&self) -> &'static str {
        match self {
            SimError::Config(_) => "ConfigError",
            SimError::Step { failure, .. } => match failure {
                StepFailure::KinDyn(KinDynError::Dimension { .. }) => "DimensionError",
                StepFailure::KinDyn(KinDynError::UnknownFrame(_)) => "UnknownFrameError",
                StepFailure::KinDyn(KinDynError::SingularMassMatrix) => "SingularMassMatrix",
                StepFailure::Contact(ContactError::QpInfeasible) => "QPInfeasible",
                StepFailure::Contact(ContactError::Qp(_)) => "BadProblem",
                StepFailure::Contact(ContactError::KinDyn(_)) => "KinDynError",
                StepFailure::Actuation(_) => "ActuationError",
                StepFailure::NonFiniteState => "NonFiniteState",
            },
        }
    }
}

/// Wall-clock seconds spent in each pipeline phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub kindyn: f64,
    pub contact_qp: f64,
    pub integration: f64,
}

impl PhaseTimes {
    pub fn total(&self) -> f64 {
        self.kindyn + self.contact_qp + self.integration
    }

    fn add(&mut self, other: &PhaseTimes) {
        self.kindyn += other.kindyn;
        self.contact_qp += other.contact_qp;
        self.integration += other.integration;
    }
}

/// Everything computed in one step, at the state the step started from
/// (after any impulse).
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBus {
    pub state: RobotState,
    pub kindyn: KinDynQuantities,
    pub contact: ContactResult,
    /// Joint torques after the actuator model.
    pub applied_torques: DVector<f64>,
    /// Generalized acceleration ν̇ used for the integration.
    pub acceleration: DVector<f64>,
    pub step_wall_time: f64,
    pub phase_times: PhaseTimes,
}

/// Simulation of one robot; carries contact hysteresis, the QP warm start
/// and accumulated timing between steps.
#[derive(Debug, Clone)]
pub struct Simulator<'m> {
    model: &'m RobotModel,
    config: SimConfig,
    actuators: ActuatorParams,
    contact: ContactSolver,
    previous: ContactResult,
    steps: u64,
    timing: PhaseTimes,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m RobotModel, config: SimConfig, actuators: ActuatorParams) -> Result<Self, SimError> {
        config.validate()?;
        actuators.validate(model.dof_count()).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(Simulator {
            model,
            config,
            actuators,
            contact: ContactSolver::new(config.contact()),
            previous: ContactResult::empty(model.nv()),
            steps: 0,
            timing: PhaseTimes::default(),
        })
    }

    pub fn model(&self) -> &RobotModel {
        self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Accumulated phase times over every step so far.
    pub fn timing(&self) -> PhaseTimes {
        self.timing
    }

    pub fn step(
        &mut self,
        state: &RobotState,
        joint_torques: &DVector<f64>,
        external: &WrenchMap,
    ) -> Result<(RobotState, OutputBus), SimError> {
        let index = self.steps;
        let result = self.step_inner(state, joint_torques, external);
        self.steps += 1;
        result.map_err(|failure| SimError::Step { step: index, failure })
    }

    fn step_inner(
        &mut self,
        state: &RobotState,
        joint_torques: &DVector<f64>,
        external: &WrenchMap,
    ) -> Result<(RobotState, OutputBus), StepFailure> {
        let model = self.model;
        let cfg = self.config;
        let start = Instant::now();
        let mut phases = PhaseTimes::default();
        if joint_torques.len() != model.dof_count() {
            return Err(KinDynError::Dimension {
                what: "joint_torques",
                expected: model.dof_count(),
                got: joint_torques.len(),
            }
            .into());
        }

        if !state.is_finite() || !joint_torques.iter().all(|t| t.is_finite()) {
            return Err(StepFailure::NonFiniteState);
        }

        let t = Instant::now();
        let mut kd = compute_quantities(model, state, &cfg.gravity)?;
        phases.kindyn += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let contact_cfg = cfg.contact();
        let mut state = state.clone();
        let mut vertices = contact_vertices(model, &state, &kd)?;
        let active_ids = update_active_set(&vertices, &self.previous, &contact_cfg);

        let act = apply_actuator_dynamics(joint_torques, &state.joint_velocities, &self.actuators)?;
        let mut mass = kd.mass_matrix.clone();
        add_reflected_inertia(&mut mass, model.base_dofs(), &act.mass_diagonal);
        let applied = actuated_forces(model, &act.applied)? + external_forces(model, &state, external)?;

        let newly: Vec<_> = {
            let lookup = |id: &VertexId| vertices.iter().find(|v| &v.id == id);
            active_ids
                .iter()
                .filter(|id| !self.previous.active.contains(id))
                .filter(|id| lookup(id).is_some_and(|v| v.velocity_world.z < 0.0))
                .cloned()
                .collect()
        };
        let mut impulse_applied = false;
        if !newly.is_empty() {
            let active: Vec<&ContactVertex> = vertices.iter().filter(|v| active_ids.contains(&v.id)).collect();
            let nu = resolve_impacts(&mass, &active, &newly, &state.velocity(model))?;
            state.set_velocity(model, &nu);
            impulse_applied = true;
            phases.contact_qp += t.elapsed().as_secs_f64();
            // Velocity-dependent terms change with the impulse.
            let tk = Instant::now();
            kd = compute_quantities(model, &state, &cfg.gravity)?;
            phases.kindyn += tk.elapsed().as_secs_f64();
            vertices = contact_vertices(model, &state, &kd)?;
        }
        let t = Instant::now();
        let nu = state.velocity(model);
        let closures = loop_closure_constraints(model, &kd)?;
        let active: Vec<&ContactVertex> = vertices.iter().filter(|v| active_ids.contains(&v.id)).collect();
        let mut contact = self.contact.solve(
            DynamicsTerms { mass_matrix: &mass, bias_forces: &kd.bias_forces, applied: &applied, velocity: &nu },
            &active,
            &closures,
        )?;
        contact.impulse_applied = impulse_applied;
        phases.contact_qp += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let rhs = &applied + &contact.generalized_force - &kd.bias_forces;
        let accel = solve_mass_matrix(&mass, &rhs)?;
        if !accel.iter().all(|a| a.is_finite()) {
            return Err(StepFailure::NonFiniteState);
        }
        let mut next = integrate_state(model, &state, &accel, cfg.dt, cfg.integrator)?;
        if cfg.enforce_joint_limits {
            enforce_joint_limits(model, &mut next);
        }
        phases.integration += t.elapsed().as_secs_f64();

        self.previous = contact.clone();
        self.timing.add(&phases);
        let bus = OutputBus {
            state,
            kindyn: kd,
            contact,
            applied_torques: act.applied,
            acceleration: accel,
            step_wall_time: start.elapsed().as_secs_f64(),
            phase_times: phases,
        };
        Ok((next, bus))
    }
}

/// One step without hysteresis memory or warm start.
pub fn step(
    model: &RobotModel,
    state: &RobotState,
    joint_torques: &DVector<f64>,
    config: &SimConfig,
) -> Result<(RobotState, OutputBus), SimError> {
    Simulator::new(model, *config, ActuatorParams::disabled(model.dof_count()))?.step(
        state,
        joint_torques,
        &WrenchMap::new(),
    )
}

/// Advances positions and velocities by `dt` under the acceleration `accel`.
/// The base orientation moves by the exponential map of the world angular
/// velocity and is renormalized.
pub fn integrate_state(
    model: &RobotModel,
    state: &RobotState,
    accel: &DVector<f64>,
    dt: f64,
    method: Integrator,
) -> Result<RobotState, StepFailure> {
    state.check(model)?;
    if accel.len() != model.nv() {
        return Err(KinDynError::Dimension { what: "accel", expected: model.nv(), got: accel.len() }.into());
    }
    if !accel.iter().all(|a| a.is_finite()) {
        return Err(StepFailure::NonFiniteState);
    }
    let old = state.velocity(model);
    let new = &old + accel * dt;
    let drive = match method {
        Integrator::SemiImplicitEuler => &new,
        Integrator::ExplicitEuler => &old,
    };
    let nb = model.base_dofs();
    let mut next = state.clone();
    next.set_velocity(model, &new);
    next.joint_positions += drive.rows(nb, model.dof_count()) * dt;
    if model.is_floating() {
        next.base_position += drive.fixed_rows::<3>(0) * dt;
        let w = drive.fixed_rows::<3>(3).into_owned();
        let q = UnitQuaternion::from_scaled_axis(w * dt) * state.base_orientation;
        next.base_orientation = UnitQuaternion::new_normalize(q.into_inner());
    }
    if !next.is_finite() {
        return Err(StepFailure::NonFiniteState);
    }
    Ok(next)
}

/// Clamps joint positions into their limits and zeroes the velocity of any
/// joint sitting at a limit.
pub fn enforce_joint_limits(model: &RobotModel, state: &mut RobotState) {
    for (j, joint) in model.joints().iter().enumerate() {
        let (Some(d), Some((lo, hi))) = (model.joint_dof(j), joint.position_limits) else { continue };
        let q = state.joint_positions[d];
        if q <= lo || q >= hi {
            state.joint_positions[d] = q.clamp(lo, hi);
            state.joint_velocities[d] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn ballistic_step() {
        let model = fixtures::box_model(1.0, 0.2, 0.2, 0.2);
        let mut state = RobotState::new(&model);
        state.base_position.z = 1.0;
        let (next, bus) = step(&model, &state, &DVector::zeros(0), &SimConfig::default()).unwrap();
        assert!(bus.contact.active.is_empty());
        assert_relative_eq!(next.base_twist[2], -9.81e-3, epsilon = 1e-15);
        assert_relative_eq!(next.base_position.z, 1.0 - 9.81e-3 * 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn pure_spin_quarter_turn() {
        let model = fixtures::single_body(1.0, nalgebra::Matrix3::identity(), Vector3::zeros());
        let mut state = RobotState::new(&model);
        state.base_twist[5] = PI;
        let next = integrate_state(&model, &state, &DVector::zeros(6), 0.5, Integrator::SemiImplicitEuler).unwrap();
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        assert!(next.base_orientation.angle_to(&expected) < 1e-12);
    }

    #[test]
    fn explicit_euler_uses_old_velocity() {
        let model = fixtures::single_body(1.0, nalgebra::Matrix3::identity(), Vector3::zeros());
        let mut state = RobotState::new(&model);
        state.base_twist[0] = 1.0;
        let acc = DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let a = integrate_state(&model, &state, &acc, 0.1, Integrator::ExplicitEuler).unwrap();
        let b = integrate_state(&model, &state, &acc, 0.1, Integrator::SemiImplicitEuler).unwrap();
        assert_relative_eq!(a.base_position.x, 0.1, epsilon = 1e-15);
        assert_relative_eq!(b.base_position.x, 0.12, epsilon = 1e-15);
        assert_relative_eq!(a.base_twist[0], 1.2, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_acceleration_is_rejected() {
        let model = fixtures::single_body(1.0, nalgebra::Matrix3::identity(), Vector3::zeros());
        let state = RobotState::new(&model);
        let acc = DVector::from_element(6, f64::NAN);
        assert_eq!(
            integrate_state(&model, &state, &acc, 1e-3, Integrator::SemiImplicitEuler),
            Err(StepFailure::NonFiniteState)
        );
    }

    #[test]
    fn invalid_config_is_rejected() {
        let model = fixtures::box_model(1.0, 0.2, 0.2, 0.2);
        let cfg = SimConfig { dt: 0.0, ..Default::default() };
        let err = Simulator::new(&model, cfg, ActuatorParams::disabled(0)).unwrap_err();
        assert_eq!(err.class(), "ConfigError");
        let cfg = SimConfig { mu: -1.0, ..Default::default() };
        assert!(Simulator::new(&model, cfg, ActuatorParams::disabled(0)).is_err());
    }

    #[test]
    fn step_errors_carry_the_index() {
        let model = fixtures::planar_pendulum(1.0, 1.0);
        let mut sim = Simulator::new(&model, SimConfig::default(), ActuatorParams::disabled(1)).unwrap();
        let state = RobotState::new(&model);
        sim.step(&state, &DVector::zeros(1), &WrenchMap::new()).unwrap();
        let err = sim.step(&state, &DVector::zeros(3), &WrenchMap::new()).unwrap_err();
        assert!(matches!(err, SimError::Step { step: 1, .. }));
        assert_eq!(err.class(), "DimensionError");
    }

    #[test]
    fn joint_limits_clamp_and_stop() {
        let base = fixtures::planar_pendulum(1.0, 1.0);
        let mut joints = base.joints().to_vec();
        joints[0].position_limits = Some((-0.5, 0.5));
        let model = RobotModel::new(crate::model::ModelDescription {
            name: "limited".into(),
            links: base.links().to_vec(),
            joints,
            ..Default::default()
        })
        .unwrap();
        let mut state = RobotState::new(&model);
        state.joint_positions[0] = 0.7;
        state.joint_velocities[0] = 2.0;
        enforce_joint_limits(&model, &mut state);
        assert_eq!(state.joint_positions[0], 0.5);
        assert_eq!(state.joint_velocities[0], 0.0);
    }
}
