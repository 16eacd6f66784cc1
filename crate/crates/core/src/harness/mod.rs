//! Scenario runner: loads a scenario, drives the stepper with a multi-rate
//! controller (zero-order hold between updates), logs at its own rate and
//! reports wall-clock timing.

mod controller;
mod imu;
mod output;
mod scenario;

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use thiserror::Error;

pub use controller::{pd_gravity_controller, ControllerSpec, Setpoint, SetpointShape, TorqueSchedule};
pub use imu::{imu_measure, ImuReading};
pub use output::{emit_outputs, ImuSample, OutputOptions, PhaseCalls, TimingReport, TrajectoryLog};
pub use scenario::{Scenario, TimedWrench};

use crate::kindyn::{KinDynError, RobotState, WrenchMap};
use crate::model::ModelError;
use crate::stepper::{OutputBus, SimError, Simulator};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("at t = {time} s: {source}")]
    Sim { time: f64, source: SimError },
    #[error("controller at t = {time} s: {source}")]
    Controller { time: f64, source: KinDynError },
}

impl HarnessError {
    /// Short error class name, used for process exit reporting.
    pub fn class(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "ConfigError",
            HarnessError::Parse(_) => "ParseError",
            HarnessError::Model(_) => "ModelError",
            HarnessError::Io { .. } => "IoError",
            HarnessError::Sim { source, .. } => source.class(),
            HarnessError::Controller { .. } => "ControllerError",
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(msg) => HarnessError::Config(msg),
            other => HarnessError::Sim { time: f64::NAN, source: other },
        }
    }
}

/// Passed to the observer after every step.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub step: u64,
    pub time: f64,
    pub command: &'a DVector<f64>,
    pub bus: &'a OutputBus,
}

/// Joint tracking error of a setpoint controller over every step, restricted
/// to actuated joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingStats {
    pub rms: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: String,
    pub dof_names: Vec<String>,
    pub log: TrajectoryLog,
    pub imu: Vec<ImuSample>,
    pub report: TimingReport,
    pub final_state: RobotState,
    pub tracking: Option<TrackingStats>,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, HarnessError> {
    run_scenario_with(scenario, |_| {})
}

/// Runs a scenario, calling `observer` after every step.
pub fn run_scenario_with<F>(scenario: &Scenario, mut observer: F) -> Result<RunOutput, HarnessError>
where
    F: FnMut(&StepRecord<'_>),
{
    scenario.validate()?;
    let model = &scenario.model;
    let cfg = scenario.config;
    let mut sim = Simulator::new(model, cfg, scenario.actuators.clone())?;
    let steps = scenario.steps();
    let ctrl_every = scenario.controller_every();
    let log_every = scenario.log_every();
    let mut log = TrajectoryLog::new(model);
    let mut imu = Vec::new();
    let mut state = scenario.initial.clone();
    let mut command = DVector::zeros(model.dof_count());
    let mut calls = PhaseCalls::default();
    let actuated = scenario.controller.actuated().map(|a| a.to_vec());
    let (mut sq_sum, mut max_abs, mut samples) = (0.0, 0.0f64, 0usize);

    let start = Instant::now();
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        if k % ctrl_every == 0 {
            command = scenario
                .controller
                .command(model, &state, t, &cfg.gravity)
                .map_err(|source| HarnessError::Controller { time: t, source })?;
        }
        let mut wrenches = WrenchMap::new();
        for w in scenario.external_wrenches.iter().filter(|w| w.active_at(t)) {
            *wrenches.entry(w.frame.clone()).or_insert_with(nalgebra::Vector6::zeros) += w.wrench;
        }
        let (next, bus) = sim.step(&state, &command, &wrenches).map_err(|source| HarnessError::Sim { time: t, source })?;
        calls.kindyn += 1 + u64::from(bus.contact.impulse_applied);
        calls.contact_qp += 1;
        calls.integration += 1;
        calls.impacts += u64::from(bus.contact.impulse_applied);

        if let (Some(reference), Some(mask)) = (scenario.controller.reference(t), &actuated) {
            for (i, on) in mask.iter().enumerate() {
                if *on {
                    let e = reference[i] - bus.state.joint_positions[i];
                    sq_sum += e * e;
                    max_abs = max_abs.max(e.abs());
                    samples += 1;
                }
            }
        }
        if k % log_every == 0 {
            log.record(t, &bus);
            if let Some(frame) = &scenario.imu_frame {
                let reading = imu_measure(model, &bus.state, &bus.acceleration, frame, &cfg.gravity)
                    .map_err(|source| HarnessError::Controller { time: t, source })?;
                imu.push(ImuSample { t, reading });
            }
        }
        observer(&StepRecord { step: k, time: t, command: &command, bus: &bus });
        state = next;
    }
    let wall = start.elapsed().as_secs_f64();

    let report = TimingReport::new(&scenario.name, steps as f64 * cfg.dt, wall, steps, sim.timing(), calls);
    Ok(RunOutput {
        name: scenario.name.clone(),
        dof_names: model.dof_names().iter().map(|s| s.to_string()).collect(),
        log,
        imu,
        report,
        final_state: state,
        tracking: (samples > 0).then(|| TrackingStats { rms: (sq_sum / samples as f64).sqrt(), max_abs }),
    })
}
