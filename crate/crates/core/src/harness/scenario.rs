//! Scenario files: a TOML description of model, simulation settings, initial
//! state, controller, actuators, external wrenches and logging.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, UnitQuaternion, Vector3, Vector6};
use serde::Deserialize;

use super::controller::{ControllerSpec, Setpoint, SetpointShape, TorqueSchedule};
use super::HarnessError;
use crate::actuation::{ActuatorParams, JointActuator};
use crate::contact::contact_vertices;
use crate::fixtures;
use crate::kindyn::{compute_quantities, RobotState};
use crate::model::{load_model, Foot, FootGeometry, LoopClosure, ModelOptions, RobotModel};
use crate::stepper::{Integrator, SimConfig};

/// Relative slack when comparing rates against 1/dt.
const RATE_TOL: f64 = 1e-9;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    duration: f64,
    model: RawModel,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    controller: RawController,
    actuators: Option<RawActuators>,
    #[serde(default)]
    external_wrench: Vec<RawWrench>,
    #[serde(default)]
    log: RawLog,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    builtin: Option<String>,
    urdf: Option<PathBuf>,
    #[serde(default)]
    floating: bool,
    #[serde(default)]
    feet: Vec<RawFoot>,
    #[serde(default)]
    loop_closures: Vec<RawClosure>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawFoot {
    Rectangular {
        link: String,
        length: f64,
        width: f64,
        #[serde(default)]
        sole_height: f64,
    },
    Spherical {
        link: String,
        radius: f64,
        #[serde(default)]
        center_offset: [f64; 3],
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClosure {
    frame_a: String,
    frame_b: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: Option<f64>,
    gravity: Option<[f64; 3]>,
    ground_height: Option<f64>,
    mu: Option<f64>,
    activation_tol: Option<f64>,
    baumgarte_lambda: Option<f64>,
    integrator: Option<Integrator>,
    enforce_joint_limits: Option<bool>,
    qp_regularization: Option<f64>,
    tangential_weight: Option<f64>,
}

/// Per-joint values, either positional or by joint name.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum JointValues {
    List(Vec<f64>),
    Named(BTreeMap<String, f64>),
}

/// A gain or parameter given once for every joint or per joint.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PerJoint {
    Scalar(f64),
    Joints(JointValues),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    base_position: Option<[f64; 3]>,
    /// w, x, y, z
    base_orientation: Option<[f64; 4]>,
    base_rpy: Option<[f64; 3]>,
    joint_positions: Option<JointValues>,
    base_twist: Option<[f64; 6]>,
    joint_velocities: Option<JointValues>,
    #[serde(default)]
    rest_on_ground: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ControllerKind {
    #[default]
    None,
    PdGravity,
    TorqueFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    #[serde(rename = "type", default)]
    kind: ControllerKind,
    rate: Option<f64>,
    kp: Option<PerJoint>,
    kd: Option<PerJoint>,
    actuated: Option<Vec<String>>,
    file: Option<PathBuf>,
    setpoint: Option<RawSetpoint>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeKind {
    #[default]
    Constant,
    Sine,
    RaisedCosine,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSetpoint {
    #[serde(default)]
    shape: ShapeKind,
    base: Option<JointValues>,
    amplitude: Option<JointValues>,
    frequency: Option<f64>,
    period: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActuators {
    #[serde(default = "yes")]
    enabled: bool,
    motor_inertia: Option<PerJoint>,
    viscous: Option<PerJoint>,
    coulomb: Option<PerJoint>,
    smoothing: Option<PerJoint>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWrench {
    frame: String,
    #[serde(default)]
    force: [f64; 3],
    #[serde(default)]
    torque: [f64; 3],
    #[serde(default)]
    start: f64,
    #[serde(default = "forever")]
    end: f64,
}

fn forever() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLog {
    #[serde(default = "default_log_rate")]
    rate: f64,
    imu_frame: Option<String>,
    #[serde(default)]
    plot_data: bool,
}

impl Default for RawLog {
    fn default() -> Self {
        RawLog { rate: default_log_rate(), imu_frame: None, plot_data: false }
    }
}

fn default_log_rate() -> f64 {
    100.0
}

/// A constant world wrench on a frame over `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedWrench {
    pub frame: String,
    /// force then torque, world frame
    pub wrench: Vector6<f64>,
    pub start: f64,
    pub end: f64,
}

impl TimedWrench {
    pub fn active_at(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// A fully resolved scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: RobotModel,
    pub config: SimConfig,
    pub duration: f64,
    pub initial: RobotState,
    pub controller: ControllerSpec,
    /// Hz
    pub controller_rate: f64,
    pub actuators: ActuatorParams,
    pub external_wrenches: Vec<TimedWrench>,
    /// Hz
    pub log_rate: f64,
    pub imu_frame: Option<String>,
    pub plot_data: bool,
}

impl Scenario {
    /// Reads a scenario file. Relative URDF and torque-file paths resolve
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::parse(&text, dir, fallback)
    }

    pub fn from_toml(text: &str, base_dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::parse(text, base_dir.as_ref(), "scenario")
    }

    fn parse(text: &str, dir: &Path, fallback_name: &str) -> Result<Self, HarnessError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        let model = build_model(&raw.model, dir)?;
        let config = build_config(&raw.sim);
        let initial = build_initial(&model, &config, &raw.initial)?;
        let controller = build_controller(&model, &initial, &raw.controller, dir)?;
        let actuators = match &raw.actuators {
            Some(a) => build_actuators(&model, a)?,
            None => ActuatorParams::disabled(model.dof_count()),
        };
        let external_wrenches = raw
            .external_wrench
            .iter()
            .map(|w| {
                if model.frame(&w.frame).is_none() {
                    return Err(config_error(format!("external wrench on unknown frame '{}'", w.frame)));
                }
                let f = Vector3::from(w.force);
                let m = Vector3::from(w.torque);
                Ok(TimedWrench {
                    frame: w.frame.clone(),
                    wrench: Vector6::new(f.x, f.y, f.z, m.x, m.y, m.z),
                    start: w.start,
                    end: w.end,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(frame) = &raw.log.imu_frame {
            if model.frame(frame).is_none() {
                return Err(config_error(format!("unknown IMU frame '{frame}'")));
            }
        }
        let scenario = Scenario {
            name: raw.name.unwrap_or_else(|| fallback_name.to_string()),
            model,
            controller_rate: raw.controller.rate.unwrap_or(1.0 / config.dt),
            config,
            duration: raw.duration,
            initial,
            controller,
            actuators,
            external_wrenches,
            log_rate: raw.log.rate,
            imu_frame: raw.log.imu_frame,
            plot_data: raw.log.plot_data,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Replaces duration and/or time step, keeping the controller rate when
    /// it is still attainable and otherwise clamping it to 1/dt when the
    /// controller ran every step.
    pub fn with_overrides(mut self, duration: Option<f64>, dt: Option<f64>) -> Result<Self, HarnessError> {
        if let Some(d) = duration {
            self.duration = d;
        }
        if let Some(dt) = dt {
            let every_step = (self.controller_rate * self.config.dt - 1.0).abs() <= RATE_TOL;
            self.config.dt = dt;
            if every_step {
                self.controller_rate = 1.0 / dt;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.config.validate()?;
        let dt = self.config.dt;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(config_error("duration must be positive"));
        }
        for (what, rate) in [("controller rate", self.controller_rate), ("log rate", self.log_rate)] {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(config_error(format!("{what} must be positive")));
            }
            if rate * dt > 1.0 + RATE_TOL {
                return Err(config_error(format!("{what} {rate} Hz exceeds 1/dt = {} Hz", 1.0 / dt)));
            }
        }
        self.actuators.validate(self.model.dof_count()).map_err(|e| config_error(e.to_string()))?;
        self.initial.check(&self.model).map_err(|e| config_error(e.to_string()))?;
        Ok(())
    }

    /// Number of integration steps.
    pub fn steps(&self) -> u64 {
        (self.duration / self.config.dt).round() as u64
    }

    /// Steps between controller updates.
    pub fn controller_every(&self) -> u64 {
        ((1.0 / self.controller_rate) / self.config.dt).round().max(1.0) as u64
    }

    /// Steps between log rows.
    pub fn log_every(&self) -> u64 {
        ((1.0 / self.log_rate) / self.config.dt).round().max(1.0) as u64
    }
}

fn config_error(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn build_model(raw: &RawModel, dir: &Path) -> Result<RobotModel, HarnessError> {
    match (&raw.builtin, &raw.urdf) {
        (Some(name), None) => {
            if !raw.feet.is_empty() || !raw.loop_closures.is_empty() || raw.floating {
                return Err(config_error("built-in models carry their own base, feet and closures"));
            }
            Ok(fixtures::builtin(name)?)
        }
        (None, Some(urdf)) => {
            let path = dir.join(urdf);
            let text = fs::read_to_string(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
            let feet = raw
                .feet
                .iter()
                .map(|f| match f {
                    RawFoot::Rectangular { link, length, width, sole_height } => Foot {
                        link_name: link.clone(),
                        geometry: FootGeometry::Rectangular { length: *length, width: *width, sole_height: *sole_height },
                    },
                    RawFoot::Spherical { link, radius, center_offset } => Foot {
                        link_name: link.clone(),
                        geometry: FootGeometry::Spherical { radius: *radius, center_offset: Vector3::from(*center_offset) },
                    },
                })
                .collect();
            let loop_closures = raw.loop_closures.iter().map(|c| LoopClosure::new(&c.frame_a, &c.frame_b)).collect();
            Ok(load_model(&text, &ModelOptions { floating: raw.floating, feet, loop_closures })?)
        }
        _ => Err(config_error("[model] needs exactly one of 'builtin' or 'urdf'")),
    }
}

fn build_config(raw: &RawSim) -> SimConfig {
    let d = SimConfig::default();
    SimConfig {
        dt: raw.dt.unwrap_or(d.dt),
        gravity: raw.gravity.map(Vector3::from).unwrap_or(d.gravity),
        ground_height: raw.ground_height.unwrap_or(d.ground_height),
        mu: raw.mu.unwrap_or(d.mu),
        activation_tol: raw.activation_tol.unwrap_or(d.activation_tol),
        baumgarte_lambda: raw.baumgarte_lambda.unwrap_or(d.baumgarte_lambda),
        integrator: raw.integrator.unwrap_or(d.integrator),
        enforce_joint_limits: raw.enforce_joint_limits.unwrap_or(d.enforce_joint_limits),
        qp_regularization: raw.qp_regularization.unwrap_or(d.qp_regularization),
        tangential_weight: raw.tangential_weight.unwrap_or(d.tangential_weight),
    }
}

fn joint_vector(model: &RobotModel, values: &JointValues, fill: &DVector<f64>, what: &str) -> Result<DVector<f64>, HarnessError> {
    let n = model.dof_count();
    match values {
        JointValues::List(v) => {
            if v.len() != n {
                return Err(config_error(format!("{what}: expected {n} values, got {}", v.len())));
            }
            Ok(DVector::from_column_slice(v))
        }
        JointValues::Named(map) => {
            let names = model.dof_names();
            let mut out = fill.clone();
            for (name, value) in map {
                let i = names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| config_error(format!("{what}: unknown joint '{name}'")))?;
                out[i] = *value;
            }
            Ok(out)
        }
    }
}

fn per_joint(model: &RobotModel, value: Option<&PerJoint>, default: f64, what: &str) -> Result<DVector<f64>, HarnessError> {
    let n = model.dof_count();
    let base = DVector::from_element(n, default);
    match value {
        None => Ok(base),
        Some(PerJoint::Scalar(s)) => Ok(DVector::from_element(n, *s)),
        Some(PerJoint::Joints(v)) => joint_vector(model, v, &base, what),
    }
}

fn build_initial(model: &RobotModel, config: &SimConfig, raw: &RawInitial) -> Result<RobotState, HarnessError> {
    let mut s = RobotState::new(model);
    let n = model.dof_count();
    if let Some(q) = &raw.joint_positions {
        s.joint_positions = joint_vector(model, q, &DVector::zeros(n), "initial.joint_positions")?;
    }
    if let Some(qd) = &raw.joint_velocities {
        s.joint_velocities = joint_vector(model, qd, &DVector::zeros(n), "initial.joint_velocities")?;
    }
    let base_given = raw.base_position.is_some()
        || raw.base_orientation.is_some()
        || raw.base_rpy.is_some()
        || raw.base_twist.is_some();
    if base_given && !model.is_floating() {
        return Err(config_error("base pose and twist only apply to floating-base models"));
    }
    if let Some(p) = raw.base_position {
        s.base_position = Vector3::from(p);
    }
    match (raw.base_orientation, raw.base_rpy) {
        (Some(_), Some(_)) => return Err(config_error("give either base_orientation or base_rpy")),
        (Some([w, x, y, z]), None) => {
            let q = nalgebra::Quaternion::new(w, x, y, z);
            if !(q.norm() > 0.0 && q.norm().is_finite()) {
                return Err(config_error("base_orientation must be a non-zero quaternion"));
            }
            s.base_orientation = UnitQuaternion::from_quaternion(q);
        }
        (None, Some([r, p, y])) => s.base_orientation = UnitQuaternion::from_euler_angles(r, p, y),
        (None, None) => {}
    }
    if let Some(t) = raw.base_twist {
        s.base_twist = Vector6::from_column_slice(&t);
    }
    if raw.rest_on_ground {
        if !model.is_floating() || model.vertex_count() == 0 {
            return Err(config_error("rest_on_ground needs a floating base with feet"));
        }
        let kd = compute_quantities(model, &s, &config.gravity).map_err(|e| config_error(e.to_string()))?;
        let vertices = contact_vertices(model, &s, &kd).map_err(|e| config_error(e.to_string()))?;
        let lowest = vertices.iter().map(|v| v.position_world.z).fold(f64::INFINITY, f64::min);
        s.base_position.z += config.ground_height - lowest;
    }
    Ok(s)
}

fn build_controller(
    model: &RobotModel,
    initial: &RobotState,
    raw: &RawController,
    dir: &Path,
) -> Result<ControllerSpec, HarnessError> {
    let n = model.dof_count();
    match raw.kind {
        ControllerKind::None => {
            if raw.kp.is_some() || raw.kd.is_some() || raw.setpoint.is_some() || raw.file.is_some() {
                return Err(config_error("controller type 'none' takes no gains, setpoint or file"));
            }
            Ok(ControllerSpec::None)
        }
        ControllerKind::PdGravity => {
            let kp = per_joint(model, raw.kp.as_ref(), 0.0, "controller.kp")?;
            let kd = per_joint(model, raw.kd.as_ref(), 0.0, "controller.kd")?;
            if kp.iter().chain(kd.iter()).any(|g| !g.is_finite() || *g < 0.0) {
                return Err(config_error("controller gains must be finite and non-negative"));
            }
            let actuated = match &raw.actuated {
                None => vec![true; n],
                Some(names) => {
                    let all = model.dof_names();
                    for name in names {
                        if !all.contains(&name.as_str()) {
                            return Err(config_error(format!("controller.actuated: unknown joint '{name}'")));
                        }
                    }
                    all.iter().map(|d| names.iter().any(|n| n == d)).collect()
                }
            };
            let raw_sp = raw.setpoint.as_ref();
            let base = match raw_sp.and_then(|s| s.base.as_ref()) {
                Some(v) => joint_vector(model, v, &initial.joint_positions, "controller.setpoint.base")?,
                None => initial.joint_positions.clone(),
            };
            let amplitude = |s: &RawSetpoint| match &s.amplitude {
                Some(v) => joint_vector(model, v, &DVector::zeros(n), "controller.setpoint.amplitude"),
                None => Err(config_error("setpoint shape needs an amplitude")),
            };
            let shape = match raw_sp {
                None => SetpointShape::Constant,
                Some(s) => match s.shape {
                    ShapeKind::Constant => SetpointShape::Constant,
                    ShapeKind::Sine => {
                        let frequency = s.frequency.ok_or_else(|| config_error("sine setpoint needs a frequency"))?;
                        SetpointShape::Sine { amplitude: amplitude(s)?, frequency }
                    }
                    ShapeKind::RaisedCosine => {
                        let period = s.period.ok_or_else(|| config_error("raised_cosine setpoint needs a period"))?;
                        if !(period > 0.0) {
                            return Err(config_error("raised_cosine period must be positive"));
                        }
                        SetpointShape::RaisedCosine { amplitude: amplitude(s)?, period }
                    }
                },
            };
            Ok(ControllerSpec::PdGravity { kp, kd, actuated, setpoint: Setpoint { base, shape } })
        }
        ControllerKind::TorqueFile => {
            let file = raw.file.as_ref().ok_or_else(|| config_error("torque_file controller needs 'file'"))?;
            let path = dir.join(file);
            let text = fs::read_to_string(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
            Ok(ControllerSpec::TorqueFile(TorqueSchedule::from_csv(&text, n)?))
        }
    }
}

fn build_actuators(model: &RobotModel, raw: &RawActuators) -> Result<ActuatorParams, HarnessError> {
    let d = JointActuator::default();
    let gamma = per_joint(model, raw.motor_inertia.as_ref(), d.motor_inertia, "actuators.motor_inertia")?;
    let kv = per_joint(model, raw.viscous.as_ref(), d.viscous, "actuators.viscous")?;
    let kc = per_joint(model, raw.coulomb.as_ref(), d.coulomb, "actuators.coulomb")?;
    let eps = per_joint(model, raw.smoothing.as_ref(), d.smoothing, "actuators.smoothing")?;
    let joints = (0..model.dof_count())
        .map(|i| JointActuator { motor_inertia: gamma[i], viscous: kv[i], coulomb: kc[i], smoothing: eps[i] })
        .collect();
    let params = ActuatorParams { enabled: raw.enabled, joints };
    params.validate(model.dof_count()).map_err(|e| config_error(e.to_string()))?;
    Ok(params)
}
