//! Joint-torque controllers driven by the scenario harness.

use std::f64::consts::PI;

use nalgebra::{DVector, Vector3};

use super::HarnessError;
use crate::kindyn::{gravity_forces, KinDynError, RobotState};
use crate::model::RobotModel;

/// Joint-space reference trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Setpoint {
    pub base: DVector<f64>,
    pub shape: SetpointShape,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetpointShape {
    Constant,
    /// base + A sin(2π f t)
    Sine { amplitude: DVector<f64>, frequency: f64 },
    /// base + A (1 − cos(2π t / period)) / 2
    RaisedCosine { amplitude: DVector<f64>, period: f64 },
}

impl Setpoint {
    pub fn constant(base: DVector<f64>) -> Self {
        Setpoint { base, shape: SetpointShape::Constant }
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        match &self.shape {
            SetpointShape::Constant => self.base.clone(),
            SetpointShape::Sine { amplitude, frequency } => &self.base + amplitude * (2.0 * PI * frequency * t).sin(),
            SetpointShape::RaisedCosine { amplitude, period } => {
                &self.base + amplitude * (0.5 * (1.0 - (2.0 * PI * t / period).cos()))
            }
        }
    }
}

/// Joint torques sampled in time, held constant until the next sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueSchedule {
    pub times: Vec<f64>,
    pub torques: Vec<DVector<f64>>,
}

impl TorqueSchedule {
    /// Parses a CSV whose first column is time and the remaining columns are
    /// joint torques in DoF order. A header row is optional.
    pub fn from_csv(text: &str, dofs: usize) -> Result<Self, HarnessError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut times = Vec::new();
        let mut torques = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| HarnessError::Parse(format!("torque file: {e}")))?;
            let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if line == 0 => continue,
                Err(e) => return Err(HarnessError::Parse(format!("torque file line {}: {e}", line + 1))),
            };
            if values.len() != dofs + 1 {
                return Err(HarnessError::Parse(format!(
                    "torque file line {}: expected {} columns, got {}",
                    line + 1,
                    dofs + 1,
                    values.len()
                )));
            }
            if times.last().is_some_and(|&prev| values[0] <= prev) {
                return Err(HarnessError::Parse(format!("torque file line {}: time must increase", line + 1)));
            }
            times.push(values[0]);
            torques.push(DVector::from_column_slice(&values[1..]));
        }
        if times.is_empty() {
            return Err(HarnessError::Parse("torque file has no rows".into()));
        }
        Ok(TorqueSchedule { times, torques })
    }

    /// Latest sample at or before `t`; zero before the first one.
    pub fn at(&self, t: f64) -> DVector<f64> {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            DVector::zeros(self.torques[0].len())
        } else {
            self.torques[idx - 1].clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    None,
    PdGravity { kp: DVector<f64>, kd: DVector<f64>, actuated: Vec<bool>, setpoint: Setpoint },
    TorqueFile(TorqueSchedule),
}

impl ControllerSpec {
    pub fn command(
        &self,
        model: &RobotModel,
        state: &RobotState,
        t: f64,
        gravity: &Vector3<f64>,
    ) -> Result<DVector<f64>, KinDynError> {
        match self {
            ControllerSpec::None => Ok(DVector::zeros(model.dof_count())),
            ControllerSpec::PdGravity { kp, kd, actuated, setpoint } => {
                let mut tau = pd_gravity_controller(model, state, &setpoint.at(t), kp, kd, gravity)?;
                for (i, on) in actuated.iter().enumerate() {
                    if !on {
                        tau[i] = 0.0;
                    }
                }
                Ok(tau)
            }
            ControllerSpec::TorqueFile(s) => Ok(s.at(t)),
        }
    }

    /// Reference joint positions at `t`, for controllers that track one.
    pub fn reference(&self, t: f64) -> Option<DVector<f64>> {
        match self {
            ControllerSpec::PdGravity { setpoint, .. } => Some(setpoint.at(t)),
            _ => None,
        }
    }

    pub fn actuated(&self) -> Option<&[bool]> {
        match self {
            ControllerSpec::PdGravity { actuated, .. } => Some(actuated),
            _ => None,
        }
    }
}

/// τ = g(q) + K_p (q_des − q) − K_d q̇, with g(q) the joint rows of the
/// gravity generalized force.
pub fn pd_gravity_controller(
    model: &RobotModel,
    state: &RobotState,
    q_des: &DVector<f64>,
    kp: &DVector<f64>,
    kd: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, KinDynError> {
    let n = model.dof_count();
    for (what, v) in [("q_des", q_des), ("kp", kp), ("kd", kd)] {
        if v.len() != n {
            return Err(KinDynError::Dimension { what, expected: n, got: v.len() });
        }
    }
    let g = gravity_forces(model, state, gravity)?;
    let g_joint = g.rows(model.base_dofs(), n);
    Ok(g_joint + kp.component_mul(&(q_des - &state.joint_positions)) - kd.component_mul(&state.joint_velocities))
}
