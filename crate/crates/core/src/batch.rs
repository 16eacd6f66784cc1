//! Batches of independent work: scenario runs and kinematics/dynamics sweeps
//! over many states. Each item runs single-threaded; with the `parallel`
//! feature, items are spread over the rayon pool.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::harness::{run_scenario, HarnessError, RunOutput, Scenario};
use crate::kindyn::{bias_forces, mass_matrix, KinDynError, RobotState};
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl ExecutionMode {
    /// Whether `Parallel` actually runs on multiple threads in this build.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

fn map<T, R, F>(items: &[T], mode: ExecutionMode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecutionMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Runs every scenario; results keep the input order.
pub fn run_batch(scenarios: &[Scenario], mode: ExecutionMode) -> Vec<Result<RunOutput, HarnessError>> {
    map(scenarios, mode, run_scenario)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSample {
    pub mass_matrix: DMatrix<f64>,
    pub bias_forces: DVector<f64>,
}

/// M(q) and h(q, ν) for every state.
pub fn dynamics_sweep(
    model: &RobotModel,
    states: &[RobotState],
    gravity: &Vector3<f64>,
    mode: ExecutionMode,
) -> Vec<Result<DynamicsSample, KinDynError>> {
    map(states, mode, |s| {
        Ok(DynamicsSample { mass_matrix: mass_matrix(model, s)?, bias_forces: bias_forces(model, s, gravity)? })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::kindyn::default_gravity;

    #[test]
    fn modes_agree_exactly() {
        let model = fixtures::humanoid();
        let states: Vec<_> = (0..16).map(|s| fixtures::random_state(&model, s)).collect();
        let g = default_gravity();
        let a = dynamics_sweep(&model, &states, &g, ExecutionMode::Sequential);
        let b = dynamics_sweep(&model, &states, &g, ExecutionMode::Parallel);
        assert_eq!(a, b);
    }
}
