//! Trajectory logs, timing reports and the files written for a run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::imu::ImuReading;
use super::HarnessError;
use crate::contact::VertexId;
use crate::model::RobotModel;
use crate::stepper::{OutputBus, PhaseTimes};

/// Sampled trajectory with one column per named quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    vertices: Vec<VertexId>,
}

impl TrajectoryLog {
    /// Columns: t, base pose (x y z qw qx qy qz), joint positions, base twist
    /// (vx vy vz wx wy wz), joint velocities, contact force per vertex
    /// (fx fy fz), applied joint torques. Base columns are present for
    /// fixed-base models too.
    pub fn new(model: &RobotModel) -> Self {
        let dofs = model.dof_names();
        let mut vertices: Vec<VertexId> = model
            .feet()
            .iter()
            .flat_map(|f| (0..f.geometry.vertex_count()).map(move |i| VertexId::new(&f.link_name, i)))
            .collect();
        vertices.sort();
        let mut header = vec!["t".to_string()];
        header.extend(["base_x", "base_y", "base_z", "base_qw", "base_qx", "base_qy", "base_qz"].map(String::from));
        header.extend(dofs.iter().map(|d| format!("q_{d}")));
        header.extend(["base_vx", "base_vy", "base_vz", "base_wx", "base_wy", "base_wz"].map(String::from));
        header.extend(dofs.iter().map(|d| format!("qd_{d}")));
        for v in &vertices {
            for axis in ["x", "y", "z"] {
                header.push(format!("f_{}_{}_{axis}", v.foot, v.index));
            }
        }
        header.extend(dofs.iter().map(|d| format!("tau_{d}")));
        TrajectoryLog { header, rows: Vec::new(), vertices }
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn record(&mut self, t: f64, bus: &OutputBus) {
        let s = &bus.state;
        let q = s.base_orientation.quaternion();
        let mut row = Vec::with_capacity(self.header.len());
        row.push(t);
        row.extend(s.base_position.iter());
        row.extend([q.w, q.i, q.j, q.k]);
        row.extend(s.joint_positions.iter());
        row.extend(s.base_twist.iter());
        row.extend(s.joint_velocities.iter());
        for v in &self.vertices {
            match bus.contact.forces.get(v) {
                Some(f) => row.extend(f.iter()),
                None => row.extend([0.0; 3]),
            }
        }
        row.extend(bus.applied_torques.iter());
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub reading: ImuReading,
}

/// Wall-clock accounting of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub scenario: String,
    /// s
    pub simulated_time: f64,
    /// s
    pub wall_time: f64,
    pub real_time_factor: f64,
    pub steps: u64,
    pub phases: PhaseTimes,
    pub calls: PhaseCalls,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseCalls {
    pub kindyn: u64,
    pub contact_qp: u64,
    pub integration: u64,
    pub impacts: u64,
}

impl TimingReport {
    pub fn new(scenario: &str, simulated_time: f64, wall_time: f64, steps: u64, phases: PhaseTimes, calls: PhaseCalls) -> Self {
        TimingReport {
            scenario: scenario.to_string(),
            simulated_time,
            wall_time,
            real_time_factor: simulated_time / wall_time,
            steps,
            phases,
            calls,
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: simulated {:.3} s in {:.3} s wall, RTF {:.2} (kindyn {:.3} s, contact/QP {:.3} s, integration {:.3} s)",
            self.scenario,
            self.simulated_time,
            self.wall_time,
            self.real_time_factor,
            self.phases.kindyn,
            self.phases.contact_qp,
            self.phases.integration,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputOptions {
    pub trajectory: bool,
    pub plot_data: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions { trajectory: true, plot_data: false }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io { path: path.to_path_buf(), source: e }
}

fn create(path: &Path) -> Result<fs::File, HarnessError> {
    fs::File::create(path).map_err(io_err(path))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io { path: path.to_path_buf(), source: e.into() }
}

/// Writes `timing.json` and, as requested, `trajectory.csv`, `imu.csv` and
/// one `plot/<joint>.dat` per joint into `dir`. Returns the written paths.
pub fn emit_outputs(run: &super::RunOutput, dir: &Path, options: OutputOptions) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let path = dir.join("timing.json");
    let json = serde_json::to_string_pretty(&run.report).map_err(|e| HarnessError::Parse(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    written.push(path);

    if options.trajectory {
        let path = dir.join("trajectory.csv");
        run.log.write_csv(create(&path)?).map_err(csv_err(&path))?;
        written.push(path);

        if !run.imu.is_empty() {
            let path = dir.join("imu.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["t", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "ax", "ay", "az"]).map_err(csv_err(&path))?;
            for s in &run.imu {
                let q = s.reading.orientation.quaternion();
                let mut row = vec![s.t, q.w, q.i, q.j, q.k];
                row.extend(s.reading.angular_velocity.iter());
                row.extend(s.reading.linear_acceleration.iter());
                w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err(&path))?;
            }
            w.flush().map_err(io_err(&path))?;
            written.push(path);
        }
    }

    if options.plot_data {
        let plot_dir = dir.join("plot");
        fs::create_dir_all(&plot_dir).map_err(io_err(&plot_dir))?;
        let t = run.log.column("t").unwrap_or_default();
        for name in run.dof_names.iter() {
            let q = run.log.column(&format!("q_{name}")).unwrap_or_default();
            let qd = run.log.column(&format!("qd_{name}")).unwrap_or_default();
            let tau = run.log.column(&format!("tau_{name}")).unwrap_or_default();
            let path = plot_dir.join(format!("{name}.dat"));
            let mut text = String::from("# t q qd tau\n");
            for i in 0..t.len() {
                text.push_str(&format!("{} {} {} {}\n", t[i], q[i], qd[i], tau[i]));
            }
            fs::write(&path, text).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}
