use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wbsim::batch::{run_batch, ExecutionMode};
use wbsim::harness::{emit_outputs, HarnessError, OutputOptions, Scenario};

/// Runs simulation scenarios and writes trajectories and timing reports.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// Scenario TOML files.
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    /// Output directory; each scenario writes into a subdirectory named after it.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the simulated duration (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Override the integration time step (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Skip trajectory, IMU and plot files.
    #[arg(long)]
    no_log: bool,
    /// Only print timing reports; write nothing.
    #[arg(long)]
    report_only: bool,
    /// Run scenarios one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

fn fail(what: &str, e: &HarnessError) -> ExitCode {
    eprintln!("error: {what}: {} ({})", e, e.class());
    match e {
        HarnessError::Sim { .. } | HarnessError::Controller { .. } => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut scenarios = Vec::new();
    for path in &args.scenarios {
        match Scenario::load(path).and_then(|s| s.with_overrides(args.duration, args.dt)) {
            Ok(s) => scenarios.push(s),
            Err(e) => return fail(&path.display().to_string(), &e),
        }
    }
    let mode = if args.sequential { ExecutionMode::Sequential } else { ExecutionMode::Parallel };
    let mut code = ExitCode::SUCCESS;
    for (scenario, result) in scenarios.iter().zip(run_batch(&scenarios, mode)) {
        let run = match result {
            Ok(run) => run,
            Err(e) => {
                code = fail(&scenario.name, &e);
                continue;
            }
        };
        println!("{}", run.report.summary());
        if args.report_only {
            continue;
        }
        let options = OutputOptions { trajectory: !args.no_log, plot_data: scenario.plot_data && !args.no_log };
        if let Err(e) = emit_outputs(&run, &args.out_dir.join(&run.name), options) {
            code = fail(&scenario.name, &e);
        }
    }
    code
}
