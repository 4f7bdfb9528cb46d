use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jump_core::harness::{run_scenario, run_sweep, Grid, RunOptions};
use jump_core::trajgen::{CubicCurve, JumpParams, LaunchProfile, TimeScaling};

#[derive(Parser)]
#[command(name = "jump", version, about = "Squat-jump scenarios on a simulated humanoid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, write log.csv, summary.json and profile.csv, and check
    /// its expectations.
    Run {
        scenario: PathBuf,
        /// Artifact directory, overriding the scenario's.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the failing QP to failed_qp.txt on a controller fault.
        #[arg(long)]
        dump_qp: bool,
    },
    /// Run the cross product of a parameter grid and tabulate the summaries.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the sampled launch profile as CSV.
    DumpProfile {
        /// Apex rise above take-off [m].
        #[arg(long, default_value_t = 0.04)]
        height: f64,
        /// CoM displacement over the launch [m].
        #[arg(long, default_value_t = 0.11)]
        displacement: f64,
        #[arg(long, default_value_t = 9.81)]
        gravity: f64,
        /// Cubic curve coefficient; 3 is smoothstep.
        #[arg(long, default_value_t = 3.0)]
        curve_a: f64,
        /// Scale time so the launch ends at free-fall acceleration.
        #[arg(long)]
        final_acceleration: bool,
        /// Sample period [s].
        #[arg(long, default_value_t = 2.5e-3)]
        period: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> std::io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn fail(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { scenario, out, dump_qp } => {
            let opts = RunOptions { output: out.as_deref(), dump_qp };
            match run_scenario(&scenario, &opts) {
                Ok(report) => {
                    for v in &report.verdicts {
                        println!("{v}");
                    }
                    if let Some(f) = &report.summary.fault {
                        println!("FAULT {:?} at t = {:.4} s: {}", f.kind, f.time, f.message);
                    }
                    if let Some(f) = report.paired.as_ref().and_then(|p| p.fault.as_ref()) {
                        println!("FAULT (paired) {:?} at t = {:.4} s: {}", f.kind, f.time, f.message);
                    }
                    println!("artifacts in {}", report.output.display());
                    ExitCode::from(report.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { scenario, grid, out } => {
            let grid = match fs::read_to_string(&grid)
                .map_err(|e| e.to_string())
                .and_then(|t| Grid::from_json(&t, &grid).map_err(|e| e.to_string()))
            {
                Ok(g) => g,
                Err(e) => return fail(e),
            };
            let table = match run_sweep(&scenario, &grid) {
                Ok(t) => t,
                Err(e) => return fail(e),
            };
            let written = output(out.as_deref())
                .map_err(|e| e.to_string())
                .and_then(|w| table.write_csv(w).map_err(|e| e.to_string()));
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::DumpProfile { height, displacement, gravity, curve_a, final_acceleration, period, out } => {
            let scaling = if final_acceleration { TimeScaling::FinalAcceleration } else { TimeScaling::Displacement };
            let curve = CubicCurve { a: curve_a };
            let profile = JumpParams::new(height, displacement, gravity)
                .and_then(|p| curve.validate().map(|_| p))
                .and_then(|p| LaunchProfile::new(&p, curve, scaling));
            let profile = match profile {
                Ok(p) => p,
                Err(e) => return fail(e),
            };
            let written = output(out.as_deref())
                .map_err(|e| e.to_string())
                .and_then(|w| profile.write_csv(w, period).map_err(|e| e.to_string()));
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}
