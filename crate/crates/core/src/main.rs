use std::path::{Path, PathBuf};
use std::io::Write;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use socnav::geometry::{solve_extrinsics, Point3};
use socnav::sim::scenario::extrinsics_to_yaml;
use socnav::sim::{self, compute_metrics, RunLog, Scenario};

#[derive(Parser)]
#[command(name = "socnav", version, about = "Socially aware navigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the run artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Only check the scenario file.
        #[arg(long)]
        validate: bool,
    },
    /// Solve the camera-to-LiDAR offset from one marker observation.
    Calibrate {
        /// Marker position in the camera frame, `x,y,z` in meters.
        #[arg(long, value_parser = parse_point3, allow_hyphen_values = true)]
        marker: Point3,
        /// LiDAR range to the same marker, meters.
        #[arg(long)]
        range: f64,
        /// Write the result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from a run.csv.
    Metrics {
        #[arg(long)]
        log: PathBuf,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn parse_point3(s: &str) -> Result<Point3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] => Ok(Point3::new(x, y, z)),
        _ => Err(format!("expected x,y,z, got {} values", parts.len())),
    }
}

/// Prints a line, ignoring a closed pipe.
fn print_out(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn validate(path: &Path) -> Result<()> {
    let s = Scenario::load(path)?;
    s.validate()?;
    print_out(&format!("{}: ok", path.display()));
    Ok(())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            validate: only_validate,
        } => {
            if only_validate {
                validate(&scenario)?;
                return Ok(ExitCode::SUCCESS);
            }
            let mut s = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let result = sim::run(&s)?;
            sim::write_outputs(&out, &s, &result)?;
            print_out(&serde_json::to_string_pretty(&result.metrics)?);
            Ok(if result.metrics.goal_reached {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Calibrate { marker, range, out } => {
            let e = solve_extrinsics(marker, range)?;
            let yaml = extrinsics_to_yaml(&e);
            match out {
                Some(path) => std::fs::write(&path, yaml).with_context(|| format!("writing {}", path.display()))?,
                None => print_out(yaml.trim_end()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics { log } => {
            let run = RunLog::load(&log).with_context(|| format!("reading {}", log.display()))?;
            if run.ticks.is_empty() {
                bail!("{} has no ticks", log.display());
            }
            let m = compute_metrics(&run)?;
            print_out(&serde_json::to_string_pretty(&m)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario } => {
            validate(&scenario)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            // thiserror messages often embed their source already
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
