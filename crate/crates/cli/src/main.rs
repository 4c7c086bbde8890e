//! `renkit`: run declarative verification scenarios for renewal and
//! linearwise processes.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a run
//! errors, 2 on usage, parse, or validation problems.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use renewal_kit_cli::exec::{run_scenario, verify_all, ExecError, RunConfig};
use renewal_kit_cli::scenario::load_scenario;

#[derive(Parser)]
#[command(name = "renkit", version, about = "Verification runner for renewal and linearwise jump processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override every scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool for replica simulation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for report files.
    #[arg(long, global = true, default_value = "reports")]
    out_dir: PathBuf,
    /// Override every scenario's replica count.
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Override the renewal-function grid step.
    #[arg(long, global = true)]
    grid_step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and evaluate its checks.
    Run { file: PathBuf },
    /// Run every bundled scenario and print the verification matrix.
    VerifyAll {
        /// Directory holding the scenario files.
        #[arg(long, default_value = "scenarios")]
        scenarios_dir: PathBuf,
    },
    /// List scenario files with their modes and matrix claims.
    ListScenarios {
        /// Directory holding the scenario files.
        #[arg(long, default_value = "scenarios")]
        scenarios_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = RunConfig {
        seed: cli.seed,
        workers: cli.workers,
        replicas: cli.replicas,
        grid_step: cli.grid_step,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Run { file } => {
            let sc = match load_scenario(&file) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            match run_scenario(&sc, &cfg) {
                Ok(outcome) => {
                    for c in &outcome.checks {
                        let verdict = if c.passed { "pass" } else { "FAIL" };
                        println!("{verdict}  {}: {}", c.label, c.detail);
                    }
                    for f in &outcome.files {
                        println!("wrote {}", f.display());
                    }
                    if outcome.passed() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("scenario {} failed", outcome.scenario);
                        ExitCode::from(1)
                    }
                }
                Err(ExecError::Scenario(e)) => {
                    eprintln!("{e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::VerifyAll { scenarios_dir } => match verify_all(&scenarios_dir, &cfg) {
            Ok(summary) => {
                print!("{}", summary.render());
                if summary.all_passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Command::ListScenarios { scenarios_dir } => {
            let entries = match std::fs::read_dir(&scenarios_dir) {
                Ok(entries) => entries,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", scenarios_dir.display());
                    return ExitCode::from(2);
                }
            };
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|x| x.to_str()) == Some("json"))
                .collect();
            paths.sort();
            for path in paths {
                let file = path.file_name().and_then(|n| n.to_str()).unwrap_or("?");
                match load_scenario(&path) {
                    Ok(sc) => {
                        let claims: Vec<String> =
                            sc.criteria.iter().map(|c| format!("C{c:02}")).collect();
                        println!("{file:<28} {:<12} {}", sc.mode.as_str(), claims.join(" "));
                    }
                    Err(e) => println!("{file:<28} ERROR: {e}"),
                }
            }
            ExitCode::SUCCESS
        }
    }
}
