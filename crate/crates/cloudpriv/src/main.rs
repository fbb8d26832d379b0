use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cloudpriv::commands::{cmd_design, cmd_simulate, cmd_sweep, default_out_dir, SweepStatus};
use cloudpriv::verify::{self, Scope};
use cloudpriv::{CliError, CliResult};

/// Joint LQG controller and privacy-filter design for cloud-based control.
#[derive(Debug, Parser)]
#[command(name = "cloudpriv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the optimal filter and write design.json and design_steps.csv.
    Design {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_os_t = default_out_dir())]
        out_dir: PathBuf,
        /// Solver duality-gap tolerance, nats.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Privacy loss over a grid of budgets; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_os_t = default_out_dir())]
        out_dir: PathBuf,
        /// Comma-separated, strictly increasing budgets.
        #[arg(long, value_delimiter = ',')]
        delta_grid: Option<Vec<f64>>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Closed-loop Monte Carlo of a stored design; writes trace.csv and summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value_os_t = default_out_dir())]
        out_dir: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run invariant suites and re-check stored designs.
    Verify {
        /// all, maxdet, infoflow, leakage, distortion, or files.
        #[arg(long, default_value = "all")]
        scope: String,
        /// Design file to re-verify; repeatable.
        #[arg(long)]
        design: Vec<PathBuf>,
    },
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Design { config, out_dir, tolerance } => {
            let run = cmd_design(&config, &out_dir, tolerance)?;
            println!("privacy_bits {}", run.design.privacy_bits);
        }
        Command::Sweep { config, out_dir, delta_grid, tolerance } => {
            for point in cmd_sweep(&config, &out_dir, delta_grid, tolerance)? {
                match point.status {
                    SweepStatus::Ok(bits) => println!("delta {} privacy_bits {bits}", point.delta),
                    SweepStatus::Infeasible => println!("delta {} infeasible", point.delta),
                }
            }
        }
        Command::Simulate { config, design, out_dir, trials, seed } => {
            let run = cmd_simulate(&config, &design, &out_dir, trials, seed)?;
            let s = &run.summary;
            println!(
                "mean_cost {} std_error {} predicted_cost {} consistent {}",
                s.mean_cost, s.cost_std_error, s.predicted_cost, s.cost_consistent
            );
        }
        Command::Verify { scope, design } => {
            let scope = Scope::parse(&scope).ok_or_else(|| CliError::InvalidConfig(format!("unknown scope {scope:?}")))?;
            let files: Vec<&Path> = design.iter().map(PathBuf::as_path).collect();
            let table = verify::run(scope, &files);
            for check in &table.checks {
                println!("{check}");
            }
            let failures = table.failures();
            if !failures.is_empty() {
                let names: Vec<String> = failures.iter().map(|c| format!("{}: {}", c.suite, c.name)).collect();
                return Err(CliError::Verification(names.join("; ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::InvalidConfig(e.to_string().lines().next().unwrap_or_default().to_string());
            eprintln!("{}", err.diagnostic_line());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic_line());
            ExitCode::from(e.exit_code())
        }
    }
}
