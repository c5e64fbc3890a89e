use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vqsolve_cli::{gradcheck, report, run, CliError, ModeKind, RunConfig};

#[derive(Parser, Debug)]
#[command(
    version,
    about = "Variational solver runs for the hypoelastic and Burgers benchmarks"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize a benchmark and write run artifacts.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = ["exact", "shots", "stacked"])]
        mode: Option<String>,
    },
    /// Compare parameter-shift and finite-difference gradients.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize a finished run directory.
    Report { dir: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve { config, seed, mode } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(mode) = mode {
                cfg.mode = ModeKind::parse(&mode).expect("clap restricts the values");
            }
            let out = run::solve(&cfg)?;
            println!("run directory {}", out.dir.display());
            println!(
                "best loss {:.6e} (exact {:.6e})",
                out.state.best_loss, out.exact_loss
            );
            for (name, err) in &out.max_errors {
                println!("max |{name} - exact| {err:.3e}");
            }
            println!(
                "{} iterations, {:.1} s",
                out.state.history.len(),
                out.wall_time
            );
        }
        Command::Gradcheck { config } => {
            let report = gradcheck::gradcheck(&load(&config)?)?;
            print!("{}", report.render());
            if !report.passed() {
                return Err(CliError::GradcheckFailed {
                    deviation: report.max_deviation,
                    tolerance: report.tolerance,
                });
            }
        }
        Command::Report { dir } => print!("{}", report::report(&dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Args::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
