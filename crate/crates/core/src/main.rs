use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driven_cavity::cli::{self, RunOptions, EXIT_OK, EXIT_ORACLE};
use driven_cavity::Error;

/// Cavity emission spectra from a harmonically driven dipole.
///
/// All frequencies and rates are in units of the drive frequency.
#[derive(Debug, Parser)]
#[command(name = "driven-cavity", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for Monte-Carlo ensembles (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Replace the scenario's Monte-Carlo seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the requested artifacts and write them with a manifest.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle suite and print one line per check.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Fit harmonic coefficients to the scenario's sampled dipole series.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

fn with_workers<T>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error>
where
    T: Send,
{
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::Config { path: "--workers".into(), reason: "must be at least 1".into() }),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Config { path: "--workers".into(), reason: e.to_string() }),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(cli::exit_code(e) as u8)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match args.command {
        Command::Run { common, out } => {
            let opts = RunOptions {
                config: &common.config,
                out: &out,
                seed_override: common.seed_override,
            };
            match with_workers(common.workers, || cli::run(&opts)).and_then(|r| r) {
                Ok(manifest) => {
                    println!("wrote {} files to {}", manifest.files.len() + 1, out.display());
                    for (name, c) in &manifest.crosschecks {
                        println!(
                            "  {name}: max relative deviation {:.3e}{}",
                            c.max_relative_deviation,
                            if c.passed { "" } else { " (FAILED)" }
                        );
                    }
                    if manifest.all_passed() {
                        ExitCode::from(EXIT_OK as u8)
                    } else {
                        ExitCode::from(EXIT_ORACLE as u8)
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Verify { common } => {
            match with_workers(common.workers, || cli::verify(&common.config, common.seed_override))
                .and_then(|r| r)
            {
                Ok(reports) => {
                    for r in &reports {
                        println!("{r}");
                    }
                    let failed = reports.iter().filter(|r| !r.passed()).count();
                    println!("{} of {} checks passed", reports.len() - failed, reports.len());
                    if failed == 0 {
                        ExitCode::from(EXIT_OK as u8)
                    } else {
                        ExitCode::from(EXIT_ORACLE as u8)
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Decompose { common, out } => match cli::decompose(&common.config, &out) {
            Ok(path) => {
                println!("wrote {}", path.display());
                ExitCode::from(EXIT_OK as u8)
            }
            Err(e) => fail(&e),
        },
    }
}
