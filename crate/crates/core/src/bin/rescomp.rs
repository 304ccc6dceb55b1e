use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rescomp::bench::{self, RunOptions, EXIT_STRUCTURAL};
use rescomp::properties::{self, PropertyOptions};

#[derive(Parser)]
#[command(name = "rescomp", version, about = "Relaxed solvers for composite monotone inclusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the instance described by a JSON config and verify the result.
    Solve {
        config: PathBuf,
        /// Write the per-iteration trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Accept maps with norm above 1.
        #[arg(long)]
        unsafe_norm: bool,
    },
    /// Run every property suite.
    Props {
        #[arg(long, default_value_t = properties::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = properties::DEFAULT_TRIALS)]
        trials: usize,
        /// Negative control: corrupt the adjoint used by the adjoint suite.
        #[arg(long, hide = true)]
        corrupt_adjoint: bool,
    },
    /// Print the closed-form reference solution of a config.
    Oracle { config: PathBuf },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = |trace, unsafe_norm| RunOptions {
        trace,
        unsafe_norm,
        seed_override: None,
    }
    .with_env_seed();
    match cli.command {
        Command::Solve {
            config,
            trace,
            unsafe_norm,
        } => {
            let opts = match opts(trace, unsafe_norm) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(EXIT_STRUCTURAL);
                }
            };
            let outcome = bench::run(&config, &opts);
            if let Some(report) = &outcome.report {
                println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
            }
            if let Some(e) = &outcome.error {
                eprintln!("error: {e}");
            }
            code(outcome.code)
        }
        Command::Props {
            seed,
            trials,
            corrupt_adjoint,
        } => {
            let popts = PropertyOptions { corrupt_adjoint };
            code(properties::run_properties(seed, trials, &popts, &mut std::io::stdout()))
        }
        Command::Oracle { config } => {
            let result = opts(None, false).and_then(|o| bench::oracle(&config, &o));
            match result {
                Ok(sol) => {
                    println!("{}", serde_json::to_string_pretty(&sol).expect("oracle serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code(EXIT_STRUCTURAL)
                }
            }
        }
    }
}
