use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qtraj::batch::{self, RunOptions, RunOutcome};
use qtraj::config::RunConfig;

#[derive(Parser)]
#[command(name = "qtraj", version, about = "Quantum trajectory ensembles for driven, damped oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point of a configuration.
    Run {
        config: PathBuf,
        /// Override the configured run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Continue from existing per-trajectory checkpoints.
        #[arg(long)]
        resume: bool,
        /// Output directory; defaults to the configuration's `output_dir`,
        /// then `$QTRAJ_OUTPUT_DIR`, then `qtraj-out`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Stop after this many new trajectories (the run stays resumable).
        #[arg(long, hide = true)]
        max_new_trajectories: Option<u64>,
    },
    /// Write a gnuplot data file and script from one or more summaries.
    Plot {
        #[arg(required = true)]
        summary: Vec<PathBuf>,
        /// Output stem; `.dat` and `.gp` are appended.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check a configuration and report the derived parameters.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            resume,
            output_dir,
            max_new_trajectories,
        } => {
            let config = RunConfig::load(&config).map_err(|e| e.to_string())?;
            let options = RunOptions {
                seed,
                workers,
                resume,
                output_dir,
                max_new_trajectories,
            };
            match batch::run(&config, &options).map_err(|e| e.to_string())? {
                RunOutcome::Complete { run_dir, points } => {
                    for p in &points {
                        let coords: Vec<String> = p.coordinates.iter().map(|(k, v)| format!("{k}={v:e}")).collect();
                        println!(
                            "point {} {}: {} = {:.6} ± {:.6} settled={} valid={} invalid={} max_leakage={:.3e}",
                            p.index,
                            coords.join(" "),
                            p.observable,
                            p.result.mean,
                            p.result.stderr,
                            p.result.settled,
                            p.valid,
                            p.invalid,
                            p.max_leakage
                        );
                    }
                    println!("wrote {}", run_dir.join(batch::SUMMARY_FILE).display());
                    Ok(ExitCode::SUCCESS)
                }
                RunOutcome::Interrupted { run_dir, completed } => {
                    println!(
                        "stopped after {completed} complete point(s); resume with --resume ({})",
                        run_dir.display()
                    );
                    Ok(ExitCode::from(3))
                }
            }
        }
        Command::Plot { summary, output } => {
            let stem = output.unwrap_or_else(|| summary[0].with_extension(""));
            let files = batch::emit_plot(&summary, &stem).map_err(|e| e.to_string())?;
            println!("wrote {} and {}", files.data.display(), files.script.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let config = RunConfig::load(&config).map_err(|e| e.to_string())?;
            print!("{}", config.describe().map_err(|e| e.to_string())?);
            println!("ok");
            Ok(ExitCode::SUCCESS)
        }
    }
}
