use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use liftseg::{run_pipeline, validate_config, CliError, RunConfig, RunOptions};

/// Multiclass image segmentation by feature lifting and TV-regularized
/// primal-dual optimization.
#[derive(Debug, Parser)]
#[command(name = "liftseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write artifacts here instead of the configured directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Reserved. The pipeline has no randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for filtering and per-channel updates.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Only report errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full pipeline.
    Run { config: PathBuf },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate { config } => {
            let cfg = RunConfig::from_path(config)?;
            let diagnostics = validate_config(&cfg);
            if diagnostics.is_empty() {
                if !cli.quiet {
                    println!("{}: ok", config.display());
                }
                return Ok(());
            }
            for d in &diagnostics {
                println!("{d}");
            }
            Err(CliError::Config(format!(
                "{}: {} problem(s) found",
                config.display(),
                diagnostics.len()
            )))
        }
        Command::Run { config } => {
            let cfg = RunConfig::from_path(config)?;
            let opts = RunOptions {
                output_dir: cli.output_dir.clone(),
                quiet: cli.quiet,
            };
            let summary = run_pipeline(&cfg, &opts)?;
            if let (false, Some(m)) = (cli.quiet, &summary.metrics) {
                print!("{}", m.to_table());
            }
            Ok(())
        }
    }
}
