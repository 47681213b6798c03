use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nestt::harness::{self, ExperimentConfig};
use nestt::NesttError;

#[derive(Parser)]
#[command(name = "nestt", version, about = "Run and summarize splitting-method experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method and seed, writing per-run and combined CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize the runs found in an output directory.
    Summarize {
        #[arg(long)]
        input: PathBuf,
    },
    /// Generate the configured instance and save it as text.
    GenInstance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, NesttError> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::parse(&text)
}

fn run(cli: Cli) -> Result<(), NesttError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let records = harness::run_experiment(&cfg)?;
            println!("wrote {} runs to {}", records.len(), cfg.output_dir.display());
            print!("{}", harness::render_summary(&harness::summarize(&records)?));
        }
        Command::Summarize { input } => print!("{}", harness::summarize_dir(&input)?),
        Command::GenInstance { config, out } => {
            harness::gen_instance(&load_config(&config)?, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &NesttError) -> u8 {
    match err {
        NesttError::Config { .. } | NesttError::Parse { .. } => 2,
        e if e.is_numerical() => 3,
        NesttError::InvalidParameters(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
