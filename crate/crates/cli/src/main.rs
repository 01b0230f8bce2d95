use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use helio_cli::{execute, init_threads, load_config, CliError, Command};

/// Irradiance regression pipeline.
#[derive(Parser)]
#[command(name = "helio", version)]
struct Args {
    /// Command to run.
    #[arg(value_enum)]
    command: Command,
    /// Pipeline configuration (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a scalar config field, e.g. `--set split.seed=7`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

fn run(args: &Args) -> Result<(), CliError> {
    init_threads(std::env::var("HELIO_THREADS").ok().as_deref())?;
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let cfg = load_config(&text, &args.overrides)?;
    let manifest = execute(args.command, &cfg)?;
    for a in &manifest.artifacts {
        println!("{}  {}", a.sha256, cfg.output_dir.join(&a.file).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("helio: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
