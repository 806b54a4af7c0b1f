use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use finsler_forge::cli::{run, CliError, Command, RunConfig, RunOptions};

/// Finsler geometry engine: connections, curvature, exact-solution checks and cosmology.
#[derive(Parser, Debug)]
#[command(name = "finsler-forge", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; the table is written to `<out>/<command>.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (falls back to the config, then FINSLER_FORGE_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Residual tolerance for `verify`.
    #[arg(long)]
    tolerance: Option<f64>,
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
    let result = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.config.display())))
        .and_then(|src| RunConfig::parse(&src, &args.config.display().to_string()))
        .and_then(|cfg| {
            let opts = RunOptions {
                threads: args.threads,
                tolerance: args.tolerance,
                env_threads: std::env::var("FINSLER_FORGE_THREADS").ok(),
                ..RunOptions::new(args.command, &args.out)
            };
            run(&cfg, &opts)
        });
    match result {
        Ok(outcome) => {
            if outcome.exit == 0 {
                println!("{}", outcome.summary);
            } else {
                eprintln!("{}", outcome.summary);
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit as u8)
        }
        Err(e) => {
            eprintln!("finsler-forge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
