use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use weakvalue::runner::{self, ExperimentConfig, Format, Overrides, RunOptions, WORKERS_ENV};
use weakvalue::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Run a weak-value / classical conditioned-measurement experiment from a JSON config.
#[derive(Debug, Parser)]
#[command(name = "weakvalue", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Suppress the one-line summary.
    #[arg(long)]
    quiet: bool,
}

fn workers() -> Result<Option<usize>, Error> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{WORKERS_ENV}: `{v}` is not a worker count"))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        let text = std::fs::read_to_string(&cli.config)
            .map_err(|e| Error::Config(format!("reading {}: {e}", cli.config.display())))?;
        let overrides = Overrides {
            seed: cli.seed,
            out: cli.out.clone(),
            format: cli.format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            }),
        };
        let config = ExperimentConfig::from_json(&text)?.apply(&overrides)?;
        runner::run(&config, RunOptions { workers: workers()? })
    })();
    match result {
        Ok(out) => {
            if !cli.quiet {
                match out.path {
                    Some(p) => println!("{} -> {}", out.summary, p.display()),
                    None => eprintln!("{}", out.summary),
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::exit_code(&e))
        }
    }
}
