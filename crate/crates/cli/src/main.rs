use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use nullcone::run::STATUS_CONFIG;
use nullcone::{configure_threads, parse_config, run, CliError};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Verify,
    Flow,
    Solve,
    Foliate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Flow => "flow",
            Command::Solve => "solve",
            Command::Foliate => "foliate",
        }
    }
}

/// Null-cone cross-section laboratory.
#[derive(Debug, Parser)]
#[command(name = "nullcone", version)]
struct Cli {
    /// Task to run; must match `task.kind` in the configuration.
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed overriding the configuration's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(STATUS_CONFIG as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| CliError::Io { path: cli.config.clone(), source: e })?;
    let mut config = parse_config(&text)?;
    if config.task.kind() != cli.command.name() {
        return Err(CliError::Config {
            path: "task.kind".into(),
            message: format!("config describes a {} task but `{}` was requested", config.task.kind(), cli.command.name()),
        });
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    configure_threads()?;
    let manifest = run(config, &cli.out)?;
    eprintln!(
        "{}: status {} ({})",
        manifest.task,
        manifest.status,
        manifest.reason.as_deref().unwrap_or("all gates passed")
    );
    Ok(manifest.status)
}
