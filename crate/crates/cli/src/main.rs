mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Exit status 1 covers usage and validation problems, 2 covers files that
/// cannot be read, parsed or written.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<palf_core::Error> for CliError {
    fn from(e: palf_core::Error) -> Self {
        match e {
            palf_core::Error::Validation { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<palf_service::ServiceError> for CliError {
    fn from(e: palf_service::ServiceError) -> Self {
        match e {
            palf_service::ServiceError::Config(_) | palf_service::ServiceError::Validation { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Io(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .without_time()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();

    let result = match &cli.command {
        Command::Preannotate(a) => commands::preannotate(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Serve(a) => commands::serve(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
