mod args;
mod commands;
mod manifest;
mod repro;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use manifest::RunManifest;

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_PROPERTY: u8 = 4;

/// A failed run: exit code plus a one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::usage(format!("{}: {e}", path.display()))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<gnormal_core::Error> for Failure {
    fn from(e: gnormal_core::Error) -> Self {
        let code = match e {
            gnormal_core::Error::Numerical { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

pub fn write_files(outcome: &commands::Outcome) -> Result<(), Failure> {
    for (_, path, bytes) in &outcome.files {
        std::fs::write(path, bytes).map_err(|e| Failure::io(path, e))?;
    }
    Ok(())
}

fn run(cli: Cli, argv: Vec<String>) -> Result<u8, Failure> {
    let outcome = match &cli.command {
        Command::Replay(r) => manifest::replay(&r.manifest_file)?,
        command => commands::execute(command)?,
    };
    write_files(&outcome)?;
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(&outcome.stdout)
        .and_then(|()| stdout.flush())
        .map_err(|e| Failure::internal(format!("stdout: {e}")))?;

    let manifest = RunManifest::new(&cli.command, argv, &outcome);
    match cli.manifest.as_deref().or(outcome.manifest_path.as_deref()) {
        Some(path) => manifest.write(path)?,
        None => eprintln!("{}", manifest.to_json()),
    }
    Ok(if outcome.holds { 0 } else { EXIT_PROPERTY })
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    match run(cli, argv.into_iter().skip(1).collect()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
