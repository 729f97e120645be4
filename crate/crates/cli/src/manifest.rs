use std::collections::BTreeMap;
use std::path::Path;

use clap::Parser;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{Cli, Command};
use crate::commands::{self, Outcome};
use crate::Failure;

/// What was run, with what, and hashes of what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Resolved arguments, defaults included.
    pub params: serde_json::Value,
    /// Command line without the program name; replaying it reproduces the run.
    pub args: Vec<String>,
    /// SHA-256 of stdout, every output file and every input file.
    pub checksums: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn checksums(outcome: &Outcome) -> BTreeMap<String, String> {
    let mut sums = BTreeMap::new();
    sums.insert("stdout".to_string(), sha256_hex(&outcome.stdout));
    for (label, _, bytes) in &outcome.files {
        sums.insert(label.clone(), sha256_hex(bytes));
    }
    for (label, bytes) in &outcome.inputs {
        sums.insert(format!("input:{label}"), sha256_hex(bytes));
    }
    sums
}

impl RunManifest {
    pub fn new(command: &Command, args: Vec<String>, outcome: &Outcome) -> Self {
        let mut params = serde_json::to_value(command).unwrap_or(serde_json::Value::Null);
        if let Some(map) = params.as_object_mut() {
            map.remove("subcommand");
        }
        Self {
            subcommand: command.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: outcome.seed,
            params,
            args,
            checksums: checksums(outcome),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Failure::io(path, e))
    }
}

#[derive(Serialize)]
struct ReplayReport {
    subcommand: String,
    reproduced: bool,
    /// Labels whose checksum changed or went missing.
    mismatched: Vec<String>,
}

/// Re-execute the command recorded in a manifest, rewrite its output files
/// and compare checksums.
pub fn replay(path: &Path) -> Result<Outcome, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let recorded: RunManifest =
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let cli = Cli::try_parse_from(std::iter::once("gnormal".to_string()).chain(recorded.args.iter().cloned()))
        .map_err(|e| Failure::usage(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Failure::usage("a replay manifest cannot be replayed"));
    }
    let rerun = commands::execute(&cli.command)?;
    crate::write_files(&rerun)?;
    let now = checksums(&rerun);
    let mut mismatched: Vec<String> = recorded
        .checksums
        .iter()
        .filter(|(k, v)| now.get(*k) != Some(*v))
        .map(|(k, _)| k.clone())
        .collect();
    mismatched.extend(now.keys().filter(|k| !recorded.checksums.contains_key(*k)).cloned());
    let reproduced = mismatched.is_empty();
    let mut outcome = Outcome::json(&ReplayReport { subcommand: recorded.subcommand, reproduced, mismatched })?;
    outcome.seed = recorded.seed;
    outcome.holds = reproduced;
    Ok(outcome)
}
