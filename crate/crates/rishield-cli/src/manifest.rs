//! Run manifests: resolved options, input hashes and the output list of one
//! invocation, written as deterministic key-value text.

use crate::CliError;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub struct Manifest {
    command: &'static str,
    seed: u64,
    options: Vec<(String, String)>,
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Self {
            command,
            seed,
            options: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn option(&mut self, key: &str, value: impl std::fmt::Display) {
        self.options.push((key.to_string(), value.to_string()));
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        });
        self.inputs.push((path.to_path_buf(), hex));
        Ok(())
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write(mut self, out_dir: &Path) -> Result<(), CliError> {
        self.outputs.sort();
        let mut text = String::new();
        let _ = writeln!(text, "command = {}", self.command);
        let _ = writeln!(text, "seed = {}", self.seed);
        for (k, v) in &self.options {
            let _ = writeln!(text, "option.{k} = {v}");
        }
        for (path, hash) in &self.inputs {
            let _ = writeln!(text, "input.sha256.{} = {hash}", path.display());
        }
        for name in &self.outputs {
            let _ = writeln!(text, "output = {name}");
        }
        fs::write(out_dir.join("manifest.txt"), text)?;
        Ok(())
    }
}
