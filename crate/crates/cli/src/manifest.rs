use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

/// Files produced by one run, held in memory until the single write pass.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> dampwave::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut buf = serde_json::to_vec_pretty(value).expect("reports serialize");
        buf.push(b'\n');
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn write_all(&self, dir: &Path) -> Result<(), CliError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io(&path))?;
        }
        Ok(())
    }
}

/// Provenance record written next to every run's outputs as `manifest.json`.
#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_path: String,
    /// SHA-256 of the config file bytes, hex.
    pub config_hash: String,
    /// 64-bit grid hash, hex.
    pub grid_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub timestamp_unix: u64,
    pub elapsed_seconds: f64,
    pub status: &'static str,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
