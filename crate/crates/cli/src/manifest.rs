use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest { path: path.to_path_buf(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

/// Everything needed to rerun a command, written as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub format: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    /// Parsed command-line arguments.
    pub arguments: serde_json::Value,
    /// Library-level configuration after defaults were applied.
    pub resolved: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

/// Collects outputs of one run and writes the manifest next to them.
pub struct Run {
    subcommand: &'static str,
    out: PathBuf,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(subcommand: &'static str, out: &Path, inputs: Vec<PathBuf>) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Run { subcommand, out: out.to_path_buf(), started: Instant::now(), inputs, outputs: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path);
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.outputs.push(path);
        Ok(())
    }

    /// Registers a file written by other means.
    pub fn record(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn finish<A: Serialize, R: Serialize>(self, arguments: &A, resolved: &R, seed: Option<u64>) -> Result<()> {
        let manifest = RunManifest {
            format: 1,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            arguments: serde_json::to_value(arguments)?,
            resolved: serde_json::to_value(resolved)?,
            seed,
            threads: rayon::current_num_threads(),
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.out.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
