//! Output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Config;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Config,
    pub seed: u64,
    pub version: String,
    pub backends: Value,
    pub tolerances: Value,
    pub threads: usize,
    pub paranoid: bool,
    pub toy_scale: bool,
    pub status: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects outputs of one command in `dir`.
pub struct Emitter {
    pub dir: PathBuf,
    pub seed: u64,
    pub backend: String,
    pub tol: f64,
    outputs: Vec<OutputDigest>,
    started: Instant,
}

impl Emitter {
    pub fn new(dir: PathBuf, seed: u64) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            seed,
            backend: String::new(),
            tol: 0.0,
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Sets the provenance values appended to CSV rows.
    pub fn provenance(&mut self, backend: &str, tol: f64) {
        self.backend = backend.to_string();
        self.tol = tol;
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.retain(|o| o.file != name);
        self.outputs.push(OutputDigest {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    /// Writes a CSV produced by `f`, adding `seed,backend,tolerance` columns to every row.
    pub fn csv<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> rilab_core::Result<()>,
    {
        let mut raw = Vec::new();
        f(&mut raw)?;
        let text = String::from_utf8(raw).context("csv output is not utf-8")?;
        let mut out = String::with_capacity(text.len() * 5 / 4);
        for (i, line) in text.lines().enumerate() {
            out.push_str(line);
            if i == 0 {
                out.push_str(",seed,backend,tolerance\n");
            } else {
                out.push_str(&format!(",{},{},{:e}\n", self.seed, self.backend, self.tol));
            }
        }
        self.write(name, out.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn raw<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> rilab_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        self,
        command: &str,
        args: Vec<String>,
        config: &Config,
        backends: Value,
        tolerances: Value,
        flags: (usize, bool, bool),
        pass: bool,
    ) -> Result<()> {
        let mut outputs = self.outputs;
        outputs.sort_by(|a, b| a.file.cmp(&b.file));
        let m = RunManifest {
            command: command.to_string(),
            args,
            config: config.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            backends,
            tolerances,
            threads: flags.0,
            paranoid: flags.1,
            toy_scale: flags.2,
            status: if pass { "pass" } else { "fail" }.to_string(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs,
        };
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
