//! Run manifests: every subcommand leaves exactly one `run_manifest.json`
//! in its output directory, recording the full invocation. Re-running the
//! recorded argv reproduces the outputs byte-for-byte (wall time aside).

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_time_secs: f64,
}

pub struct ManifestBuilder {
    subcommand: String,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str) -> Self {
        ManifestBuilder {
            subcommand: subcommand.to_string(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn write(self, out_dir: &Path) -> std::io::Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            argv: std::env::args().collect(),
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        std::fs::write(out_dir.join("run_manifest.json"), json)
    }
}
