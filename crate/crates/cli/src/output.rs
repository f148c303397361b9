//! Output directory bookkeeping: emitted files, manifest and timings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use stochan_core::Result;

use crate::config::RunConfig;

/// Everything needed to rerun a command; timings live in `timings.json` so the
/// manifest itself is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub check: Option<String>,
    pub input_dir: Option<PathBuf>,
    pub binary: bool,
    pub seed: u64,
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
    timings: BTreeMap<String, f64>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes through a buffer filled by `fill`.
    pub fn write_with(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn timed<T>(&mut self, stage: &str, run: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let value = run()?;
        *self.timings.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        Ok(value)
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> Result<()> {
        let timings = std::mem::take(&mut self.timings);
        self.write_json("timings.json", &timings)?;
        manifest.outputs = self.files.clone();
        manifest.versions = BTreeMap::from([
            ("stochan-core".to_string(), stochan_core::VERSION.to_string()),
            ("stochan-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]);
        self.write_json("manifest.json", &manifest)
    }
}
