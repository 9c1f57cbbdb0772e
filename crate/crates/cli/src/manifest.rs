use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::write_atomic;

pub const MANIFEST_NAME: &str = "manifest.json";

/// How a CSV should be drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlotSpec {
    /// Each row is a profile over the nodes listed in `grid` (column `x`);
    /// the first column labels the row.
    Snapshots { grid: String, title: String },
    /// Columns `y` against column `x`; `markers` draws one dot per row.
    Lines { x: String, y: Vec<String>, title: String, markers: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub rows: usize,
    pub columns: Vec<String>,
    pub plot: Option<PlotSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub n: usize,
    pub steps: usize,
    pub wall_time_s: f64,
    pub results: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
}

/// Orders `log₂(metric_j / metric_{j+1})` between consecutive refinement
/// levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub metric: String,
    pub values: Vec<f64>,
    pub orders: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub wflow: String,
    pub manifest: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub versions: Versions,
    pub config: RunConfig,
    pub seed: u64,
    pub wall_time_s: f64,
    pub levels: Vec<Level>,
    pub convergence: Option<Convergence>,
    pub files: Vec<FileEntry>,
    pub plots: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Internal(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("manifest: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    /// Scalar result of the coarsest level.
    pub fn result(&self, key: &str) -> Option<f64> {
        self.levels.first()?.results.get(key).copied()
    }

    pub fn check(&self, key: &str) -> Option<bool> {
        self.levels.first()?.checks.get(key).copied()
    }
}
