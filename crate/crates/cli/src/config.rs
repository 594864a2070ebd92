//! Command configurations. Every file is a JSON object; unknown fields are
//! rejected. Relative output paths resolve against the output directory.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use qpac_core::clusterdata::Labeler;
use qpac_core::models::Architecture;
use qpac_core::pacbayes::Formalism;
use qpac_core::perturb::SamplerMode;
use qpac_core::train::TrainConfig;
use qpac_core::verify::{Suite, SuiteConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default = "default_n")]
    pub n: usize,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub labeler: Labeler,
    #[serde(default = "default_dataset_path")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub task: Option<String>,
    pub suite: Suite,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_qubits")]
    pub max_qubits: usize,
    #[serde(default = "default_max_layers")]
    pub max_layers: usize,
    #[serde(default)]
    pub mode: Option<SamplerMode>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl VerifyConfig {
    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            trials: self.trials,
            seed: self.seed,
            max_qubits: self.max_qubits,
            max_layers: self.max_layers,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default)]
    pub task: Option<String>,
    /// Model description file.
    pub model: PathBuf,
    /// JSON array of parameters; required for architecture models.
    #[serde(default)]
    pub params: Option<PathBuf>,
    /// Labeled dataset for the empirical margin loss; architecture models only.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Training-set size when no dataset is given.
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub empirical_margin_loss: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateConfig {
    #[serde(default)]
    pub task: Option<String>,
    pub architecture: Architecture,
    #[serde(default = "default_n")]
    pub n: usize,
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub labeler: Labeler,
    /// Per-run seeds are derived from `base_seed`; the seed given here is ignored.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_csv_path")]
    pub csv: PathBuf,
    #[serde(default = "default_runs_path")]
    pub records: PathBuf,
}

/// Model description for `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelFile {
    Architecture { architecture: Architecture, n: usize },
    /// Fixed channels, one Kraus set per layer.
    Channels { formalism: Formalism, layers: Vec<ChannelLayer> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelLayer {
    #[serde(with = "qpac_core::io::cmat_vec")]
    pub kraus: Vec<qpac_core::linalg::CMat>,
    #[serde(default)]
    pub unital: bool,
}

fn default_n() -> usize {
    4
}
fn default_dataset_path() -> PathBuf {
    PathBuf::from("dataset.jsonl")
}
fn default_trials() -> usize {
    1000
}
fn default_max_qubits() -> usize {
    2
}
fn default_max_layers() -> usize {
    3
}
fn default_gamma() -> f64 {
    TrainConfig::default().gamma
}
fn default_delta() -> f64 {
    TrainConfig::default().delta
}
fn default_train_size() -> usize {
    8
}
fn default_test_size() -> usize {
    200
}
fn default_workers() -> usize {
    1
}
fn default_csv_path() -> PathBuf {
    PathBuf::from("correlation.csv")
}
fn default_runs_path() -> PathBuf {
    PathBuf::from("runs.jsonl")
}

/// Parses `bytes` as `T`, checking an optional `task` field against `command`.
pub fn parse<T: DeserializeOwned>(bytes: &[u8], command: &str, task: impl Fn(&T) -> Option<&str>) -> CliResult<T> {
    let cfg: T = serde_json::from_slice(bytes).map_err(|e| CliError::Config(format!("invalid {command} config: {e}")))?;
    if let Some(t) = task(&cfg) {
        if t != command {
            return Err(CliError::Config(format!("field `task` is \"{t}\" but the command is {command}")));
        }
    }
    Ok(cfg)
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(CliError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("invalid {what} file {}: {e}", path.display())))
}

pub fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    out_dir.join(p)
}
