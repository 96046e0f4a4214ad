use std::path::{Path, PathBuf};

use hjmp_core::dynamics::SystemKind;
use hjmp_core::grid::SolveOptions;
use hjmp_core::sim::SimConfig;
use hjmp_core::{PlanConfig, SystemSpec, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Per-dimension node counts, or one count for every dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerDim(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveGridConfig {
    pub system: SystemSpec,
    pub resolution: Resolution,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default = "default_memory_cap")]
    pub memory_cap_mb: usize,
}

fn default_memory_cap() -> usize {
    3072
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// One run per seed; empty means just `train.seed`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Oracle field used for validation; the PDE residual otherwise.
    #[serde(default)]
    pub oracle: Option<PathBuf>,
    /// Halve the batch and sample budget for `bc_sym`, keeping the step
    /// count of the same config under `bc`.
    #[serde(default = "yes")]
    pub sym_half_data: bool,
    #[serde(default)]
    pub resume: Option<PathBuf>,
    /// Log of the run being resumed; its rows are kept in the new log.
    #[serde(default)]
    pub resume_log: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: PathBuf,
    pub field: PathBuf,
    #[serde(default = "default_eval_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_eval_samples() -> usize {
    10_000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Nehmo,
    Naive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub system: SystemKind,
    pub agent_counts: Vec<usize>,
    pub scenarios: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub planner: PlanConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default = "default_gain")]
    pub naive_gain: f64,
    /// Trained value network; without one the planner uses `V = l`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Nehmo, MethodName::Naive]
}

fn default_gain() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    /// Field file or network checkpoint.
    pub source: PathBuf,
    #[serde(default)]
    pub t: f64,
    /// The two plotted state dimensions.
    pub dims: [usize; 2],
    /// Full joint state; the plotted dimensions are overwritten.
    pub fixed: Vec<f64>,
    #[serde(default = "default_slice_resolution")]
    pub resolution: usize,
}

fn default_slice_resolution() -> usize {
    101
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub slice: Option<SliceConfig>,
}

/// Written next to every command's outputs. Passing it back as `--config`
/// repeats the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest<C> {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub deterministic: bool,
    pub config: C,
}

#[derive(Deserialize)]
struct ManifestProbe {
    command: String,
    config: serde_json::Value,
}

/// Read a command config, accepting a manifest written by the same command.
pub fn load<C: DeserializeOwned>(path: &Path, command: &str) -> Result<C, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value = match serde_json::from_value::<ManifestProbe>(value.clone()) {
        Ok(probe) if probe.command == command => probe.config,
        Ok(probe) => {
            return Err(CliError::Config(format!(
                "{} is a manifest for `{}`, not `{command}`",
                path.display(),
                probe.command
            )))
        }
        Err(_) => value,
    };
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Relative paths inside a config are taken relative to the config file.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}
