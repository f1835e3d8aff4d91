//! Run configuration: one JSON document, every field overridable from the
//! command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sthawkes::earlywarn::{HawkesFlagConfig, NaiveFlagConfig};
use sthawkes::{ColumnMap, McmcConfig, ModelSpec, OptimConfig, RowPolicy, YearMonth};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub filters: FilterConfig,
    pub window: WindowConfig,
    pub model: ModelSpec,
    pub inference: InferenceConfig,
    pub tasks: TaskConfig,
    pub simulate: SimulateConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            filters: FilterConfig::default(),
            window: WindowConfig::default(),
            model: ModelSpec::default(),
            inference: InferenceConfig::default(),
            tasks: TaskConfig::default(),
            simulate: SimulateConfig::default(),
            seed: McmcConfig::default().seed,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub events: Option<PathBuf>,
    pub centroids: Option<PathBuf>,
    /// Grid CSV written by `ingest` or `simulate`; its sidecar sits next to it.
    pub grid: Option<PathBuf>,
    /// Directory holding fit artifacts; defaults to the output directory.
    pub fit: Option<PathBuf>,
    pub columns: ColumnMap,
    pub row_policy: RowPolicy,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub countries: Vec<String>,
    pub event_types: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub start: Option<YearMonth>,
    pub end: Option<YearMonth>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Mle,
    Bayes,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub mode: Mode,
    pub mcmc: McmcConfig,
    pub optim: OptimConfig,
    pub allow_nonconverged: bool,
    /// R-hat above this fails a Bayesian fit.
    pub rhat_threshold: Option<f64>,
}

impl InferenceConfig {
    pub fn rhat_limit(&self) -> f64 {
        self.rhat_threshold.unwrap_or(1.05)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub horizon: usize,
    /// Posterior draws simulated by `predict`.
    pub samples: usize,
    pub hawkes_flags: HawkesFlagConfig,
    pub naive_flags: NaiveFlagConfig,
    pub map: MapConfig,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            horizon: 3,
            samples: 100,
            hawkes_flags: HawkesFlagConfig::default(),
            naive_flags: NaiveFlagConfig::default(),
            map: MapConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub month: Option<YearMonth>,
    pub month_index: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub months: usize,
    pub burn_in: usize,
    /// Defaults to `model.t_max`.
    pub warmup: Option<usize>,
    pub start: YearMonth,
    /// `[nx, ny]` centroid lattice used when no centroid file is given.
    pub lattice: [usize; 2],
    pub spacing: f64,
    pub name: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            alpha: 0.5,
            beta: 0.4,
            sigma: 1.0,
            months: 60,
            burn_in: 24,
            warmup: None,
            start: YearMonth::new(2010, 1).expect("valid month"),
            lattice: [5, 4],
            spacing: 10.0,
            name: "grid".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::input(format!("cannot read config `{}`: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::input(format!("invalid config `{}`: {e}", p.display())))
            }
        }
    }

    /// Fit artifacts directory.
    pub fn fit_dir(&self) -> PathBuf {
        self.data.fit.clone().unwrap_or_else(|| self.out.clone())
    }
}
