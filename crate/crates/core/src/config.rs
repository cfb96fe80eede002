//! Experiment configuration files (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{Linkage, Metric};
use crate::data::{self, GeneratorParams, PartitionSpec, TestSetParams};
use crate::error::{Error, Result};
use crate::model::InitScheme;
use crate::selection::StrategyConfig;
use crate::train::{AggregationMode, SgdParams};

/// Prefix for partition specs compiled into the binary.
pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelInitParams {
    pub scheme: InitScheme,
    pub seed: u64,
}

impl Default for ModelInitParams {
    fn default() -> Self {
        ModelInitParams {
            scheme: InitScheme::UniformScaled,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSearchParams {
    pub metrics: Vec<Metric>,
    pub linkages: Vec<Linkage>,
    pub k_values: Vec<usize>,
    /// Rounds of all-client training whose weights form the snapshots.
    pub rounds: usize,
}

impl Default for GridSearchParams {
    fn default() -> Self {
        GridSearchParams {
            metrics: Metric::ALL.to_vec(),
            linkages: Linkage::ALL.to_vec(),
            k_values: vec![2, 3, 4, 5, 6],
            rounds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingParams {
    /// Clients picked per selection in the benchmark.
    pub select: usize,
    pub repetitions: usize,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            select: 10,
            repetitions: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Path to a partition spec file, or `builtin:table1` / `builtin:table2`.
    pub partition_spec: String,
    pub strategy: StrategyConfig,
    #[serde(default = "default_rounds")]
    pub total_rounds: usize,
    #[serde(default = "default_window")]
    pub moving_average_window: usize,
    #[serde(default)]
    pub aggregation: AggregationMode,
    /// Master seed, mixed into every component seed.
    #[serde(default)]
    pub seed: u64,
    /// Wall-clock selection times vary run to run; switch off for
    /// byte-reproducible output.
    #[serde(default = "default_true")]
    pub record_selection_time: bool,
    #[serde(default)]
    pub generator: GeneratorParams,
    #[serde(default)]
    pub model: ModelInitParams,
    #[serde(default)]
    pub sgd: SgdParams,
    #[serde(default)]
    pub test: TestSetParams,
    #[serde(default)]
    pub gridsearch: GridSearchParams,
    #[serde(default)]
    pub timing: TimingParams,
}

fn default_rounds() -> usize {
    200
}

fn default_window() -> usize {
    5
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(partition_spec: impl Into<String>, strategy: StrategyConfig) -> Self {
        ExperimentConfig {
            partition_spec: partition_spec.into(),
            strategy: strategy.with_defaults(),
            total_rounds: default_rounds(),
            moving_average_window: default_window(),
            aggregation: AggregationMode::default(),
            seed: 0,
            record_selection_time: true,
            generator: GeneratorParams::default(),
            model: ModelInitParams::default(),
            sgd: SgdParams::default(),
            test: TestSetParams::default(),
            gridsearch: GridSearchParams::default(),
            timing: TimingParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_rounds < 1 {
            return Err(Error::Config("total_rounds must be at least 1".into()));
        }
        if self.moving_average_window < 1 {
            return Err(Error::Config("moving_average_window must be at least 1".into()));
        }
        if self.test.per_class_count < 1 {
            return Err(Error::Config("test.per_class_count must be at least 1".into()));
        }
        if self.timing.repetitions < 10 {
            return Err(Error::Config("timing.repetitions must be at least 10".into()));
        }
        let seeds = [
            self.seed,
            self.generator.seed,
            self.model.seed,
            self.sgd.shuffle_seed,
            self.test.seed,
        ];
        if seeds.iter().any(|&s| s > i64::MAX as u64) {
            return Err(Error::Config("seeds must fit in a signed 64-bit integer".into()));
        }
        self.strategy.validate()?;
        self.sgd.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.strategy = cfg.strategy.with_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every field written out, defaults included.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn load_partition(&self) -> Result<PartitionSpec> {
        match self.partition_spec.strip_prefix(BUILTIN_PREFIX) {
            Some("table1") => Ok(data::table1()),
            Some("table2") => Ok(data::table2()),
            Some(other) => Err(Error::Config(format!("unknown builtin partition `{other}`"))),
            None => data::load_partition_spec(Path::new(&self.partition_spec)),
        }
    }
}

/// Reads and validates a config; a relative `partition_spec` is resolved
/// against the config file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = ExperimentConfig::from_toml_str(&text)?;
    if !cfg.partition_spec.starts_with(BUILTIN_PREFIX) {
        let spec = PathBuf::from(&cfg.partition_spec);
        if spec.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.partition_spec = dir.join(spec).display().to_string();
            }
        }
    }
    Ok(cfg)
}
