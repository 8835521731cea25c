use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::evaluation::TaskKind;
use crate::evolution::EvolutionConfig;

pub const KEYS: [&str; 20] = [
    "spec",
    "data",
    "out",
    "seed",
    "good_samples",
    "max_iterations",
    "rounds",
    "retrain_threshold",
    "stall_window",
    "utility_target",
    "task_column",
    "task_kind",
    "population_size",
    "elite_fraction",
    "mutation_rate",
    "crossover_rate",
    "tournament_size",
    "tree_max_depth",
    "tree_min_leaf",
    "forest_trees",
];

const PATH_KEYS: [&str; 3] = ["spec", "data", "out"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("missing required config key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

/// Settings for one synthesis run. Relative paths in a config file resolve
/// against the file's directory; relative paths in overrides resolve
/// against the working directory.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub spec: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    /// Defaults to the size of the preprocessed original dataset.
    pub good_samples: Option<usize>,
    /// Defaults to the size of the preprocessed original dataset.
    pub max_iterations: Option<usize>,
    pub rounds: usize,
    pub retrain_threshold: f64,
    pub stall_window: usize,
    pub utility_target: Option<f64>,
    pub task_column: String,
    pub task_kind: TaskKind,
    pub evolution: EvolutionConfig,
    /// `None` grows discriminator trees without a depth limit.
    pub tree_max_depth: Option<usize>,
    pub tree_min_leaf: usize,
    pub forest_trees: usize,
}

/// Raw key/value pairs with the directory each value is relative to.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, PathBuf)>,
}

impl RawConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            raw.set(k.trim(), v.trim(), base)?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.entries.insert(key.to_string(), (value.to_string(), base.to_path_buf()));
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid { key: assignment.to_string(), message: "expected key=value".into() })?;
        self.set(k.trim(), v.trim(), Path::new(""))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError::Invalid { key: key.to_string(), message: e.to_string() }))
            .transpose()
    }

    fn path(&self, key: &'static str) -> Result<PathBuf, ConfigError> {
        debug_assert!(PATH_KEYS.contains(&key));
        let (v, base) = self.entries.get(key).ok_or(ConfigError::Missing(key))?;
        Ok(base.join(v))
    }

    pub fn build(&self) -> Result<PipelineConfig, ConfigError> {
        let invalid = |key: &str, message: &str| ConfigError::Invalid { key: key.to_string(), message: message.to_string() };
        let d = EvolutionConfig::default();
        let seed = self.parsed("seed")?.unwrap_or(0);
        let evolution = EvolutionConfig {
            population_size: self.parsed("population_size")?.unwrap_or(d.population_size),
            elite_fraction: self.parsed("elite_fraction")?.unwrap_or(d.elite_fraction),
            mutation_rate: self.parsed("mutation_rate")?.unwrap_or(d.mutation_rate),
            crossover_rate: self.parsed("crossover_rate")?.unwrap_or(d.crossover_rate),
            tournament_size: self.parsed("tournament_size")?.unwrap_or(d.tournament_size),
            seed,
        };
        evolution.validate().map_err(|e| invalid("evolution", &e.to_string()))?;
        let utility_target = match self.get("utility_target") {
            None | Some("none") | Some("-inf") => None,
            Some(_) => Some(self.parsed::<f64>("utility_target")?.expect("present")),
        };
        let tree_max_depth = match self.parsed::<usize>("tree_max_depth")? {
            None => Some(12),
            Some(0) => None,
            Some(v) => Some(v),
        };
        let task_kind = self
            .get("task_kind")
            .ok_or(ConfigError::Missing("task_kind"))?
            .parse::<TaskKind>()
            .map_err(|e| invalid("task_kind", &e))?;
        let config = PipelineConfig {
            spec: self.path("spec")?,
            data: self.path("data")?,
            out: self.path("out")?,
            seed,
            good_samples: self.parsed("good_samples")?,
            max_iterations: self.parsed("max_iterations")?,
            rounds: self.parsed("rounds")?.unwrap_or(3),
            retrain_threshold: self.parsed("retrain_threshold")?.unwrap_or(0.55),
            stall_window: self.parsed("stall_window")?.unwrap_or(50),
            utility_target,
            task_column: self.get("task_column").ok_or(ConfigError::Missing("task_column"))?.to_string(),
            task_kind,
            evolution,
            tree_max_depth,
            tree_min_leaf: self.parsed("tree_min_leaf")?.unwrap_or(5),
            forest_trees: self.parsed("forest_trees")?.unwrap_or(100),
        };
        if config.good_samples == Some(0) {
            return Err(invalid("good_samples", "must be at least 1"));
        }
        if config.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        if !(0.5..1.0).contains(&config.retrain_threshold) {
            return Err(invalid("retrain_threshold", "must lie in [0.5, 1)"));
        }
        if config.stall_window == 0 {
            return Err(invalid("stall_window", "must be at least 1"));
        }
        if config.tree_min_leaf == 0 || config.forest_trees == 0 {
            return Err(invalid("tree_min_leaf/forest_trees", "must be at least 1"));
        }
        Ok(config)
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        RawConfig::load(path)?.build()
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        RawConfig::parse(text, base)?.build()
    }
}
