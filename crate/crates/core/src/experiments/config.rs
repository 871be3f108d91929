//! Run-level settings plus typed accessors with defaults.

use super::ExperimentKind;
use crate::error::{Error, Result};
use crate::io::{read_config, Config};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: usize,
    pub seed_base: u64,
    pub out_dir: PathBuf,
    pub jobs: usize,
    /// Experiment-specific `key = value` parameters; absent keys take defaults.
    pub params: Config,
}

/// Keys understood by every experiment.
pub const RUN_KEYS: [&str; 5] = ["experiment", "seeds", "seed_base", "out_dir", "jobs"];

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            seeds: 20,
            seed_base: 0,
            out_dir: PathBuf::from("results").join(kind.id()),
            jobs: 1,
            params: Config::default(),
        }
    }

    /// Builds a run from parsed parameters. Run-level keys in `params` override
    /// the defaults; an `experiment` key must agree with `kind`.
    pub fn from_params(kind: ExperimentKind, params: Config) -> Result<Self> {
        let mut cfg = ExperimentConfig::new(kind);
        if let Some(name) = params.get_str("experiment") {
            let declared: ExperimentKind = name.parse()?;
            if declared != kind {
                return Err(Error::invalid(format!("config declares experiment `{declared}` but `{kind}` was requested")));
            }
        }
        if let Some(s) = params.get_usize("seeds")? {
            cfg.seeds = s;
        }
        if let Some(b) = params.get_u64("seed_base")? {
            cfg.seed_base = b;
        }
        if let Some(d) = params.get_str("out_dir") {
            cfg.out_dir = PathBuf::from(d);
        }
        if let Some(j) = params.get_usize("jobs")? {
            cfg.jobs = j;
        }
        cfg.params = params;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(kind: ExperimentKind, path: &Path) -> Result<Self> {
        ExperimentConfig::from_params(kind, read_config(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::invalid("seeds must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        Ok(())
    }

    /// Warns about parameter keys outside `RUN_KEYS` and `known`.
    pub fn warn_unknown(&self, known: &[&str]) -> Vec<String> {
        let all: Vec<&str> = RUN_KEYS.iter().chain(known).copied().collect();
        self.params.warn_unknown(&all)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.params.get_f64(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.params.get_usize(key)?.unwrap_or(default))
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        Ok(self.params.get_f64_list(key)?.unwrap_or_else(|| default.to_vec()))
    }

    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.params.get_f64_list(key)? {
            None => Ok(default.to_vec()),
            Some(v) => v
                .into_iter()
                .map(|x| {
                    if x >= 0.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(Error::invalid(format!("`{key}` must list nonnegative integers, found {x}")))
                    }
                })
                .collect(),
        }
    }

    /// Seed of replicate `index` under this run's base.
    pub fn replicate_seed(&self, index: usize, stream: &str) -> u64 {
        crate::rng::derive_seed(self.seed_base, index as u64, stream)
    }
}
