//! Seeded experiment runners and their CSV outputs.
//!
//! Each experiment reads its parameters from a [`config::ExperimentConfig`],
//! runs independent replicates across worker threads, reduces them in seed order
//! and writes CSV tables into the output directory. Replicate `k` draws from
//! `rng::seeded(derive_seed(seed_base, k, experiment id))`.

pub mod config;
pub mod gibbs_sphere;
pub mod grad_consistency;
pub mod mm_gap;
pub mod selftest;

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    GradConsistency,
    GibbsSphere,
    MmGap,
    Selftest,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] =
        [ExperimentKind::GradConsistency, ExperimentKind::GibbsSphere, ExperimentKind::MmGap, ExperimentKind::Selftest];

    /// Identifier used in config files and seed derivation.
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::GradConsistency => "grad_consistency",
            ExperimentKind::GibbsSphere => "gibbs_sphere",
            ExperimentKind::MmGap => "mm_gap",
            ExperimentKind::Selftest => "selftest",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.id() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown experiment `{s}`")))
    }
}

/// Mean with sample standard deviation and standard error across replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

/// Summary of `values` in the given order; the std uses `n − 1` and is 0 for a
/// single replicate.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Summary { count: n, mean, std, stderr: std / (n as f64).sqrt() })
}

/// Shortest round-trip rendering of a sweep value, used in file names
/// (`0.1`, `2.5`, `10`).
pub fn param_label(x: f64) -> String {
    format!("{x}")
}

/// Runs `task(0..count)` on up to `jobs` scoped threads and returns the results
/// in index order. The first error by index wins.
pub fn run_indexed<T, F>(count: usize, jobs: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let jobs = jobs.clamp(1, count.max(1));
    if jobs == 1 {
        return (0..count).map(&task).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let r = task(i);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|s| s.expect("every index is visited"))
        .collect()
}

/// Runs `cfg` and writes its tables into `cfg.out_dir`. Returns the selftest
/// report for [`ExperimentKind::Selftest`] and `None` otherwise.
pub fn execute(cfg: &ExperimentConfig, selftest_opts: &selftest::SelftestOptions) -> Result<Option<selftest::SelftestReport>> {
    match cfg.kind {
        ExperimentKind::GradConsistency => grad_consistency::write(&grad_consistency::run(cfg)?, &cfg.out_dir)?,
        ExperimentKind::GibbsSphere => gibbs_sphere::write(&gibbs_sphere::run(cfg)?, &cfg.out_dir)?,
        ExperimentKind::MmGap => mm_gap::write(&mm_gap::run(cfg)?, &cfg.out_dir)?,
        ExperimentKind::Selftest => return selftest::run_selftest(selftest_opts, cfg.seed_base).map(Some),
    }
    Ok(None)
}
