//! Finite-negative InfoNCE gradients against a large fixed-pool reference.

use super::{run_indexed, summarize, ExperimentConfig, Summary};
use crate::data::{gmm_build, gmm_sample_pair, GmmConfig};
use crate::energies::{grad_alignment, GradReport};
use crate::error::{Error, Result};
use crate::grad::{Head, LinearEncoder};
use crate::io::{write_csv, RunRecord, Value};
use crate::kernel::{Critic, Temperature};
use crate::losses::{infonce_batch_mean_grad, SharedPoolBatch};
use crate::rng::seeded;
use std::path::Path;

pub const HEADER: [&str; 8] =
    ["regime", "N", "align_mean", "align_std", "align_stderr", "relerr_mean", "relerr_std", "relerr_stderr"];

pub const KEYS: [&str; 12] = [
    "m", "k", "separation", "sigma", "d", "tau_cos", "tau_rbf", "sigma_aug_cos", "sigma_aug_rbf", "batch", "n_ref",
    "n_sweep",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Normalized head with the cosine critic.
    SphereCosine,
    /// Tanh head with the dimension-scaled RBF critic.
    BoxRbf,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::SphereCosine, Regime::BoxRbf];

    pub fn label(self) -> &'static str {
        match self {
            Regime::SphereCosine => "sphere_cosine",
            Regime::BoxRbf => "box_rbf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradConsistencyParams {
    pub m: usize,
    pub k: usize,
    pub separation: f64,
    pub sigma: f64,
    pub d: usize,
    pub tau_cos: f64,
    pub tau_rbf: f64,
    pub sigma_aug_cos: f64,
    pub sigma_aug_rbf: f64,
    pub batch: usize,
    pub n_ref: usize,
    pub n_sweep: Vec<usize>,
}

impl Default for GradConsistencyParams {
    fn default() -> Self {
        GradConsistencyParams {
            m: 64,
            k: 4,
            separation: 4.0,
            sigma: 1.0,
            d: 128,
            tau_cos: 0.1,
            tau_rbf: 1.0,
            sigma_aug_cos: 0.05,
            sigma_aug_rbf: 0.2,
            batch: 64,
            n_ref: 4096,
            n_sweep: vec![4, 8, 16, 32, 64, 128, 256, 512, 1024],
        }
    }
}

impl GradConsistencyParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.warn_unknown(&KEYS);
        let d = GradConsistencyParams::default();
        let p = GradConsistencyParams {
            m: cfg.usize_or("m", d.m)?,
            k: cfg.usize_or("k", d.k)?,
            separation: cfg.f64_or("separation", d.separation)?,
            sigma: cfg.f64_or("sigma", d.sigma)?,
            d: cfg.usize_or("d", d.d)?,
            tau_cos: cfg.f64_or("tau_cos", d.tau_cos)?,
            tau_rbf: cfg.f64_or("tau_rbf", d.tau_rbf)?,
            sigma_aug_cos: cfg.f64_or("sigma_aug_cos", d.sigma_aug_cos)?,
            sigma_aug_rbf: cfg.f64_or("sigma_aug_rbf", d.sigma_aug_rbf)?,
            batch: cfg.usize_or("batch", d.batch)?,
            n_ref: cfg.usize_or("n_ref", d.n_ref)?,
            n_sweep: cfg.usize_list_or("n_sweep", &d.n_sweep)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.n_ref == 0 || self.d == 0 {
            return Err(Error::invalid("batch, n_ref and d must be positive"));
        }
        if self.n_sweep.is_empty() {
            return Err(Error::invalid("n_sweep must list at least one N"));
        }
        if let Some(&n) = self.n_sweep.iter().find(|&&n| n == 0 || n > self.n_ref) {
            return Err(Error::PoolTooSmall { requested: n, available: self.n_ref });
        }
        Temperature::new(self.tau_cos)?;
        Temperature::new(self.tau_rbf)?;
        Ok(())
    }

    fn setup(&self, regime: Regime) -> (GmmConfig, Head, Critic, f64) {
        let (aug, head, critic, tau) = match regime {
            Regime::SphereCosine => (self.sigma_aug_cos, Head::Normalize, Critic::Cosine, self.tau_cos),
            Regime::BoxRbf => (self.sigma_aug_rbf, Head::Tanh, Critic::rbf_for_dim(self.d), self.tau_rbf),
        };
        let gmm = GmmConfig { m: self.m, k: self.k, separation: self.separation, sigma: self.sigma, sigma_aug: aug };
        (gmm, head, critic, tau)
    }
}

/// Gradient reports for one replicate, one per entry of `n_sweep`.
pub fn run_replicate(p: &GradConsistencyParams, regime: Regime, seed: u64) -> Result<Vec<GradReport>> {
    let (gmm_cfg, head, critic, tau) = p.setup(regime);
    let tau = Temperature::new(tau)?;
    let mut rng = seeded(seed);
    let model = gmm_build(&gmm_cfg, &mut rng)?;
    let enc = LinearEncoder::random(p.d, p.m, head, &mut rng)?;
    let (anchors, positives): (Vec<_>, Vec<_>) = (0..p.batch).map(|_| gmm_sample_pair(&model, &gmm_cfg, &mut rng)).unzip();
    let pool = (0..p.n_ref).map(|_| model.sample(&gmm_cfg, &mut rng)).collect();
    let batch = SharedPoolBatch { anchors, positives, pool };
    let (_, g_ref) = infonce_batch_mean_grad(&enc, &batch, p.n_ref, critic, tau)?;
    p.n_sweep
        .iter()
        .map(|&n| {
            let (_, g) = infonce_batch_mean_grad(&enc, &batch, n, critic, tau)?;
            grad_alignment(&g, &g_ref)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub regime: Regime,
    pub n: usize,
    pub align: Summary,
    pub relerr: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradConsistencyOutput {
    pub rows: Vec<SweepRow>,
    pub records: Vec<RunRecord>,
}

impl GradConsistencyOutput {
    pub fn regime_rows(&self, regime: Regime) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.regime == regime).collect()
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<GradConsistencyOutput> {
    let p = GradConsistencyParams::from_config(cfg)?;
    run_with(cfg, &p)
}

pub fn run_with(cfg: &ExperimentConfig, p: &GradConsistencyParams) -> Result<GradConsistencyOutput> {
    p.validate()?;
    let tasks: Vec<(Regime, usize)> =
        Regime::ALL.iter().flat_map(|&r| (0..cfg.seeds).map(move |k| (r, k))).collect();
    let reports = run_indexed(tasks.len(), cfg.jobs, |i| {
        let (regime, k) = tasks[i];
        let seed = cfg.replicate_seed(k, &format!("{}/{}", cfg.kind.id(), regime.label()));
        log::debug!("grad consistency {} replicate {k}", regime.label());
        run_replicate(p, regime, seed)
    })?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for regime in Regime::ALL {
        let per_seed: Vec<&Vec<GradReport>> =
            tasks.iter().zip(&reports).filter(|((r, _), _)| *r == regime).map(|(_, v)| v).collect();
        for (j, &n) in p.n_sweep.iter().enumerate() {
            let align: Vec<f64> = per_seed.iter().map(|v| v[j].alignment).collect();
            let relerr: Vec<f64> = per_seed.iter().map(|v| v[j].rel_error).collect();
            rows.push(SweepRow { regime, n, align: summarize(&align)?, relerr: summarize(&relerr)? });
        }
        for (k, v) in per_seed.iter().enumerate() {
            let mut rec = RunRecord::new(cfg.kind.id(), k as u64);
            rec.config.push(("regime".into(), regime.label().into()));
            for (rep, n) in v.iter().zip(&p.n_sweep) {
                rec.push(format!("align_N{n}"), rep.alignment)?;
                rec.push(format!("relerr_N{n}"), rep.rel_error)?;
            }
            records.push(rec);
        }
    }
    Ok(GradConsistencyOutput { rows, records })
}

pub fn csv_rows(out: &GradConsistencyOutput) -> Vec<Vec<Value>> {
    out.rows
        .iter()
        .map(|r| {
            vec![
                r.regime.label().into(),
                r.n.into(),
                r.align.mean.into(),
                r.align.std.into(),
                r.align.stderr.into(),
                r.relerr.mean.into(),
                r.relerr.std.into(),
                r.relerr.stderr.into(),
            ]
        })
        .collect()
}

pub fn write(out: &GradConsistencyOutput, dir: &Path) -> Result<()> {
    write_csv(&dir.join("grad_consistency.csv"), &HEADER, &csv_rows(out))?;
    let rows: Vec<Vec<Value>> = out.records.iter().flat_map(RunRecord::rows).collect();
    write_csv(&dir.join("runs.csv"), &RunRecord::HEADER, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentKind;

    fn small() -> GradConsistencyParams {
        GradConsistencyParams { m: 8, d: 6, batch: 8, n_ref: 64, n_sweep: vec![4, 16, 64], ..Default::default() }
    }

    #[test]
    fn reference_size_reproduces_reference_exactly() {
        let p = small();
        for regime in Regime::ALL {
            let reps = run_replicate(&p, regime, 3).unwrap();
            assert!((reps[2].alignment - 1.0).abs() < 1e-14);
            assert_eq!(reps[2].rel_error, 0.0);
        }
    }

    #[test]
    fn replicates_are_deterministic_and_seed_dependent() {
        let p = small();
        let a = run_replicate(&p, Regime::SphereCosine, 11).unwrap();
        assert_eq!(a, run_replicate(&p, Regime::SphereCosine, 11).unwrap());
        assert_ne!(a, run_replicate(&p, Regime::SphereCosine, 12).unwrap());
    }

    #[test]
    fn parallel_and_serial_runs_agree() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::GradConsistency);
        cfg.seeds = 3;
        let serial = run_with(&cfg, &small()).unwrap();
        cfg.jobs = 3;
        assert_eq!(serial, run_with(&cfg, &small()).unwrap());
        assert_eq!(serial.rows.len(), 6);
        assert_eq!(serial.records.len(), 6);
    }

    #[test]
    fn rejects_sweep_beyond_pool() {
        let p = GradConsistencyParams { n_sweep: vec![128], ..small() };
        assert!(p.validate().is_err());
    }
}
