//! Symmetric two-encoder training on misaligned circle observations and the
//! resulting gap between the two embedding marginals.

use super::{param_label, run_indexed, summarize, ExperimentConfig, Summary};
use crate::data::{angle_differences, circular_std, sample_circle_pairs, VmMixtureConfig};
use crate::diagnostics::{angle_shift_density, bin_center, binned_marginal, joint_histogram, sym_kl_sum};
use crate::error::{Error, Result};
use crate::grad::{AdamState, Head, LinearEncoder};
use crate::io::{write_csv, RunRecord, Value};
use crate::kernel::{Critic, Temperature};
use crate::losses::{symmetric_clip_grad, PairBatch};
use crate::manifold::wrap_angle;
use crate::rng::seeded;
use std::path::Path;

pub const GAP_HEADER: [&str; 5] = ["sigma_mis", "seed_count", "symkl_mean", "symkl_std", "symkl_stderr"];
pub const MARGINALS_HEADER: [&str; 3] = ["bin_center", "density_mod1", "density_mod2"];
pub const JOINT_HEADER: [&str; 3] = ["bin_a1", "bin_a2", "count"];
pub const DELTA_HEADER: [&str; 2] = ["bin_center", "density"];

pub const KEYS: [&str; 15] = [
    "w", "mu1", "mu2", "concentration", "sigma_obs", "tau", "lr", "steps", "batch", "nbins", "n_eval", "sigmas",
    "pseudocount", "band", "init_std",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MmGapParams {
    pub w: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub concentration: f64,
    pub sigma_obs: f64,
    pub tau: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub nbins: usize,
    pub n_eval: usize,
    pub sigmas: Vec<f64>,
    /// Added to every marginal bin before the divergence is taken.
    pub pseudocount: f64,
    /// Half-width, in bins, of the diagonal band of the joint histogram.
    pub band: usize,
    /// Standard deviation of the Gaussian encoder initialization. Larger values
    /// leave some seeds on the rank-one plateau for the whole run.
    pub init_std: f64,
}

impl Default for MmGapParams {
    fn default() -> Self {
        MmGapParams {
            w: 0.7,
            mu1: 0.0,
            mu2: std::f64::consts::PI,
            concentration: 6.0,
            sigma_obs: 0.02,
            tau: 0.07,
            lr: 5e-3,
            steps: 2000,
            batch: 256,
            nbins: 60,
            n_eval: 8000,
            sigmas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            pseudocount: 1.0,
            band: 3,
            init_std: 0.1,
        }
    }
}

impl MmGapParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.warn_unknown(&KEYS);
        let d = MmGapParams::default();
        let p = MmGapParams {
            w: cfg.f64_or("w", d.w)?,
            mu1: cfg.f64_or("mu1", d.mu1)?,
            mu2: cfg.f64_or("mu2", d.mu2)?,
            concentration: cfg.f64_or("concentration", d.concentration)?,
            sigma_obs: cfg.f64_or("sigma_obs", d.sigma_obs)?,
            tau: cfg.f64_or("tau", d.tau)?,
            lr: cfg.f64_or("lr", d.lr)?,
            steps: cfg.usize_or("steps", d.steps)?,
            batch: cfg.usize_or("batch", d.batch)?,
            nbins: cfg.usize_or("nbins", d.nbins)?,
            n_eval: cfg.usize_or("n_eval", d.n_eval)?,
            sigmas: cfg.f64_list_or("sigmas", &d.sigmas)?,
            pseudocount: cfg.f64_or("pseudocount", d.pseudocount)?,
            band: cfg.usize_or("band", d.band)?,
            init_std: cfg.f64_or("init_std", d.init_std)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        Temperature::new(self.tau)?;
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::invalid("init_std must be positive and finite"));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("sigmas must be a nonempty list of nonnegative scales"));
        }
        if self.batch < 2 || self.n_eval == 0 || self.nbins < 2 {
            return Err(Error::invalid("batch >= 2, n_eval >= 1 and nbins >= 2 are required"));
        }
        if !(self.pseudocount >= 1.0) {
            return Err(Error::invalid("pseudocount must be at least 1 so every marginal bin is positive"));
        }
        if !(0.0..=1.0).contains(&self.w) || !(self.concentration > 0.0) || !(self.sigma_obs >= 0.0) {
            return Err(Error::invalid("mixture needs w in [0, 1], concentration > 0, sigma_obs >= 0"));
        }
        Ok(())
    }

    pub fn data_config(&self, sigma_mis: f64) -> Result<VmMixtureConfig> {
        Ok(VmMixtureConfig {
            w: self.w,
            mu1: wrap_angle(self.mu1)?,
            mu2: wrap_angle(self.mu2)?,
            concentration: self.concentration,
            sigma_mis,
            sigma_obs: self.sigma_obs,
        })
    }
}

/// Diagnostics of one trained replicate on its fresh evaluation pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDiagnostics {
    pub symkl: f64,
    pub band_fraction: f64,
    pub delta_circular_std: f64,
    pub final_loss: f64,
    pub density_mod1: Vec<f64>,
    pub density_mod2: Vec<f64>,
    pub joint_counts: Vec<u64>,
    pub delta_density: Vec<f64>,
    pub encoders: (LinearEncoder, LinearEncoder),
}

fn to_rows(points: &[[f64; 2]]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.to_vec()).collect()
}

fn embedding_angle(enc: &LinearEncoder, x: &[f64; 2]) -> Result<f64> {
    let z = enc.encode(x)?;
    Ok(z[1].atan2(z[0]))
}

/// Trains both encoders with the symmetric in-batch loss on fresh batches, then
/// evaluates on `n_eval` fresh pairs.
pub fn run_replicate(p: &MmGapParams, sigma_mis: f64, seed: u64) -> Result<ReplicateDiagnostics> {
    let data = p.data_config(sigma_mis)?;
    let tau = Temperature::new(p.tau)?;
    let mut rng = seeded(seed);
    let mut f = LinearEncoder::random_with_std(2, 2, p.init_std, Head::Normalize, &mut rng)?;
    let mut g = LinearEncoder::random_with_std(2, 2, p.init_std, Head::Normalize, &mut rng)?;
    let nf = f.n_params();
    let mut params: Vec<f64> = f.weights().iter().chain(g.weights()).copied().collect();
    let mut adam = AdamState::new(params.len(), p.lr);
    let mut grad = vec![0.0; params.len()];
    let mut last = f64::NAN;
    for _ in 0..p.steps {
        let pairs = sample_circle_pairs(&data, p.batch, &mut rng)?;
        let batch = PairBatch::new(to_rows(&pairs.xs), to_rows(&pairs.ys))?;
        let (loss, gf, gg) = symmetric_clip_grad(&f, &g, &batch, Critic::Cosine, tau)?;
        grad[..nf].copy_from_slice(&gf);
        grad[nf..].copy_from_slice(&gg);
        adam.update(&mut params, &grad)?;
        f.set_weights(&params[..nf])?;
        g.set_weights(&params[nf..])?;
        last = loss;
    }
    let eval = sample_circle_pairs(&data, p.n_eval, &mut rng)?;
    let a1: Vec<f64> = eval.xs.iter().map(|x| embedding_angle(&f, x)).collect::<Result<_>>()?;
    let a2: Vec<f64> = eval.ys.iter().map(|y| embedding_angle(&g, y)).collect::<Result<_>>()?;
    let h1 = binned_marginal(&a1, p.nbins, p.pseudocount)?;
    let h2 = binned_marginal(&a2, p.nbins, p.pseudocount)?;
    let joint = joint_histogram(&a1, &a2, p.nbins)?;
    let delta = angle_shift_density(&a1, &a2, p.nbins, 0.0)?;
    Ok(ReplicateDiagnostics {
        symkl: sym_kl_sum(&h1, &h2)?,
        band_fraction: joint.diagonal_band_fraction(p.band),
        delta_circular_std: circular_std(&angle_differences(&a1, &a2)),
        final_loss: last,
        density_mod1: h1.density,
        density_mod2: h2.density,
        joint_counts: joint.counts,
        delta_density: delta.density,
        encoders: (f, g),
    })
}

/// Seed-aggregated results at one misalignment scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaResult {
    pub sigma_mis: f64,
    pub symkl: Summary,
    pub band_fraction: Summary,
    pub delta_circular_std: Summary,
    /// Seed-mean marginal densities.
    pub density_mod1: Vec<f64>,
    pub density_mod2: Vec<f64>,
    /// Joint counts summed over seeds.
    pub joint_counts: Vec<u64>,
    /// Band fraction of the pooled joint histogram.
    pub pooled_band_fraction: f64,
    pub delta_density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmGapOutput {
    pub nbins: usize,
    pub results: Vec<SigmaResult>,
    pub records: Vec<RunRecord>,
}

impl MmGapOutput {
    pub fn symkl_means(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.symkl.mean).collect()
    }
}

fn mean_columns(rows: &[&Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

pub fn run(cfg: &ExperimentConfig) -> Result<MmGapOutput> {
    let p = MmGapParams::from_config(cfg)?;
    run_with(cfg, &p)
}

pub fn run_with(cfg: &ExperimentConfig, p: &MmGapParams) -> Result<MmGapOutput> {
    p.validate()?;
    let id = cfg.kind.id();
    let tasks: Vec<(usize, usize)> = (0..p.sigmas.len()).flat_map(|s| (0..cfg.seeds).map(move |k| (s, k))).collect();
    let reps = run_indexed(tasks.len(), cfg.jobs, |i| {
        let (s, k) = tasks[i];
        let sigma = p.sigmas[s];
        let r = run_replicate(p, sigma, cfg.replicate_seed(k, &format!("{id}/{}", param_label(sigma))))?;
        log::debug!("sigma_mis={sigma} replicate {k}: symkl {:.4} band {:.3}", r.symkl, r.band_fraction);
        Ok(r)
    })?;
    let nb = p.nbins;
    let mut results = Vec::new();
    let mut records = Vec::new();
    for (s, &sigma) in p.sigmas.iter().enumerate() {
        let per: Vec<&ReplicateDiagnostics> =
            tasks.iter().zip(&reps).filter(|((si, _), _)| *si == s).map(|(_, r)| r).collect();
        let col = |f: fn(&ReplicateDiagnostics) -> f64| summarize(&per.iter().map(|r| f(r)).collect::<Vec<_>>());
        let mut joint = vec![0u64; nb * nb];
        for r in &per {
            for (acc, c) in joint.iter_mut().zip(&r.joint_counts) {
                *acc += c;
            }
        }
        let pooled = crate::diagnostics::Histogram2D { nbins: nb, counts: joint.clone() }.diagonal_band_fraction(p.band);
        results.push(SigmaResult {
            sigma_mis: sigma,
            symkl: col(|r| r.symkl)?,
            band_fraction: col(|r| r.band_fraction)?,
            delta_circular_std: col(|r| r.delta_circular_std)?,
            density_mod1: mean_columns(&per.iter().map(|r| &r.density_mod1).collect::<Vec<_>>()),
            density_mod2: mean_columns(&per.iter().map(|r| &r.density_mod2).collect::<Vec<_>>()),
            joint_counts: joint,
            pooled_band_fraction: pooled,
            delta_density: mean_columns(&per.iter().map(|r| &r.delta_density).collect::<Vec<_>>()),
        });
        for (k, r) in per.iter().enumerate() {
            let mut rec = RunRecord::new(id, k as u64);
            rec.config.push(("sigma_mis".into(), param_label(sigma)));
            rec.push("symkl_sum", r.symkl)?;
            rec.push("band_fraction", r.band_fraction)?;
            rec.push("delta_circular_std", r.delta_circular_std)?;
            rec.push("final_loss", r.final_loss)?;
            records.push(rec);
        }
    }
    Ok(MmGapOutput { nbins: nb, results, records })
}

pub fn gap_rows(out: &MmGapOutput) -> Vec<Vec<Value>> {
    out.results
        .iter()
        .map(|r| {
            vec![r.sigma_mis.into(), r.symkl.count.into(), r.symkl.mean.into(), r.symkl.std.into(), r.symkl.stderr.into()]
        })
        .collect()
}

pub fn write(out: &MmGapOutput, dir: &Path) -> Result<()> {
    let nb = out.nbins;
    write_csv(&dir.join("gap_curve.csv"), &GAP_HEADER, &gap_rows(out))?;
    for r in &out.results {
        let label = param_label(r.sigma_mis);
        let marg: Vec<Vec<Value>> = (0..nb)
            .map(|i| vec![bin_center(i, nb).into(), r.density_mod1[i].into(), r.density_mod2[i].into()])
            .collect();
        write_csv(&dir.join(format!("marginals_{label}.csv")), &MARGINALS_HEADER, &marg)?;
        let joint: Vec<Vec<Value>> = (0..nb * nb)
            .map(|k| vec![(k / nb).into(), (k % nb).into(), (r.joint_counts[k] as usize).into()])
            .collect();
        write_csv(&dir.join(format!("joint_{label}.csv")), &JOINT_HEADER, &joint)?;
        let delta: Vec<Vec<Value>> = (0..nb).map(|i| vec![bin_center(i, nb).into(), r.delta_density[i].into()]).collect();
        write_csv(&dir.join(format!("delta_{label}.csv")), &DELTA_HEADER, &delta)?;
    }
    let rows: Vec<Vec<Value>> = out.records.iter().flat_map(RunRecord::rows).collect();
    write_csv(&dir.join("runs.csv"), &RunRecord::HEADER, &rows)
}
