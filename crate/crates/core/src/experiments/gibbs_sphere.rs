//! Gibbs concentration on S²: importance-sampled equilibria against trained
//! particle clouds across a temperature sweep.

use super::{param_label, run_indexed, summarize, ExperimentConfig, Summary};
use crate::error::{Error, Result};
use crate::intrinsic::gibbs_importance_sampler;
use crate::io::{write_csv, RunRecord, Value};
use crate::kernel::Temperature;
use crate::manifold::normalize;
use crate::particles::{cap_mass_points, train_particles, TrainConfig, TwoWellPotential, Vec3};
use crate::rng::seeded;
use std::path::Path;

pub const HEADER: [&str; 5] =
    ["tau", "capmass_trained_mean", "capmass_trained_std", "capmass_gibbs_mean", "capmass_gibbs_std"];

pub const CLOUD_HEADER: [&str; 3] = ["x", "y", "z"];

pub const KEYS: [&str; 15] = [
    "gamma", "kappa", "w", "m1", "m2", "h", "steps", "lr", "noise_sigma", "n_mc", "viz_pool", "viz_draws", "eps",
    "particles", "taus",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSphereParams {
    pub potential: TwoWellPotential,
    pub h: f64,
    pub steps: usize,
    pub lr: f64,
    pub noise_sigma: f64,
    pub n_mc: usize,
    pub viz_pool: usize,
    pub viz_draws: usize,
    pub eps: f64,
    pub particles: usize,
    pub taus: Vec<f64>,
}

impl Default for GibbsSphereParams {
    fn default() -> Self {
        GibbsSphereParams {
            potential: TwoWellPotential::standard(),
            h: 0.35,
            steps: 5000,
            lr: 0.05,
            noise_sigma: 0.06,
            n_mc: 120_000,
            viz_pool: 24_000,
            viz_draws: 2400,
            eps: 0.5,
            particles: 256,
            taus: vec![10.0, 5.0, 2.5, 1.0, 0.5, 0.2, 0.1],
        }
    }
}

impl GibbsSphereParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.warn_unknown(&KEYS);
        let d = GibbsSphereParams::default();
        let dp = &d.potential;
        let center = |key: &str, default: &[f64]| -> Result<_> { normalize(&cfg.f64_list_or(key, default)?) };
        let potential = TwoWellPotential::new(
            cfg.f64_or("gamma", dp.gamma)?,
            cfg.f64_or("kappa", dp.kappa)?,
            cfg.f64_or("w", dp.w)?,
            center("m1", dp.m1.coords())?,
            center("m2", dp.m2.coords())?,
        )?;
        let p = GibbsSphereParams {
            potential,
            h: cfg.f64_or("h", d.h)?,
            steps: cfg.usize_or("steps", d.steps)?,
            lr: cfg.f64_or("lr", d.lr)?,
            noise_sigma: cfg.f64_or("noise_sigma", d.noise_sigma)?,
            n_mc: cfg.usize_or("n_mc", d.n_mc)?,
            viz_pool: cfg.usize_or("viz_pool", d.viz_pool)?,
            viz_draws: cfg.usize_or("viz_draws", d.viz_draws)?,
            eps: cfg.f64_or("eps", d.eps)?,
            particles: cfg.usize_or("particles", d.particles)?,
            taus: cfg.f64_list_or("taus", &d.taus)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::invalid("taus must list at least one temperature"));
        }
        for &t in &self.taus {
            Temperature::new(t)?;
        }
        if self.viz_draws > self.viz_pool {
            return Err(Error::PoolTooSmall { requested: self.viz_draws, available: self.viz_pool });
        }
        if self.n_mc == 0 || self.particles < 2 || self.steps == 0 {
            return Err(Error::invalid("n_mc, steps must be positive and particles at least 2"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        Ok(())
    }

    fn train_config(&self, tau: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            m: self.particles,
            tau,
            h: self.h,
            steps: self.steps,
            lr: self.lr,
            noise_sigma: self.noise_sigma,
            seed,
            trace_every: self.steps,
        }
    }
}

/// Self-normalized importance estimate of the Gibbs cap mass.
pub fn gibbs_cap_mass(p: &GibbsSphereParams, tau: f64, seed: u64) -> Result<f64> {
    let pot = &p.potential;
    let centers = pot.centers();
    let sample = gibbs_importance_sampler(|z| pot.value(z), Temperature::new(tau)?, p.n_mc, 0, &mut seeded(seed))?;
    Ok(sample.expect(|z| if cap_mass_points(&[z], &centers, p.eps) > 0.0 { 1.0 } else { 0.0 }))
}

/// Gibbs points drawn without replacement from the visualization pool.
pub fn gibbs_cloud(p: &GibbsSphereParams, tau: f64, seed: u64) -> Result<Vec<Vec3>> {
    let pot = &p.potential;
    let sample =
        gibbs_importance_sampler(|z| pot.value(z), Temperature::new(tau)?, p.viz_pool, p.viz_draws, &mut seeded(seed))?;
    Ok(sample.draw_points().into_iter().map(|z| [z[0], z[1], z[2]]).collect())
}

/// Cap mass and final cloud of one trained replicate.
pub fn trained_replicate(p: &GibbsSphereParams, tau: f64, seed: u64) -> Result<(f64, Vec<Vec3>)> {
    let result = train_particles(&p.train_config(tau, seed), &p.potential)?;
    let cloud = result.cloud.projected().to_vec();
    Ok((cap_mass_points(&cloud, &p.potential.centers(), p.eps), cloud))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationRow {
    pub tau: f64,
    pub trained: Summary,
    pub gibbs: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureClouds {
    pub tau: f64,
    pub gibbs: Vec<Vec3>,
    /// Trained particles of replicate 0.
    pub trained: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSphereOutput {
    pub rows: Vec<ConcentrationRow>,
    pub clouds: Vec<TemperatureClouds>,
    pub records: Vec<RunRecord>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<GibbsSphereOutput> {
    let p = GibbsSphereParams::from_config(cfg)?;
    run_with(cfg, &p)
}

pub fn run_with(cfg: &ExperimentConfig, p: &GibbsSphereParams) -> Result<GibbsSphereOutput> {
    p.validate()?;
    let id = cfg.kind.id();
    let tasks: Vec<(usize, usize)> = (0..p.taus.len()).flat_map(|t| (0..cfg.seeds).map(move |k| (t, k))).collect();
    let results = run_indexed(tasks.len(), cfg.jobs, |i| {
        let (t, k) = tasks[i];
        let tau = p.taus[t];
        let label = param_label(tau);
        let gibbs = gibbs_cap_mass(p, tau, cfg.replicate_seed(k, &format!("{id}/gibbs/{label}")))?;
        let (trained, cloud) = trained_replicate(p, tau, cfg.replicate_seed(k, &format!("{id}/trained/{label}")))?;
        log::debug!("tau={label} replicate {k}: trained {trained:.3} gibbs {gibbs:.3}");
        Ok((gibbs, trained, if k == 0 { Some(cloud) } else { None }))
    })?;
    let mut rows = Vec::new();
    let mut clouds = Vec::new();
    let mut records = Vec::new();
    for (t, &tau) in p.taus.iter().enumerate() {
        let per: Vec<&(f64, f64, Option<Vec<Vec3>>)> =
            tasks.iter().zip(&results).filter(|((ti, _), _)| *ti == t).map(|(_, r)| r).collect();
        let gibbs: Vec<f64> = per.iter().map(|r| r.0).collect();
        let trained: Vec<f64> = per.iter().map(|r| r.1).collect();
        rows.push(ConcentrationRow { tau, trained: summarize(&trained)?, gibbs: summarize(&gibbs)? });
        let viz = gibbs_cloud(p, tau, cfg.replicate_seed(0, &format!("{id}/viz/{}", param_label(tau))))?;
        let first = per[0].2.clone().expect("replicate 0 keeps its cloud");
        clouds.push(TemperatureClouds { tau, gibbs: viz, trained: first });
        for (k, r) in per.iter().enumerate() {
            let mut rec = RunRecord::new(id, k as u64);
            rec.config.push(("tau".into(), param_label(tau)));
            rec.push("capmass_gibbs", r.0)?;
            rec.push("capmass_trained", r.1)?;
            records.push(rec);
        }
    }
    Ok(GibbsSphereOutput { rows, clouds, records })
}

pub fn csv_rows(out: &GibbsSphereOutput) -> Vec<Vec<Value>> {
    out.rows
        .iter()
        .map(|r| vec![r.tau.into(), r.trained.mean.into(), r.trained.std.into(), r.gibbs.mean.into(), r.gibbs.std.into()])
        .collect()
}

fn cloud_rows(points: &[Vec3]) -> Vec<Vec<Value>> {
    points.iter().map(|p| vec![p[0].into(), p[1].into(), p[2].into()]).collect()
}

pub fn cloud_file_name(tau: f64, kind: &str) -> String {
    format!("cloud_{}_{kind}.csv", param_label(tau))
}

pub fn write(out: &GibbsSphereOutput, dir: &Path) -> Result<()> {
    write_csv(&dir.join("concentration.csv"), &HEADER, &csv_rows(out))?;
    for c in &out.clouds {
        write_csv(&dir.join(cloud_file_name(c.tau, "gibbs")), &CLOUD_HEADER, &cloud_rows(&c.gibbs))?;
        write_csv(&dir.join(cloud_file_name(c.tau, "trained")), &CLOUD_HEADER, &cloud_rows(&c.trained))?;
    }
    let rows: Vec<Vec<Value>> = out.records.iter().flat_map(RunRecord::rows).collect();
    write_csv(&dir.join("runs.csv"), &RunRecord::HEADER, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentKind;

    fn small() -> GibbsSphereParams {
        GibbsSphereParams {
            steps: 20,
            n_mc: 4000,
            viz_pool: 600,
            viz_draws: 60,
            particles: 24,
            taus: vec![10.0, 0.1],
            ..Default::default()
        }
    }

    #[test]
    fn gibbs_baseline_concentrates_at_low_temperature() {
        let p = GibbsSphereParams { n_mc: 40_000, ..small() };
        assert!(gibbs_cap_mass(&p, 0.1, 1).unwrap() > gibbs_cap_mass(&p, 10.0, 1).unwrap());
    }

    #[test]
    fn small_run_has_expected_shape_and_is_reproducible() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::GibbsSphere);
        cfg.seeds = 2;
        let out = run_with(&cfg, &small()).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.records.len(), 4);
        for c in &out.clouds {
            assert_eq!(c.gibbs.len(), 60);
            assert_eq!(c.trained.len(), 24);
        }
        cfg.jobs = 2;
        assert_eq!(out, run_with(&cfg, &small()).unwrap());
    }

    #[test]
    fn cloud_names_use_shortest_labels() {
        assert_eq!(cloud_file_name(10.0, "gibbs"), "cloud_10_gibbs.csv");
        assert_eq!(cloud_file_name(0.1, "trained"), "cloud_0.1_trained.csv");
    }

    #[test]
    fn draws_cannot_exceed_pool() {
        assert!(GibbsSphereParams { viz_draws: 700, ..small() }.validate().is_err());
    }
}
