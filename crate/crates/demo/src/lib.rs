//! Browser bindings for three small views of the library: Gibbs clouds on the
//! sphere as the temperature moves, live particle descent toward the same
//! equilibrium, and the spike construction on a circle grid.
//!
//! Everything below the `#[wasm_bindgen]` wrappers is ordinary Rust so it can be
//! tested natively.

use contrastive_geometry::intrinsic::{
    coordinate_lower_bound, effective_potential, gibbs_importance_sampler, mm_free_energy, sigma_spike_density,
    spike_gap_bound, DiscreteDensity, FloorConstraint, Grid, PotentialField,
};
use contrastive_geometry::kernel::Temperature;
use contrastive_geometry::particles::{cap_mass_points, ParticleTrainer, TrainConfig, TwoWellPotential};
use contrastive_geometry::rng::seeded;
use contrastive_geometry::Result;
use wasm_bindgen::prelude::*;

const CAP_EPS: f64 = 0.5;

fn cap_mass_of(potential: &TwoWellPotential, points: &[[f64; 3]]) -> f64 {
    cap_mass_points(points, &potential.centers(), CAP_EPS)
}

/// Gibbs draws under the two-well potential, flattened as `x0 y0 z0 x1 ...`,
/// with their cap mass.
#[derive(Debug, Clone)]
pub struct CloudData {
    pub xyz: Vec<f64>,
    pub cap_mass: f64,
}

pub fn gibbs_cloud_data(tau: f64, n_pool: usize, n_draw: usize, seed: u64) -> Result<CloudData> {
    let p = TwoWellPotential::standard();
    let sample = gibbs_importance_sampler(|z| p.value(z), Temperature::new(tau)?, n_pool, n_draw, &mut seeded(seed))?;
    let points: Vec<[f64; 3]> = sample.draw_points().iter().map(|z| [z[0], z[1], z[2]]).collect();
    Ok(CloudData { cap_mass: cap_mass_of(&p, &points), xyz: points.into_iter().flatten().collect() })
}

#[wasm_bindgen]
pub struct GibbsCloud(CloudData);

#[wasm_bindgen]
impl GibbsCloud {
    #[wasm_bindgen(constructor)]
    pub fn new(tau: f64, n_pool: usize, n_draw: usize, seed: u64) -> std::result::Result<GibbsCloud, JsError> {
        gibbs_cloud_data(tau, n_pool, n_draw, seed).map(GibbsCloud).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn xyz(&self) -> Vec<f64> {
        self.0.xyz.clone()
    }

    pub fn cap_mass(&self) -> f64 {
        self.0.cap_mass
    }
}

/// Particle descent on the KDE free-energy surrogate, stepped from the page.
#[wasm_bindgen]
pub struct ParticleSim {
    trainer: ParticleTrainer,
    potential: TwoWellPotential,
    steps: usize,
    last_objective: f64,
}

impl ParticleSim {
    pub fn try_new(m: usize, tau: f64, seed: u64) -> Result<Self> {
        let cfg = TrainConfig { m, tau, h: 0.35, steps: 1, lr: 0.05, noise_sigma: 0.06, seed, trace_every: 1 };
        let potential = TwoWellPotential::standard();
        let trainer = ParticleTrainer::new(&cfg, potential.clone())?;
        let last_objective = trainer.objective();
        Ok(ParticleSim { trainer, potential, steps: 0, last_objective })
    }

    pub fn try_advance(&mut self, n: usize) -> Result<f64> {
        for _ in 0..n {
            self.last_objective = self.trainer.step()?;
            self.steps += 1;
        }
        Ok(self.last_objective)
    }
}

#[wasm_bindgen]
impl ParticleSim {
    #[wasm_bindgen(constructor)]
    pub fn new(m: usize, tau: f64, seed: u64) -> std::result::Result<ParticleSim, JsError> {
        ParticleSim::try_new(m, tau, seed).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Runs `n` iterations and returns the last objective value.
    pub fn advance(&mut self, n: usize) -> std::result::Result<f64, JsError> {
        self.try_advance(n).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn xyz(&self) -> Vec<f64> {
        self.trainer.cloud.projected().iter().flatten().copied().collect()
    }

    pub fn cap_mass(&self) -> f64 {
        cap_mass_of(&self.potential, self.trainer.cloud.projected())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn objective(&self) -> f64 {
        self.last_objective
    }
}

/// The σ-spike on a circle grid against a fixed second-modality density.
#[derive(Debug, Clone)]
pub struct SpikeData {
    pub angles: Vec<f64>,
    pub potential: Vec<f64>,
    pub rho2: Vec<f64>,
    pub spike: Vec<f64>,
    /// `F^mm(spike, ρ₂) − F★`.
    pub gap: f64,
    pub bound: f64,
}

pub fn spike_data(n: usize, tau: f64, sigma_fraction: f64, misalignment: f64) -> Result<SpikeData> {
    let grid = Grid::circle(n)?;
    let tau = Temperature::new(tau)?;
    let angle = |z: &[f64]| z[1].atan2(z[0]);
    let u12 = PotentialField::from_fn(&grid, |z| -(angle(z) - misalignment).cos())?;
    let u21 = PotentialField::from_fn(&grid, |z| -(angle(z) + misalignment).cos())?;
    let rho2 = DiscreteDensity::normalized(&grid, grid.points().iter().map(|z| (2.0 * angle(z).cos()).exp()).collect())?;
    let fc = FloorConstraint::default_for(&grid);
    let v = effective_potential(&u12, &rho2, tau)?;
    let sigma = sigma_fraction * (v.max() - v.min()).max(f64::MIN_POSITIVE);
    let spike = sigma_spike_density(&grid, &v, sigma, &fc)?;
    let f_star = coordinate_lower_bound(&grid, &rho2, &u12, &u21, &fc, tau)?;
    Ok(SpikeData {
        angles: grid.points().iter().map(|z| angle(z)).collect(),
        potential: v.values().to_vec(),
        rho2: rho2.values().to_vec(),
        spike: spike.values().to_vec(),
        gap: mm_free_energy(&grid, &spike, &rho2, &u12, &u21, tau)? - f_star,
        bound: spike_gap_bound(&grid, &v, &rho2, sigma, &fc)?,
    })
}

#[wasm_bindgen]
pub struct SpikeView(SpikeData);

#[wasm_bindgen]
impl SpikeView {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, tau: f64, sigma_fraction: f64, misalignment: f64) -> std::result::Result<SpikeView, JsError> {
        spike_data(n, tau, sigma_fraction, misalignment).map(SpikeView).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn angles(&self) -> Vec<f64> {
        self.0.angles.clone()
    }

    pub fn potential(&self) -> Vec<f64> {
        self.0.potential.clone()
    }

    pub fn rho2(&self) -> Vec<f64> {
        self.0.rho2.clone()
    }

    pub fn spike(&self) -> Vec<f64> {
        self.0.spike.clone()
    }

    pub fn gap(&self) -> f64 {
        self.0.gap
    }

    pub fn bound(&self) -> f64 {
        self.0.bound
    }
}
