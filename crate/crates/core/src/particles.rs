//! Particle surrogate for the Gibbs equilibrium on S²: a two-well potential, a
//! wrapped-Gaussian KDE entropy term and a noisy Adam descent loop.

use crate::error::{Error, Result};
use crate::grad::{langevin_noise_in_place, AdamState};
use crate::kernel::Temperature;
use crate::linalg::dot;
use crate::manifold::{geodesic_distance_raw, normalize, sample_uniform_sphere, UnitVector, MIN_NORM};
use crate::rng::{seeded, Prng};

/// Inner products are clamped to `[−1 + δ, 1 − δ]` before `acos` in the KDE.
pub const KDE_CLAMP: f64 = 1e-7;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct TwoWellPotential {
    pub gamma: f64,
    pub kappa: f64,
    pub w: f64,
    pub m1: UnitVector,
    pub m2: UnitVector,
}

impl TwoWellPotential {
    pub fn new(gamma: f64, kappa: f64, w: f64, m1: UnitVector, m2: UnitVector) -> Result<Self> {
        if !(gamma > 0.0 && kappa > 0.0) {
            return Err(Error::invalid("two-well potential needs gamma, kappa > 0"));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::invalid(format!("mixture weight {w} outside [0, 1]")));
        }
        if m1.dim() != 3 || m2.dim() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: m1.dim().max(m2.dim()) });
        }
        Ok(TwoWellPotential { gamma, kappa, w, m1, m2 })
    }

    /// γ = κ = 12, w = 0.5, m₁ = (0, 0, 1), m₂ = normalize(0.85, 0.15, −0.50).
    pub fn standard() -> Self {
        TwoWellPotential {
            gamma: 12.0,
            kappa: 12.0,
            w: 0.5,
            m1: UnitVector::from_unit(vec![0.0, 0.0, 1.0]),
            m2: normalize(&[0.85, 0.15, -0.50]).expect("nonzero"),
        }
    }

    pub fn centers(&self) -> [&[f64]; 2] {
        [self.m1.coords(), self.m2.coords()]
    }

    /// Log-weights of the two modes at `z` (may be −∞ for a zero weight).
    fn logits(&self, z: &[f64]) -> (f64, f64) {
        (
            self.w.ln() + self.kappa * dot(z, self.m1.coords()),
            (1.0 - self.w).ln() + self.kappa * dot(z, self.m2.coords()),
        )
    }

    /// `U(z) = −(1/γ) log(w e^{κ⟨z,m₁⟩} + (1−w) e^{κ⟨z,m₂⟩})`.
    pub fn value(&self, z: &[f64]) -> f64 {
        let (a, b) = self.logits(z);
        let hi = a.max(b);
        let lse = hi + ((a - hi).exp() + (b - hi).exp()).ln();
        -lse / self.gamma
    }

    /// Ambient gradient `∂U/∂z`.
    pub fn grad(&self, z: &[f64]) -> Vec3 {
        let (a, b) = self.logits(z);
        let hi = a.max(b);
        let (ea, eb) = ((a - hi).exp(), (b - hi).exp());
        let (p1, p2) = (ea / (ea + eb), eb / (ea + eb));
        let c = -self.kappa / self.gamma;
        let (m1, m2) = (self.m1.coords(), self.m2.coords());
        [
            c * (p1 * m1[0] + p2 * m2[0]),
            c * (p1 * m1[1] + p2 * m2[1]),
            c * (p1 * m1[2] + p2 * m2[2]),
        ]
    }
}

pub fn two_well_u(p: &TwoWellPotential, z: &UnitVector) -> Result<f64> {
    if z.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: z.dim() });
    }
    Ok(p.value(z.coords()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeBandwidth(f64);

impl KdeBandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(KdeBandwidth(h))
        } else {
            Err(Error::invalid(format!("bandwidth must be positive, got {h}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// M particles: unconstrained ambient coordinates and their projections to S².
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    ambient: Vec<Vec3>,
    projected: Vec<Vec3>,
}

fn project(v: &Vec3) -> Result<Vec3> {
    let n = dot(v, v).sqrt();
    if !n.is_finite() {
        return Err(Error::NonFinite(n));
    }
    if n <= MIN_NORM {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

impl ParticleCloud {
    pub fn from_ambient(ambient: Vec<Vec3>) -> Result<Self> {
        if ambient.len() < 2 {
            return Err(Error::invalid("a particle cloud needs at least two particles"));
        }
        let projected = ambient.iter().map(project).collect::<Result<Vec<_>>>()?;
        Ok(ParticleCloud { ambient, projected })
    }

    /// `m` i.i.d. uniform particles on S².
    pub fn uniform(m: usize, rng: &mut Prng) -> Result<Self> {
        let pts = sample_uniform_sphere(rng, 3, m)?;
        Self::from_ambient(pts.iter().map(|p| [p.coords()[0], p.coords()[1], p.coords()[2]]).collect())
    }

    pub fn len(&self) -> usize {
        self.projected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projected.is_empty()
    }

    pub fn ambient(&self) -> &[Vec3] {
        &self.ambient
    }

    pub fn projected(&self) -> &[Vec3] {
        &self.projected
    }

    fn set_ambient(&mut self, ambient: Vec<Vec3>) -> Result<()> {
        self.projected = ambient.iter().map(project).collect::<Result<Vec<_>>>()?;
        self.ambient = ambient;
        Ok(())
    }
}

#[inline]
fn clamped_cos(z: &Vec3, w: &Vec3) -> f64 {
    (z[0] * w[0] + z[1] * w[1] + z[2] * w[2]).clamp(-1.0 + KDE_CLAMP, 1.0 - KDE_CLAMP)
}

/// ρ̂_h(z_i) = (1/M) Σ_j exp(−d(z_i, z_j)² / 2h²), self term included.
pub fn kde_hat(cloud: &ParticleCloud, i: usize, h: KdeBandwidth) -> Result<f64> {
    let pts = cloud.projected();
    let zi = pts.get(i).ok_or_else(|| Error::invalid(format!("particle index {i} out of range")))?;
    let inv = 1.0 / (2.0 * h.0 * h.0);
    let total: f64 = pts
        .iter()
        .enumerate()
        .map(|(j, zj)| {
            if j == i {
                1.0
            } else {
                let d = clamped_cos(zi, zj).acos();
                (-d * d * inv).exp()
            }
        })
        .sum();
    Ok(total / pts.len() as f64)
}

/// All ρ̂ values at once, exploiting the symmetry of the kernel.
fn kde_all(pts: &[Vec3], h: f64) -> Vec<f64> {
    let m = pts.len();
    let inv = 1.0 / (2.0 * h * h);
    let mut rho = vec![1.0; m];
    for i in 0..m {
        for j in i + 1..m {
            let d = clamped_cos(&pts[i], &pts[j]).acos();
            let k = (-d * d * inv).exp();
            rho[i] += k;
            rho[j] += k;
        }
    }
    rho.iter_mut().for_each(|r| *r /= m as f64);
    rho
}

/// F̂ = (1/τ)(1/M) Σ U(z_i) + (1/M) Σ log ρ̂_h(z_i).
pub fn particle_objective(cloud: &ParticleCloud, p: &TwoWellPotential, tau: Temperature, h: KdeBandwidth) -> f64 {
    let pts = cloud.projected();
    let m = pts.len() as f64;
    let binding: f64 = pts.iter().map(|z| p.value(z)).sum::<f64>() / (tau.value() * m);
    let entropy: f64 = kde_all(pts, h.0).iter().map(|r| r.ln()).sum::<f64>() / m;
    binding + entropy
}

/// Objective and its gradient with respect to the ambient coordinates `v_i`.
pub fn particle_objective_grad(
    cloud: &ParticleCloud,
    p: &TwoWellPotential,
    tau: Temperature,
    h: KdeBandwidth,
) -> Result<(f64, Vec<Vec3>)> {
    let pts = cloud.projected();
    let n = pts.len();
    let m = n as f64;
    let h2 = h.0 * h.0;
    let inv = 1.0 / (2.0 * h2);

    // One pass over pairs accumulates ρ̂ and caches K_ij d_ij / (h² √(1 − t²)).
    let mut rho = vec![1.0; n];
    let mut pair_a = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let t = clamped_cos(&pts[i], &pts[j]);
            let d = t.acos();
            let k = (-d * d * inv).exp();
            rho[i] += k;
            rho[j] += k;
            pair_a.push(k * d / (h2 * (1.0 - t * t).sqrt()));
        }
    }
    rho.iter_mut().for_each(|r| *r /= m);

    let mut gz = vec![[0.0; 3]; n];
    let mut binding = 0.0;
    let scale_u = 1.0 / (tau.value() * m);
    for (i, z) in pts.iter().enumerate() {
        binding += p.value(z);
        let gu = p.grad(z);
        for c in 0..3 {
            gz[i][c] = scale_u * gu[c];
        }
    }
    let inv_rho: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
    let m2 = 1.0 / (m * m);
    let mut idx = 0;
    for i in 0..n {
        for j in i + 1..n {
            let c = m2 * (inv_rho[i] + inv_rho[j]) * pair_a[idx];
            idx += 1;
            let (zi, zj) = (pts[i], pts[j]);
            for k in 0..3 {
                gz[i][k] += c * zj[k];
                gz[j][k] += c * zi[k];
            }
        }
    }

    let value = binding * scale_u + rho.iter().map(|r| r.ln()).sum::<f64>() / m;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut gv = vec![[0.0; 3]; n];
    for i in 0..n {
        let z = &pts[i];
        let v = &cloud.ambient()[i];
        let vn = dot(v, v).sqrt();
        let gzz = dot(&gz[i], z);
        for k in 0..3 {
            gv[i][k] = (gz[i][k] - gzz * z[k]) / vn;
        }
        if gv[i].iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss);
        }
    }
    Ok((value, gv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub m: usize,
    pub tau: f64,
    pub h: f64,
    pub steps: usize,
    pub lr: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Record the objective every `trace_every` steps (and after the last step).
    pub trace_every: usize,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub cloud: ParticleCloud,
    /// `(step, objective)` pairs; step 0 is the initialization.
    pub trace: Vec<(usize, f64)>,
}

/// A resumable training loop; one call to [`ParticleTrainer::step`] is one iteration.
#[derive(Debug, Clone)]
pub struct ParticleTrainer {
    pub cloud: ParticleCloud,
    potential: TwoWellPotential,
    tau: Temperature,
    h: KdeBandwidth,
    noise_sigma: f64,
    adam: AdamState,
    rng: Prng,
    flat: Vec<f64>,
}

impl ParticleTrainer {
    pub fn new(cfg: &TrainConfig, potential: TwoWellPotential) -> Result<Self> {
        let tau = Temperature::new(cfg.tau)?;
        let h = KdeBandwidth::new(cfg.h)?;
        if !(cfg.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be nonnegative"));
        }
        let mut rng = seeded(cfg.seed);
        let cloud = ParticleCloud::uniform(cfg.m, &mut rng)?;
        Ok(ParticleTrainer {
            adam: AdamState::new(3 * cfg.m, cfg.lr),
            flat: vec![0.0; 3 * cfg.m],
            cloud,
            potential,
            tau,
            h,
            noise_sigma: cfg.noise_sigma,
            rng,
        })
    }

    pub fn objective(&self) -> f64 {
        particle_objective(&self.cloud, &self.potential, self.tau, self.h)
    }

    /// Gradient, Adam update, Gaussian perturbation, re-projection. Returns the
    /// objective at the iterate the gradient was taken at.
    pub fn step(&mut self) -> Result<f64> {
        let (value, g) = particle_objective_grad(&self.cloud, &self.potential, self.tau, self.h)?;
        let gflat: Vec<f64> = g.iter().flatten().copied().collect();
        for (dst, src) in self.flat.iter_mut().zip(self.cloud.ambient().iter().flatten()) {
            *dst = *src;
        }
        self.adam.update(&mut self.flat, &gflat)?;
        langevin_noise_in_place(&mut self.flat, self.noise_sigma, &mut self.rng);
        let next: Vec<Vec3> = self
            .flat
            .chunks_exact(3)
            .map(|c| project(&[c[0], c[1], c[2]]))
            .collect::<Result<_>>()?;
        self.cloud.set_ambient(next)?;
        Ok(value)
    }
}

pub fn train_particles(cfg: &TrainConfig, p: &TwoWellPotential) -> Result<TrainResult> {
    if cfg.steps == 0 {
        return Err(Error::invalid("training needs at least one step"));
    }
    let every = cfg.trace_every.max(1);
    let mut trainer = ParticleTrainer::new(cfg, p.clone())?;
    let mut trace = Vec::new();
    for s in 0..cfg.steps {
        let v = trainer.step()?;
        if s % every == 0 {
            trace.push((s, v));
        }
    }
    trace.push((cfg.steps, trainer.objective()));
    Ok(TrainResult { cloud: trainer.cloud, trace })
}

/// Fraction of points within geodesic radius `eps` of any center.
pub fn cap_mass_points<P: AsRef<[f64]>>(points: &[P], centers: &[&[f64]], eps: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let inside = points
        .iter()
        .filter(|z| centers.iter().any(|c| geodesic_distance_raw(z.as_ref(), c) <= eps))
        .count();
    inside as f64 / points.len() as f64
}
