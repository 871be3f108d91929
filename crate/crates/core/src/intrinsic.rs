//! Discrete-grid versions of the intrinsic functionals: free energy, Gibbs
//! equilibria, the multimodal functional with its symmetric divergence, the
//! coordinate-collapse spike and its lower bound, and the consistency identities.

use crate::error::{Error, Result};
use crate::kernel::{Critic, Temperature};
use crate::linalg::dot;
use crate::manifold::{geodesic_distance_raw, sphere_area, ManifoldKind};
use crate::rng::{open_unit, standard_normal, Prng};
use std::f64::consts::PI;

const NORMALIZATION_TOL: f64 = 1e-10;

/// Quadrature points with positive weights summing to μ(Z).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    manifold: ManifoldKind,
}

impl Grid {
    /// `n` equally spaced points on S¹, embedded in R².
    pub fn circle(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let points = (0..n)
            .map(|i| {
                let a = -PI + 2.0 * PI * (i as f64 + 0.5) / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        Ok(Grid { points, weights: vec![2.0 * PI / n as f64; n], manifold: ManifoldKind::Sphere(2) })
    }

    /// Fibonacci lattice on S² with equal weights 4π/n.
    pub fn fibonacci_sphere(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let golden = PI * (3.0 - 5f64.sqrt());
        let points = (0..n)
            .map(|i| {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * i as f64;
                vec![r * phi.cos(), r * phi.sin(), z]
            })
            .collect();
        Ok(Grid { points, weights: vec![sphere_area(3) / n as f64; n], manifold: ManifoldKind::Sphere(3) })
    }

    pub fn with_weights(points: Vec<Vec<f64>>, weights: Vec<f64>, manifold: ManifoldKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch(points.len(), weights.len()));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("grid weight {w} must be positive and finite")));
        }
        Ok(Grid { points, weights, manifold })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn manifold(&self) -> ManifoldKind {
        self.manifold
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ fᵢ μᵢ`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    pub fn uniform(&self) -> DiscreteDensity {
        DiscreteDensity { rho: vec![1.0 / self.measure(); self.len()] }
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::LengthMismatch(n, self.len()));
        }
        Ok(())
    }
}

/// Density values on a grid, normalized so that `Σ ρᵢ μᵢ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDensity {
    rho: Vec<f64>,
}

impl DiscreteDensity {
    pub fn new(grid: &Grid, rho: Vec<f64>) -> Result<Self> {
        grid.check(rho.len())?;
        if let Some((index, &value)) = rho.iter().enumerate().find(|(_, r)| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::NonPositiveDensity { index, value });
        }
        let mass = grid.integrate(&rho);
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!("density integrates to {mass}, expected 1")));
        }
        Ok(DiscreteDensity { rho })
    }

    /// Rescales nonnegative values to unit mass.
    pub fn normalized(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        grid.check(values.len())?;
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, r)| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::NonPositiveDensity { index, value });
        }
        let mass = grid.integrate(&values);
        if !(mass > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        Ok(DiscreteDensity { rho: values.into_iter().map(|v| v / mass).collect() })
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    fn require_positive(&self) -> Result<()> {
        match self.rho.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
            Some((index, &value)) => Err(Error::NonPositiveDensity { index, value }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    u: Vec<f64>,
}

impl PotentialField {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if let Some(&x) = u.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(x));
        }
        Ok(PotentialField { u })
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        PotentialField::new(vec![c; grid.len()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        PotentialField::new(grid.points.iter().map(|p| f(p)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn min(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorConstraint {
    floor: f64,
    excess: f64,
}

impl FloorConstraint {
    pub fn new(floor: f64, volume: f64) -> Result<Self> {
        if !(floor > 0.0) || floor * volume >= 1.0 {
            return Err(Error::InfeasibleFloor { floor, volume });
        }
        Ok(FloorConstraint { floor, excess: 1.0 - floor * volume })
    }

    /// Ten percent background mass: `ρ̲ = 0.1/μ(Z)`.
    pub fn default_for(grid: &Grid) -> Self {
        let v = grid.measure();
        FloorConstraint { floor: 0.1 / v, excess: 0.9 }
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn excess(&self) -> f64 {
        self.excess
    }
}

fn entropy_term(grid: &Grid, rho: &[f64]) -> f64 {
    rho.iter()
        .zip(&grid.weights)
        .map(|(&r, &w)| if r > 0.0 { r * r.ln() * w } else { 0.0 })
        .sum()
}

/// `D_KL(p‖q)` with `0 log 0 = 0`; a zero of `q` under positive `p` is an error.
pub fn kl_divergence(grid: &Grid, p: &DiscreteDensity, q: &DiscreteDensity) -> Result<f64> {
    grid.check(p.len())?;
    grid.check(q.len())?;
    let mut total = 0.0;
    for (i, ((&a, &b), &w)) in p.rho.iter().zip(&q.rho).zip(&grid.weights).enumerate() {
        if a > 0.0 {
            if !(b > 0.0) {
                return Err(Error::NonPositiveDensity { index: i, value: b });
            }
            total += a * (a / b).ln() * w;
        }
    }
    Ok(total)
}

/// `(1/τ) Σ uᵢρᵢμᵢ + Σ ρᵢ log ρᵢ μᵢ`.
pub fn free_energy(grid: &Grid, rho: &DiscreteDensity, u: &PotentialField, tau: Temperature) -> Result<f64> {
    grid.check(rho.len())?;
    grid.check(u.u.len())?;
    let binding: f64 = rho.rho.iter().zip(&u.u).zip(&grid.weights).map(|((r, u), w)| r * u * w).sum();
    Ok(binding / tau.value() + entropy_term(grid, &rho.rho))
}

/// Gibbs equilibrium `ρ ∝ exp(−u/τ)` and its log partition function.
pub fn gibbs_density(grid: &Grid, u: &PotentialField, tau: Temperature) -> Result<(DiscreteDensity, f64)> {
    grid.check(u.u.len())?;
    let t = tau.value();
    let shift = u.min();
    let raw: Vec<f64> = u.u.iter().map(|x| (-(x - shift) / t).exp()).collect();
    let z = grid.integrate(&raw);
    let log_z = z.ln() - shift / t;
    Ok((DiscreteDensity { rho: raw.into_iter().map(|r| r / z).collect() }, log_z))
}

/// Mass of `ρ` within geodesic radius `eps` of any center.
pub fn cap_mass(grid: &Grid, rho: &DiscreteDensity, centers: &[&[f64]], eps: f64) -> Result<f64> {
    grid.check(rho.len())?;
    let mut mass = 0.0;
    for ((p, r), w) in grid.points.iter().zip(&rho.rho).zip(&grid.weights) {
        if centers.iter().any(|c| geodesic_distance_raw(p, c) <= eps) {
            mass += r * w;
        }
    }
    Ok(mass.clamp(0.0, 1.0))
}

/// `D_S(ρ₁,ρ₂) = ½(D_KL(ρ₁‖ρ₂) + D_KL(ρ₂‖ρ₁))`, summed termwise so the result
/// is bit-exactly symmetric.
pub fn sym_kl(grid: &Grid, rho1: &DiscreteDensity, rho2: &DiscreteDensity) -> Result<f64> {
    grid.check(rho1.len())?;
    grid.check(rho2.len())?;
    rho1.require_positive()?;
    rho2.require_positive()?;
    let total: f64 = rho1
        .rho
        .iter()
        .zip(&rho2.rho)
        .zip(&grid.weights)
        .map(|((&a, &b), &w)| (a - b) * (a.ln() - b.ln()) * w)
        .sum();
    Ok(0.5 * total)
}

/// `½(F(ρ₁;U₁₂) + F(ρ₂;U₂₁)) − D_S(ρ₁,ρ₂)`.
pub fn mm_free_energy(
    grid: &Grid,
    rho1: &DiscreteDensity,
    rho2: &DiscreteDensity,
    u12: &PotentialField,
    u21: &PotentialField,
    tau: Temperature,
) -> Result<f64> {
    let ds = sym_kl(grid, rho1, rho2)?;
    let f1 = free_energy(grid, rho1, u12, tau)?;
    let f2 = free_energy(grid, rho2, u21, tau)?;
    Ok(0.5 * (f1 + f2) - ds)
}

/// `V(z) = u₁₂(z)/τ + log ρ₂(z)`.
pub fn effective_potential(u12: &PotentialField, rho2: &DiscreteDensity, tau: Temperature) -> Result<PotentialField> {
    if u12.u.len() != rho2.len() {
        return Err(Error::LengthMismatch(u12.u.len(), rho2.len()));
    }
    rho2.require_positive()?;
    PotentialField::new(u12.u.iter().zip(&rho2.rho).map(|(u, r)| u / tau.value() + r.ln()).collect())
}

/// Cells carrying the excess mass of the σ-spike.
pub fn spike_support(grid: &Grid, v: &PotentialField, sigma: f64) -> Result<Vec<usize>> {
    grid.check(v.u.len())?;
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let (lo, hi) = (v.min(), v.max());
    let range = if hi > lo { hi - lo } else { 1.0 };
    let target = sigma * grid.measure() / range;
    let mut support = Vec::new();
    let mut measure = 0.0;
    for (i, (&x, &w)) in v.u.iter().zip(&grid.weights).enumerate() {
        if x <= lo + sigma {
            if !support.is_empty() && measure + w > target {
                break;
            }
            support.push(i);
            measure += w;
        }
    }
    Ok(support)
}

/// `ρ^{(σ)} = ρ̲ + 1_S · M_ex/μ(S)`.
pub fn sigma_spike_density(grid: &Grid, v: &PotentialField, sigma: f64, fc: &FloorConstraint) -> Result<DiscreteDensity> {
    FloorConstraint::new(fc.floor, grid.measure())?;
    let support = spike_support(grid, v, sigma)?;
    let mu_s: f64 = support.iter().map(|&i| grid.weights[i]).sum();
    let mut rho = vec![fc.floor; grid.len()];
    for &i in &support {
        rho[i] += fc.excess / mu_s;
    }
    Ok(DiscreteDensity { rho })
}

/// `C(ρ₂) = ½F(ρ₂;U₂₁) − ½∫ρ₂ log ρ₂`, the part of `F^mm` that does not see ρ₁.
pub fn coordinate_constant(grid: &Grid, rho2: &DiscreteDensity, u21: &PotentialField, tau: Temperature) -> Result<f64> {
    rho2.require_positive()?;
    Ok(0.5 * free_energy(grid, rho2, u21, tau)? - 0.5 * entropy_term(grid, &rho2.rho))
}

/// `F₁(ρ₁) = ½∫ρ₁V + ½∫ρ₂ log ρ₁ + C(ρ₂)`, which equals `F^mm(ρ₁, ρ₂)`.
pub fn coordinate_functional(
    grid: &Grid,
    rho1: &DiscreteDensity,
    rho2: &DiscreteDensity,
    u12: &PotentialField,
    u21: &PotentialField,
    tau: Temperature,
) -> Result<f64> {
    rho1.require_positive()?;
    let v = effective_potential(u12, rho2, tau)?;
    let linear: f64 = grid.integrate(&rho1.rho.iter().zip(&v.u).map(|(r, v)| r * v).collect::<Vec<_>>());
    let barrier: f64 = grid.integrate(&rho2.rho.iter().zip(&rho1.rho).map(|(a, b)| a * b.ln()).collect::<Vec<_>>());
    Ok(0.5 * linear + 0.5 * barrier + coordinate_constant(grid, rho2, u21, tau)?)
}

/// `F★ = ½(ρ̲∫V + v★M_ex) + ½ log ρ̲ + C(ρ₂)`.
pub fn coordinate_lower_bound(
    grid: &Grid,
    rho2: &DiscreteDensity,
    u12: &PotentialField,
    u21: &PotentialField,
    fc: &FloorConstraint,
    tau: Temperature,
) -> Result<f64> {
    let v = effective_potential(u12, rho2, tau)?;
    let int_v = grid.integrate(&v.u);
    let c = coordinate_constant(grid, rho2, u21, tau)?;
    Ok(0.5 * (fc.floor * int_v + v.min() * fc.excess) + 0.5 * fc.floor.ln() + c)
}

/// `½(M_ex·σ + m_σ L_σ)` with `m_σ = ∫_S ρ₂` and `L_σ = log(1 + M_ex/(ρ̲ μ(S)))`.
pub fn spike_gap_bound(grid: &Grid, v: &PotentialField, rho2: &DiscreteDensity, sigma: f64, fc: &FloorConstraint) -> Result<f64> {
    let support = spike_support(grid, v, sigma)?;
    let mu_s: f64 = support.iter().map(|&i| grid.weights[i]).sum();
    let m_sigma: f64 = support.iter().map(|&i| rho2.rho[i] * grid.weights[i]).sum();
    let l_sigma = (1.0 + fc.excess / (fc.floor * mu_s)).ln();
    Ok(0.5 * (fc.excess * sigma + m_sigma * l_sigma))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub passed: bool,
    /// Smallest signed margin by which the strict inequality held.
    pub worst_margin: f64,
    pub trials: usize,
    /// Trials skipped because the two densities coincided.
    pub skipped: usize,
}

pub const PROBE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    Convex,
    Concave,
}

/// A random strictly positive density with log-normal cell values.
pub fn random_density(grid: &Grid, spread: f64, rng: &mut Prng) -> DiscreteDensity {
    let raw: Vec<f64> = (0..grid.len()).map(|_| (spread * standard_normal(rng)).exp()).collect();
    DiscreteDensity::normalized(grid, raw).expect("log-normal cells are positive")
}

/// A random density that respects the floor: `ρ̲ + M_ex · ρ_rand`.
pub fn random_floor_density(grid: &Grid, fc: &FloorConstraint, spread: f64, rng: &mut Prng) -> DiscreteDensity {
    let base = random_density(grid, spread, rng);
    DiscreteDensity { rho: base.rho.iter().map(|r| fc.floor + fc.excess * r).collect() }
}

/// Checks a strict Jensen inequality of `functional` along random chords.
pub fn jensen_probe(
    functional: impl Fn(&DiscreteDensity) -> Result<f64>,
    mut sample: impl FnMut(&mut Prng) -> DiscreteDensity,
    curvature: Curvature,
    trials: usize,
    rng: &mut Prng,
) -> Result<ProbeReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut worst = f64::INFINITY;
    let mut skipped = 0;
    for _ in 0..trials {
        let a = sample(rng);
        let b = sample(rng);
        if a == b {
            skipped += 1;
            continue;
        }
        let lambda = open_unit(rng);
        let mix = DiscreteDensity { rho: a.rho.iter().zip(&b.rho).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect() };
        let chord = lambda * functional(&a)? + (1.0 - lambda) * functional(&b)?;
        let at_mix = functional(&mix)?;
        let margin = match curvature {
            Curvature::Convex => chord - at_mix,
            Curvature::Concave => at_mix - chord,
        };
        worst = worst.min(margin);
    }
    Ok(ProbeReport { passed: worst > PROBE_SLACK, worst_margin: worst, trials, skipped })
}

/// Strict convexity of `ρ ↦ F(ρ)` over random positive densities.
pub fn convexity_probe(grid: &Grid, u: &PotentialField, tau: Temperature, trials: usize, rng: &mut Prng) -> Result<ProbeReport> {
    jensen_probe(|r| free_energy(grid, r, u, tau), |g| random_density(grid, 1.0, g), Curvature::Convex, trials, rng)
}

/// Strict concavity of `ρ₁ ↦ F^mm(ρ₁, ρ₂)` over floor-feasible ρ₁.
#[allow(clippy::too_many_arguments)]
pub fn concavity_probe(
    grid: &Grid,
    u12: &PotentialField,
    u21: &PotentialField,
    rho2: &DiscreteDensity,
    fc: &FloorConstraint,
    tau: Temperature,
    trials: usize,
    rng: &mut Prng,
) -> Result<ProbeReport> {
    jensen_probe(
        |r| mm_free_energy(grid, r, rho2, u12, u21, tau),
        |g| random_floor_density(grid, fc, 1.0, g),
        Curvature::Concave,
        trials,
        rng,
    )
}

/// `(F(q) − [(1/τ)∫uq + ∫q log q̃], D_KL(q‖q̃))`.
pub fn unimodal_consistency_identity(
    grid: &Grid,
    q: &DiscreteDensity,
    qsmooth: &DiscreteDensity,
    u: &PotentialField,
    tau: Temperature,
) -> Result<(f64, f64)> {
    q.require_positive()?;
    qsmooth.require_positive()?;
    let f = free_energy(grid, q, u, tau)?;
    let j = parametric_energy_grid(grid, q, qsmooth, u, tau)?;
    Ok((f - j, kl_divergence(grid, q, qsmooth)?))
}

/// Grid version of `J = (1/τ)U(q) − H×(q, q̃)`.
pub fn parametric_energy_grid(
    grid: &Grid,
    q: &DiscreteDensity,
    qsmooth: &DiscreteDensity,
    u: &PotentialField,
    tau: Temperature,
) -> Result<f64> {
    grid.check(q.len())?;
    grid.check(u.u.len())?;
    qsmooth.require_positive()?;
    let binding = grid.integrate(&q.rho.iter().zip(&u.u).map(|(r, u)| r * u).collect::<Vec<_>>()) / tau.value();
    let cross = -grid.integrate(&q.rho.iter().zip(&qsmooth.rho).map(|(a, b)| if *a > 0.0 { a * b.ln() } else { 0.0 }).collect::<Vec<_>>());
    Ok(binding - cross)
}

/// `(F^mm − J^mm, ½(∫q_θ log(q_φ/q̃_φ) + ∫q_φ log(q_θ/q̃_θ)))`.
#[allow(clippy::too_many_arguments)]
pub fn multimodal_consistency_identity(
    grid: &Grid,
    q_theta: &DiscreteDensity,
    q_phi: &DiscreteDensity,
    qs_theta: &DiscreteDensity,
    qs_phi: &DiscreteDensity,
    u12: &PotentialField,
    u21: &PotentialField,
    tau: Temperature,
) -> Result<(f64, f64)> {
    let f = mm_free_energy(grid, q_theta, q_phi, u12, u21, tau)?;
    let j = 0.5
        * (parametric_energy_grid(grid, q_theta, qs_phi, u12, tau)? + parametric_energy_grid(grid, q_phi, qs_theta, u21, tau)?);
    let log_ratio = |p: &DiscreteDensity, a: &DiscreteDensity, b: &DiscreteDensity| {
        grid.integrate(&p.rho.iter().zip(&a.rho).zip(&b.rho).map(|((p, a), b)| p * (a / b).ln()).collect::<Vec<_>>())
    };
    let rhs = 0.5 * (log_ratio(q_theta, q_phi, qs_phi) + log_ratio(q_phi, q_theta, qs_theta));
    Ok((f - j, rhs))
}

/// Kernel smoothing on the grid: `q̃ᵢ ∝ Σⱼ κ(zᵢ,zⱼ) qⱼ μⱼ`, renormalized.
pub fn grid_smooth(grid: &Grid, q: &DiscreteDensity, c: Critic, tau: Temperature) -> Result<DiscreteDensity> {
    grid.check(q.len())?;
    let t = tau.value();
    let values: Vec<f64> = grid
        .points
        .iter()
        .map(|z| {
            grid.points
                .iter()
                .zip(&q.rho)
                .zip(&grid.weights)
                .map(|((w, r), m)| ((c.eval(z, w) - 1.0) / t).exp() * r * m)
                .sum()
        })
        .collect();
    DiscreteDensity::normalized(grid, values)
}

/// Uniform pool on S² reweighted towards `exp(−U/τ)`, with draws taken without
/// replacement by exponential keys.
#[derive(Debug, Clone)]
pub struct GibbsSample {
    pub pool: Vec<Vec<f64>>,
    /// Self-normalized importance weights, summing to 1.
    pub weights: Vec<f64>,
    pub draws: Vec<usize>,
}

impl GibbsSample {
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.pool.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    pub fn draw_points(&self) -> Vec<&[f64]> {
        self.draws.iter().map(|&i| self.pool[i].as_slice()).collect()
    }

    /// Effective sample size `1/Σw²`.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

pub fn gibbs_importance_sampler(
    u_fn: impl Fn(&[f64]) -> f64,
    tau: Temperature,
    n_pool: usize,
    n_draw: usize,
    rng: &mut Prng,
) -> Result<GibbsSample> {
    if n_draw > n_pool {
        return Err(Error::PoolTooSmall { requested: n_draw, available: n_pool });
    }
    if n_pool == 0 {
        return Err(Error::EmptyPool);
    }
    let pool: Vec<Vec<f64>> =
        crate::manifold::sample_uniform_sphere(rng, 3, n_pool)?.into_iter().map(|u| u.into_inner()).collect();
    let log_w: Vec<f64> = pool.iter().map(|p| -u_fn(p) / tau.value()).collect();
    if let Some(&x) = log_w.iter().find(|x| x.is_nan() || **x == f64::INFINITY) {
        return Err(Error::NonFinite(x));
    }
    if log_w.iter().all(|lw| lw.exp() == 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_w.iter().map(|lw| (lw - shift).exp()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // Key −log(E)/w for E ~ Exp(1) is the exponential-race order; its smallest
    // n_draw entries are a weighted sample without replacement.
    let mut keys: Vec<(f64, usize)> = log_w
        .iter()
        .enumerate()
        .map(|(i, lw)| ((-open_unit(rng).ln()).ln() - (lw - shift), i))
        .collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let draws = keys.into_iter().take(n_draw).map(|(_, i)| i).collect();
    Ok(GibbsSample { pool, weights, draws })
}

/// Binding term `∫uρ` of a density, exposed for the probe harness.
pub fn binding_term(grid: &Grid, rho: &DiscreteDensity, u: &PotentialField) -> Result<f64> {
    grid.check(rho.len())?;
    Ok(grid.integrate(&rho.rho.iter().zip(&u.u).map(|(r, u)| r * u).collect::<Vec<_>>()))
}

/// Cosine between a grid point and a fixed direction, the usual test potential.
pub fn alignment_field(grid: &Grid, direction: &[f64], scale: f64) -> Result<PotentialField> {
    PotentialField::from_fn(grid, |p| -scale * dot(p, direction))
}
