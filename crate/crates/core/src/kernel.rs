//! Similarity critics, the exponential kernel `κ_τ = exp(s/τ)`, kernel volumes,
//! partition fields and smoothed densities.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{dot, mean, sample_std, sq_dist};
use crate::manifold::{geodesic_distance_raw, sample_uniform_sphere, ManifoldKind};
use crate::rng::Prng;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Critic {
    /// `s(z, w) = ⟨z, w⟩`
    Cosine,
    /// `s(z, w) = −dim_scale · ‖z − w‖²`
    Rbf { dim_scale: f64 },
}

impl Critic {
    /// The RBF critic with the `1/d` scaling that keeps logits O(1).
    pub fn rbf_for_dim(d: usize) -> Critic {
        Critic::Rbf { dim_scale: 1.0 / d as f64 }
    }

    /// Unchecked evaluation on raw coordinates.
    #[inline]
    pub fn eval(&self, z: &[f64], w: &[f64]) -> f64 {
        match *self {
            Critic::Cosine => dot(z, w),
            Critic::Rbf { dim_scale } => -dim_scale * sq_dist(z, w),
        }
    }

    /// Adds `scale · ∂s/∂z` into `out`.
    #[inline]
    pub fn accumulate_grad_z(&self, z: &[f64], w: &[f64], scale: f64, out: &mut [f64]) {
        match *self {
            Critic::Cosine => {
                for (o, wi) in out.iter_mut().zip(w) {
                    *o += scale * wi;
                }
            }
            Critic::Rbf { dim_scale } => {
                let c = -2.0 * dim_scale * scale;
                for ((o, zi), wi) in out.iter_mut().zip(z).zip(w) {
                    *o += c * (zi - wi);
                }
            }
        }
    }

    /// Largest `‖∂s/∂z‖` over the manifold.
    pub fn grad_bound(&self, m: ManifoldKind) -> f64 {
        match (*self, m) {
            (Critic::Cosine, ManifoldKind::Sphere(_)) => 1.0,
            (Critic::Cosine, ManifoldKind::Box(d)) => (d as f64).sqrt(),
            (Critic::Rbf { dim_scale }, m) => 2.0 * dim_scale * diameter(m),
        }
    }

    /// Infimum of the critic over pairs of points of `m`.
    pub fn infimum(&self, m: ManifoldKind) -> f64 {
        match (*self, m) {
            (Critic::Cosine, ManifoldKind::Sphere(_)) => -1.0,
            (Critic::Cosine, ManifoldKind::Box(d)) => -(d as f64),
            (Critic::Rbf { dim_scale }, m) => -dim_scale * diameter(m).powi(2),
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Critic::Rbf { dim_scale } if !(dim_scale > 0.0 && dim_scale.is_finite()) => {
                Err(Error::invalid(format!("rbf dim_scale must be positive, got {dim_scale}")))
            }
            _ => Ok(()),
        }
    }
}

/// Euclidean diameter of the container.
fn diameter(m: ManifoldKind) -> f64 {
    match m {
        ManifoldKind::Sphere(_) => 2.0,
        ManifoldKind::Box(d) => 2.0 * (d as f64).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau.is_finite() {
            Ok(Temperature(tau))
        } else {
            Err(Error::invalid(format!("temperature must be positive and finite, got {tau}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumeMethod {
    Analytic,
    MonteCarlo(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelVolumeEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: VolumeMethod,
}

impl KernelVolumeEstimate {
    pub fn analytic(value: f64) -> Self {
        KernelVolumeEstimate { value, std_error: 0.0, method: VolumeMethod::Analytic }
    }
}

fn check_dims(z: &[f64], w: &[f64]) -> Result<()> {
    if z.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: w.len() });
    }
    Ok(())
}

pub fn critic_value(c: Critic, z: &[f64], w: &[f64]) -> Result<f64> {
    c.check()?;
    check_dims(z, w)?;
    Ok(c.eval(z, w))
}

pub fn kernel_value(c: Critic, tau: Temperature, z: &[f64], w: &[f64]) -> Result<f64> {
    Ok((critic_value(c, z, w)? / tau.0).exp())
}

/// `V_κ(τ) = 4π τ sinh(1/τ)` for the cosine critic on S².
pub fn kernel_volume_s2_cosine(tau: Temperature) -> KernelVolumeEstimate {
    let t = tau.0;
    // sinh(1/t) overflows for t below ~1.4e-3; exp(1/t)/2 is exact to rounding there.
    let sinh = if 1.0 / t > 30.0 { 0.5 * (1.0 / t).exp() } else { (1.0 / t).sinh() };
    KernelVolumeEstimate::analytic(4.0 * PI * t * sinh)
}

/// `V_κ(τ) = 2π I₀(1/τ)` for the cosine critic on S¹.
pub fn kernel_volume_s1_cosine(tau: Temperature) -> KernelVolumeEstimate {
    KernelVolumeEstimate::analytic(2.0 * PI * bessel_i(0, 1.0 / tau.0))
}

/// Modified Bessel function of the first kind `I_n(x)` by its power series.
/// Accurate to rounding for the moderate arguments used here (x ≲ 50).
pub fn bessel_i(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = (1..=n).fold(1.0, |acc, k| acc * half / k as f64);
    let mut sum = term;
    let q = half * half;
    for k in 1..500 {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Monte Carlo estimate of `∫ κ_τ(anchor, w) dμ(w)` from `n` uniform points.
pub fn kernel_volume_mc(
    m: ManifoldKind,
    c: Critic,
    tau: Temperature,
    anchor: &[f64],
    n: usize,
    rng: &mut Prng,
) -> Result<KernelVolumeEstimate> {
    let d = match m {
        ManifoldKind::Sphere(d) => d,
        ManifoldKind::Box(_) => return Err(Error::UnsupportedManifold(m.to_string())),
    };
    c.check()?;
    if anchor.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: anchor.len() });
    }
    if n < 100 {
        return Err(Error::invalid(format!("kernel_volume_mc needs n >= 100, got {n}")));
    }
    let vals: Vec<f64> = sample_uniform_sphere(rng, d, n)?
        .iter()
        .map(|w| (c.eval(anchor, w.coords()) / tau.0).exp())
        .collect();
    let area = m.volume();
    Ok(KernelVolumeEstimate {
        value: area * mean(&vals),
        std_error: area * sample_std(&vals) / (n as f64).sqrt(),
        method: VolumeMethod::MonteCarlo(n),
    })
}

/// Γ̂(z): the pool average of `κ_τ(z, ·)`.
pub fn partition_field<P: AsRef<[f64]>>(
    c: Critic,
    tau: Temperature,
    z: &[f64],
    pool: &[P],
) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    c.check()?;
    let mut total = 0.0;
    for w in pool {
        let w = w.as_ref();
        check_dims(z, w)?;
        total += (c.eval(z, w) / tau.0).exp();
    }
    Ok(total / pool.len() as f64)
}

/// q̃(z) = Γ̂(z) / V_κ.
pub fn smoothed_density<P: AsRef<[f64]>>(
    c: Critic,
    tau: Temperature,
    z: &[f64],
    pool: &[P],
    vkappa: &KernelVolumeEstimate,
) -> Result<f64> {
    if !(vkappa.value > 0.0) {
        return Err(Error::invalid("kernel volume must be positive"));
    }
    Ok(partition_field(c, tau, z, pool)? / vkappa.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpPeakReport {
    pub ok: bool,
    /// Largest amount by which either side of the sandwich is violated; negative when
    /// every probe is strictly inside.
    pub worst_violation: f64,
    pub probes: usize,
}

/// Probes `−m₂ d² ≤ s(z,w) − s(z,z) ≤ −m₁ d²` on random pairs with `d < r`.
///
/// The cosine critic is measured against geodesic distance on the sphere and the
/// RBF critic against the ambient Euclidean distance.
pub fn sharp_peak_check(
    c: Critic,
    m: ManifoldKind,
    r: f64,
    m1: f64,
    m2: f64,
    n_probe: usize,
    rng: &mut Prng,
) -> Result<SharpPeakReport> {
    if !(m1 > 0.0 && m1 <= m2 && r > 0.0) {
        return Err(Error::invalid("sharp_peak_check needs 0 < m1 <= m2 and r > 0"));
    }
    c.check()?;
    let d = m.ambient_dim();
    let mut worst = f64::NEG_INFINITY;
    let mut probes = 0;
    let mut attempts = 0usize;
    while probes < n_probe {
        attempts += 1;
        if attempts > 1000 * n_probe.max(1) {
            return Err(Error::invalid("radius too small: no probe pairs found"));
        }
        let (z, w) = match m {
            ManifoldKind::Sphere(_) => {
                let pts = sample_uniform_sphere(rng, d, 2)?;
                (pts[0].coords().to_vec(), pts[1].coords().to_vec())
            }
            ManifoldKind::Box(_) => {
                let mut draw = || (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>();
                (draw(), draw())
            }
        };
        let dist = match c {
            Critic::Cosine => geodesic_distance_raw(&z, &w),
            Critic::Rbf { .. } => sq_dist(&z, &w).sqrt(),
        };
        if dist >= r {
            continue;
        }
        probes += 1;
        let diff = c.eval(&z, &w) - c.eval(&z, &z);
        let d2 = dist * dist;
        let upper = diff + m1 * d2;
        let lower = -m2 * d2 - diff;
        worst = worst.max(upper).max(lower);
    }
    let slack = 1e-12;
    Ok(SharpPeakReport { ok: worst <= slack, worst_violation: worst, probes })
}
