//! Monte Carlo estimators of the large-batch limits of the contrastive losses:
//! alignment potentials, parametric energies and the value-consistency residual.

use crate::error::{Error, Result};
use crate::grad::LinearEncoder;
use crate::kernel::{Critic, KernelVolumeEstimate, Temperature};
use crate::linalg::{dot, norm};
use crate::losses::{directional_mm_loss, infonce_batch_mean_loss, SharedPoolBatch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEstimate {
    /// Estimate of `(1/τ) U(q)`.
    pub binding: f64,
    /// Estimate of `H×(q, q̃) = −E_q log q̃`.
    pub cross_entropy: f64,
    pub total: f64,
}

impl EnergyEstimate {
    pub fn new(binding: f64, cross_entropy: f64) -> Self {
        EnergyEstimate { binding, cross_entropy, total: binding - cross_entropy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultimodalEnergy {
    pub theta_to_phi: EnergyEstimate,
    pub phi_to_theta: EnergyEstimate,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub alignment: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uni,
    ThetaToPhi,
    PhiToTheta,
}

/// Mean of `−s(anchor, positive)` over encoded pairs. The direction picks which
/// side plays the anchor; both critics are symmetric so the scalar agrees.
pub fn alignment_potential_estimate<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    f: &LinearEncoder,
    g: &LinearEncoder,
    xs: &[X],
    ys: &[Y],
    c: Critic,
    dir: Direction,
) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let (z, w) = (f.encode(x.as_ref())?, g.encode(y.as_ref())?);
        total -= match dir {
            Direction::Uni | Direction::ThetaToPhi => c.eval(&z, &w),
            Direction::PhiToTheta => c.eval(&w, &z),
        };
    }
    Ok(total / xs.len() as f64)
}

/// `−mean log q̃(z)` for encoded anchors against an encoded pool.
fn cross_entropy_encoded(
    anchors: &[Vec<f64>],
    pool: &[Vec<f64>],
    c: Critic,
    tau: Temperature,
    vkappa: &KernelVolumeEstimate,
) -> Result<f64> {
    if pool.len() < 100 {
        return Err(Error::PoolTooSmall { requested: 100, available: pool.len() });
    }
    if !(vkappa.value > 0.0) {
        return Err(Error::invalid("kernel volume must be positive"));
    }
    let t = tau.value();
    let log_n = (pool.len() as f64).ln();
    let log_v = vkappa.value.ln();
    let mut total = 0.0;
    let mut logits = vec![0.0; pool.len()];
    for z in anchors {
        for (l, w) in logits.iter_mut().zip(pool) {
            *l = c.eval(z, w) / t;
        }
        // log q̃ = log mean κ − log V, evaluated in log space.
        total -= crate::linalg::log_sum_exp(&logits) - log_n - log_v;
    }
    Ok(total / anchors.len() as f64)
}

fn encode_many<X: AsRef<[f64]>>(e: &LinearEncoder, xs: &[X]) -> Result<Vec<Vec<f64>>> {
    xs.iter().map(|x| e.encode(x.as_ref())).collect()
}

/// `Ĵ = binding − cross-entropy` for one encoder.
pub fn parametric_energy_unimodal<X: AsRef<[f64]>>(
    enc: &LinearEncoder,
    anchors: &[X],
    positives: &[X],
    pool: &[X],
    c: Critic,
    tau: Temperature,
    vkappa: &KernelVolumeEstimate,
) -> Result<EnergyEstimate> {
    let u = alignment_potential_estimate(enc, enc, anchors, positives, c, Direction::Uni)?;
    let za = encode_many(enc, anchors)?;
    let zp = encode_many(enc, pool)?;
    let h = cross_entropy_encoded(&za, &zp, c, tau, vkappa)?;
    Ok(EnergyEstimate::new(u / tau.value(), h))
}

/// `|L̂_N − Ĵ − log(N V_κ)|` on the batch anchors; `q̃` comes from `eval_pool`.
pub fn value_consistency_residual<X: AsRef<[f64]>>(
    enc: &LinearEncoder,
    batch: &SharedPoolBatch,
    n: usize,
    eval_pool: &[X],
    c: Critic,
    tau: Temperature,
    vkappa: &KernelVolumeEstimate,
) -> Result<f64> {
    let loss = infonce_batch_mean_loss(enc, batch, n, c, tau)?;
    let u = alignment_potential_estimate(enc, enc, &batch.anchors, &batch.positives, c, Direction::Uni)?;
    let za = encode_many(enc, &batch.anchors)?;
    let zp = encode_many(enc, eval_pool)?;
    let j = EnergyEstimate::new(u / tau.value(), cross_entropy_encoded(&za, &zp, c, tau, vkappa)?);
    Ok((loss - j.total - (n as f64 * vkappa.value).ln()).abs())
}

/// `J^mm = ½(J^{θ→φ} + J^{φ→θ})`, each direction against the other modality's field.
#[allow(clippy::too_many_arguments)]
pub fn parametric_energy_multimodal<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    f: &LinearEncoder,
    g: &LinearEncoder,
    xs: &[X],
    ys: &[Y],
    pool_x: &[X],
    pool_y: &[Y],
    c: Critic,
    tau: Temperature,
    vkappa: &KernelVolumeEstimate,
) -> Result<MultimodalEnergy> {
    let u = alignment_potential_estimate(f, g, xs, ys, c, Direction::ThetaToPhi)?;
    let zx = encode_many(f, xs)?;
    let zy = encode_many(g, ys)?;
    let px = encode_many(f, pool_x)?;
    let py = encode_many(g, pool_y)?;
    let binding = u / tau.value();
    let theta_to_phi = EnergyEstimate::new(binding, cross_entropy_encoded(&zx, &py, c, tau, vkappa)?);
    let phi_to_theta = EnergyEstimate::new(binding, cross_entropy_encoded(&zy, &px, c, tau, vkappa)?);
    Ok(MultimodalEnergy { theta_to_phi, phi_to_theta, total: 0.5 * (theta_to_phi.total + phi_to_theta.total) })
}

/// Symmetric explicit-negative loss: both directions use the first `n` points of
/// the opposite modality's negative pool.
#[allow(clippy::too_many_arguments)]
pub fn mm_explicit_loss<X: AsRef<[f64]>>(
    f: &LinearEncoder,
    g: &LinearEncoder,
    xs: &[X],
    ys: &[X],
    neg_x: &[Vec<f64>],
    neg_y: &[Vec<f64>],
    n: usize,
    c: Critic,
    tau: Temperature,
) -> Result<f64> {
    if n > neg_x.len().min(neg_y.len()) {
        return Err(Error::PoolTooSmall { requested: n, available: neg_x.len().min(neg_y.len()) });
    }
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        total += directional_mm_loss(f, g, x.as_ref(), y.as_ref(), &neg_y[..n], c, tau)?;
        total += directional_mm_loss(g, f, y.as_ref(), x.as_ref(), &neg_x[..n], c, tau)?;
    }
    Ok(0.5 * total / xs.len() as f64)
}

/// `|L̂^mm_N − Ĵ^mm − log(N V_κ)|`.
#[allow(clippy::too_many_arguments)]
pub fn mm_value_consistency_residual<X: AsRef<[f64]>>(
    f: &LinearEncoder,
    g: &LinearEncoder,
    xs: &[X],
    ys: &[X],
    neg_x: &[Vec<f64>],
    neg_y: &[Vec<f64>],
    n: usize,
    eval_x: &[X],
    eval_y: &[X],
    c: Critic,
    tau: Temperature,
    vkappa: &KernelVolumeEstimate,
) -> Result<f64> {
    let loss = mm_explicit_loss(f, g, xs, ys, neg_x, neg_y, n, c, tau)?;
    let j = parametric_energy_multimodal(f, g, xs, ys, eval_x, eval_y, c, tau, vkappa)?;
    Ok((loss - j.total - (n as f64 * vkappa.value).ln()).abs())
}

/// Cosine alignment and relative error of `g1` against the reference `g2`.
pub fn grad_alignment(g1: &[f64], g2: &[f64]) -> Result<GradReport> {
    if g1.len() != g2.len() {
        return Err(Error::ShapeMismatch { expected: g2.len(), got: g1.len() });
    }
    let n2 = norm(g2);
    if n2 == 0.0 {
        return Err(Error::ZeroReference);
    }
    let n1 = norm(g1);
    let alignment = if n1 == 0.0 { 0.0 } else { (dot(g1, g2) / (n1 * n2)).clamp(-1.0, 1.0) };
    let diff: f64 = g1.iter().zip(g2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(GradReport { alignment, rel_error: diff / n2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::Head;
    use crate::kernel::kernel_volume_s2_cosine;
    use crate::manifold::sample_uniform_sphere;
    use crate::rng::{seeded, standard_normal};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tau(t: f64) -> Temperature {
        Temperature::new(t).unwrap()
    }

    fn uniform(seed: u64, n: usize) -> Vec<Vec<f64>> {
        sample_uniform_sphere(&mut seeded(seed), 3, n).unwrap().into_iter().map(|u| u.into_inner()).collect()
    }

    #[test]
    fn alignment_examples() {
        let id = LinearEncoder::identity(3, Head::Normalize);
        let xs = uniform(1, 50);
        assert_relative_eq!(
            alignment_potential_estimate(&id, &id, &xs, &xs, Critic::Cosine, Direction::Uni).unwrap(),
            -1.0,
            epsilon = 1e-14
        );
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let b = vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        assert_eq!(alignment_potential_estimate(&id, &id, &a, &b, Critic::Cosine, Direction::Uni).unwrap(), 0.0);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(
            alignment_potential_estimate(&id, &id, &empty, &empty, Critic::Cosine, Direction::Uni),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn alignment_directions_agree() {
        let mut rng = seeded(2);
        let f = LinearEncoder::random(3, 4, Head::Normalize, &mut rng).unwrap();
        let g = LinearEncoder::random(3, 2, Head::Normalize, &mut rng).unwrap();
        let xs: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| standard_normal(&mut rng)).collect()).collect();
        let ys: Vec<Vec<f64>> = (0..40).map(|_| (0..2).map(|_| standard_normal(&mut rng)).collect()).collect();
        for c in [Critic::Cosine, Critic::rbf_for_dim(3)] {
            let a = alignment_potential_estimate(&f, &g, &xs, &ys, c, Direction::ThetaToPhi).unwrap();
            let b = alignment_potential_estimate(&f, &g, &xs, &ys, c, Direction::PhiToTheta).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unimodal_energy_examples() {
        let id = LinearEncoder::identity(3, Head::Normalize);
        let vk = kernel_volume_s2_cosine(tau(1.0));
        let xs = uniform(3, 500);
        let pool = uniform(4, 20_000);
        let e = parametric_energy_unimodal(&id, &xs, &xs, &pool, Critic::Cosine, tau(1.0), &vk).unwrap();
        assert!((e.cross_entropy - (4.0 * PI).ln()).abs() < 0.01, "{e:?}");
        assert_relative_eq!(e.binding, -1.0, epsilon = 1e-14);
        assert_eq!(e.total, e.binding - e.cross_entropy);

        let point = vec![vec![0.0, 0.0, 1.0]; 200];
        for t in [0.5, 1.0, 2.0] {
            let vk = kernel_volume_s2_cosine(tau(t));
            let e = parametric_energy_unimodal(&id, &point, &point, &point, Critic::Cosine, tau(t), &vk).unwrap();
            assert_relative_eq!(e.cross_entropy, -((1.0 / t).exp() / vk.value).ln(), epsilon = 1e-12);
            assert_relative_eq!(e.binding, -1.0 / t, epsilon = 1e-14);
        }
        let small = uniform(5, 50);
        assert!(matches!(
            parametric_energy_unimodal(&id, &xs, &xs, &small, Critic::Cosine, tau(1.0), &vk),
            Err(Error::PoolTooSmall { .. })
        ));
    }

    #[test]
    fn residual_on_two_point_support_matches_hand_value() {
        // Anchor and positive at the north pole; pool and negatives all at the south pole.
        let id = LinearEncoder::identity(3, Head::Normalize);
        let t = 0.5;
        let vk = kernel_volume_s2_cosine(tau(t));
        let north = vec![0.0, 0.0, 1.0];
        let south = vec![0.0, 0.0, -1.0];
        for n in [1usize, 4, 16] {
            let batch = SharedPoolBatch { anchors: vec![north.clone()], positives: vec![north.clone()], pool: vec![south.clone(); n] };
            let eval = vec![south.clone(); 100];
            let r = value_consistency_residual(&id, &batch, n, &eval, Critic::Cosine, tau(t), &vk).unwrap();
            let hand = (((1.0 / t).exp() + n as f64 * (-1.0 / t).exp()) / (n as f64 * (-1.0 / t).exp())).ln();
            assert_relative_eq!(r, hand.abs(), max_relative = 1e-12);
        }
    }

    #[test]
    fn residual_drops_from_one_to_four_negatives() {
        let id = LinearEncoder::identity(3, Head::Normalize);
        let vk = kernel_volume_s2_cosine(tau(1.0));
        let eval = uniform(6, 20_000);
        let mut r1 = 0.0;
        let mut r4 = 0.0;
        for s in 0..20 {
            let pts = uniform(100 + s, 40);
            let batch = SharedPoolBatch { anchors: pts[..16].to_vec(), positives: pts[..16].to_vec(), pool: pts[16..].to_vec() };
            r1 += value_consistency_residual(&id, &batch, 1, &eval, Critic::Cosine, tau(1.0), &vk).unwrap();
            r4 += value_consistency_residual(&id, &batch, 4, &eval, Critic::Cosine, tau(1.0), &vk).unwrap();
        }
        assert!(r4 < r1, "{r4} vs {r1}");
    }

    #[test]
    fn multimodal_energy_examples() {
        let mut rng = seeded(7);
        let f = LinearEncoder::random(3, 3, Head::Normalize, &mut rng).unwrap();
        let g = LinearEncoder::random(3, 3, Head::Normalize, &mut rng).unwrap();
        let vk = kernel_volume_s2_cosine(tau(1.0));
        let xs = uniform(8, 60);
        let ys = uniform(9, 60);
        let px = uniform(10, 300);
        let py = uniform(11, 300);
        let uni = parametric_energy_unimodal(&f, &xs, &xs, &px, Critic::Cosine, tau(1.0), &vk).unwrap();
        let mm = parametric_energy_multimodal(&f, &f, &xs, &xs, &px, &px, Critic::Cosine, tau(1.0), &vk).unwrap();
        assert_relative_eq!(mm.total, uni.total, epsilon = 1e-12);
        let a = parametric_energy_multimodal(&f, &g, &xs, &ys, &px, &py, Critic::Cosine, tau(1.0), &vk).unwrap();
        let b = parametric_energy_multimodal(&g, &f, &ys, &xs, &py, &px, Critic::Cosine, tau(1.0), &vk).unwrap();
        assert_relative_eq!(a.total, b.total, epsilon = 1e-12);
    }

    #[test]
    fn grad_alignment_examples() {
        let g = [1.0, -2.0, 0.5];
        let r = grad_alignment(&g, &g).unwrap();
        assert_eq!((r.alignment, r.rel_error), (1.0, 0.0));
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let r = grad_alignment(&neg, &g).unwrap();
        assert_relative_eq!(r.alignment, -1.0);
        assert_relative_eq!(r.rel_error, 2.0);
        let dbl: Vec<f64> = g.iter().map(|x| 2.0 * x).collect();
        let r = grad_alignment(&dbl, &g).unwrap();
        assert_relative_eq!(r.alignment, 1.0);
        assert_relative_eq!(r.rel_error, 1.0);
        assert!(matches!(grad_alignment(&g, &[0.0; 3]), Err(Error::ZeroReference)));
    }

    proptest! {
        #[test]
        fn alignment_is_scale_free(g in prop::collection::vec(-5.0f64..5.0, 2..10), a in 1e-3f64..1e3) {
            prop_assume!(norm(&g) > 1e-6);
            let scaled: Vec<f64> = g.iter().map(|x| a * x).collect();
            prop_assert!((grad_alignment(&scaled, &g).unwrap().alignment - 1.0).abs() < 1e-12);
        }

        #[test]
        fn energy_is_permutation_invariant(seed in 0u64..100) {
            let id = LinearEncoder::identity(3, Head::Normalize);
            let vk = kernel_volume_s2_cosine(tau(1.0));
            let xs = uniform(seed, 10);
            let pool = uniform(seed + 1000, 120);
            let a = parametric_energy_unimodal(&id, &xs, &xs, &pool, Critic::Cosine, tau(1.0), &vk).unwrap();
            let rx: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
            let rp: Vec<Vec<f64>> = pool.iter().rev().cloned().collect();
            let b = parametric_energy_unimodal(&id, &rx, &rx, &rp, Critic::Cosine, tau(1.0), &vk).unwrap();
            prop_assert!((a.total - b.total).abs() < 1e-12);
        }
    }
}
