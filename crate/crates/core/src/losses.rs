//! Empirical contrastive objectives and their gradients with respect to encoder
//! weights: unimodal InfoNCE, the directional cross-modal loss and the
//! symmetric in-batch CLIP loss.
//!
//! The positive pair is part of the softmax denominator throughout.

use crate::error::{Error, Result};
use crate::grad::{Encoded, LinearEncoder, Objective};
use crate::kernel::{Critic, Temperature};
use crate::linalg::{norm, softmax_into};

/// One anchor, its positive and `N` negatives (raw inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct UniBatch {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// `B` anchors with positives sharing one negative pool; losses use a pool prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedPoolBatch {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub pool: Vec<Vec<f64>>,
}

/// Row `i` of `xs` and row `i` of `ys` form a positive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
}

impl PairBatch {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch(xs.len(), ys.len()));
        }
        if xs.len() < 2 {
            return Err(Error::invalid("an in-batch loss needs at least two pairs"));
        }
        Ok(PairBatch { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn swapped(&self) -> PairBatch {
        PairBatch { xs: self.ys.clone(), ys: self.xs.clone() }
    }
}

/// `−s⁺/τ + log(e^{s⁺/τ} + Σⱼ e^{sⱼ/τ})`.
pub fn infonce_from_scores(s_pos: f64, s_neg: &[f64], tau: Temperature) -> f64 {
    let mut logits = Vec::with_capacity(s_neg.len() + 1);
    logits.push(s_pos / tau.value());
    logits.extend(s_neg.iter().map(|s| s / tau.value()));
    crate::linalg::log_sum_exp(&logits) - logits[0]
}

/// Symmetric cross-entropy of a `B × B` score matrix against the diagonal.
pub fn clip_from_scores(s: &[f64], b: usize, tau: Temperature) -> f64 {
    let t = tau.value();
    let mut rows = 0.0;
    let mut cols = 0.0;
    let mut buf = vec![0.0; b];
    for i in 0..b {
        for j in 0..b {
            buf[j] = s[i * b + j] / t;
        }
        rows += crate::linalg::log_sum_exp(&buf) - s[i * b + i] / t;
        for j in 0..b {
            buf[j] = s[j * b + i] / t;
        }
        cols += crate::linalg::log_sum_exp(&buf) - s[i * b + i] / t;
    }
    0.5 * (rows / b as f64 + cols / b as f64)
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss)
    }
}

pub fn infonce_loss(enc: &LinearEncoder, b: &UniBatch, c: Critic, tau: Temperature) -> Result<f64> {
    if b.negatives.is_empty() {
        return Err(Error::EmptyInput);
    }
    let z = enc.encode(&b.anchor)?;
    let zp = enc.encode(&b.positive)?;
    let s_neg = b
        .negatives
        .iter()
        .map(|x| Ok(c.eval(&z, &enc.encode(x)?)))
        .collect::<Result<Vec<f64>>>()?;
    finite(infonce_from_scores(c.eval(&z, &zp), &s_neg, tau))
}

/// Loss for encoded anchor `z`, positive `zp` and negatives; accumulates `∂L/∂z`
/// into the three gradient slots scaled by `weight`.
#[allow(clippy::too_many_arguments)]
fn anchor_term(
    c: Critic,
    tau: Temperature,
    z: &[f64],
    zp: &[f64],
    negs: &[&[f64]],
    weight: f64,
    gz: &mut [f64],
    gzp: &mut [f64],
    gneg: &mut [Vec<f64>],
    probs: &mut Vec<f64>,
) -> f64 {
    let t = tau.value();
    let mut logits = Vec::with_capacity(negs.len() + 1);
    logits.push(c.eval(z, zp) / t);
    logits.extend(negs.iter().map(|w| c.eval(z, w) / t));
    probs.resize(logits.len(), 0.0);
    let lse = softmax_into(&logits, probs);
    let loss = lse - logits[0];
    let d_pos = weight * (probs[0] - 1.0) / t;
    c.accumulate_grad_z(z, zp, d_pos, gz);
    c.accumulate_grad_z(zp, z, d_pos, gzp);
    for (j, w) in negs.iter().enumerate() {
        let d = weight * probs[j + 1] / t;
        c.accumulate_grad_z(z, w, d, gz);
        c.accumulate_grad_z(w, z, d, &mut gneg[j]);
    }
    loss
}

/// InfoNCE loss of a single batch and `∂L/∂W`.
pub fn infonce_loss_grad(enc: &LinearEncoder, b: &UniBatch, c: Critic, tau: Temperature) -> Result<(f64, Vec<f64>)> {
    let batch = SharedPoolBatch {
        anchors: vec![b.anchor.clone()],
        positives: vec![b.positive.clone()],
        pool: b.negatives.clone(),
    };
    infonce_batch_mean_grad(enc, &batch, b.negatives.len(), c, tau)
}

fn check_batch(batch: &SharedPoolBatch, n: usize) -> Result<()> {
    if batch.anchors.is_empty() {
        return Err(Error::EmptyInput);
    }
    if batch.anchors.len() != batch.positives.len() {
        return Err(Error::LengthMismatch(batch.anchors.len(), batch.positives.len()));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one negative"));
    }
    if n > batch.pool.len() {
        return Err(Error::PoolTooSmall { requested: n, available: batch.pool.len() });
    }
    Ok(())
}

/// Mean InfoNCE over the anchors using the first `n` pool points as negatives.
pub fn infonce_batch_mean_loss(
    enc: &LinearEncoder,
    batch: &SharedPoolBatch,
    n: usize,
    c: Critic,
    tau: Temperature,
) -> Result<f64> {
    check_batch(batch, n)?;
    let pool: Vec<Vec<f64>> = batch.pool[..n].iter().map(|x| enc.encode(x)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for (x, xp) in batch.anchors.iter().zip(&batch.positives) {
        let z = enc.encode(x)?;
        let zp = enc.encode(xp)?;
        let s_neg: Vec<f64> = pool.iter().map(|w| c.eval(&z, w)).collect();
        total += infonce_from_scores(c.eval(&z, &zp), &s_neg, tau);
    }
    finite(total / batch.anchors.len() as f64)
}

/// [`infonce_batch_mean_loss`] together with its gradient in the encoder weights.
pub fn infonce_batch_mean_grad(
    enc: &LinearEncoder,
    batch: &SharedPoolBatch,
    n: usize,
    c: Critic,
    tau: Temperature,
) -> Result<(f64, Vec<f64>)> {
    check_batch(batch, n)?;
    let d = enc.out_dim();
    let pool_x = &batch.pool[..n];
    let pool: Vec<Encoded> = enc.encode_all(pool_x)?;
    let pool_z: Vec<&[f64]> = pool.iter().map(|e| e.z.as_slice()).collect();
    let mut g_pool = vec![vec![0.0; d]; n];
    let mut grad = vec![0.0; enc.n_params()];
    let mut probs = Vec::new();
    let weight = 1.0 / batch.anchors.len() as f64;
    let mut total = 0.0;
    for (x, xp) in batch.anchors.iter().zip(&batch.positives) {
        let ez = enc.forward(x)?;
        let ezp = enc.forward(xp)?;
        let mut gz = vec![0.0; d];
        let mut gzp = vec![0.0; d];
        total += anchor_term(c, tau, &ez.z, &ezp.z, &pool_z, weight, &mut gz, &mut gzp, &mut g_pool, &mut probs);
        enc.backward(x, &ez, &gz, &mut grad);
        enc.backward(xp, &ezp, &gzp, &mut grad);
    }
    for ((x, e), g) in pool_x.iter().zip(&pool).zip(&g_pool) {
        enc.backward(x, e, g, &mut grad);
    }
    let loss = finite(total * weight)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    Ok((loss, grad))
}

/// `4 · C_s(τ) · C_Θ` from the encoded batch; bounds the Frobenius norm of the
/// batch-mean gradient.
pub fn infonce_grad_bound(
    enc: &LinearEncoder,
    batch: &SharedPoolBatch,
    n: usize,
    c: Critic,
    tau: Temperature,
) -> Result<f64> {
    check_batch(batch, n)?;
    let inputs: Vec<&Vec<f64>> = batch.anchors.iter().chain(&batch.positives).chain(&batch.pool[..n]).collect();
    let encoded: Vec<Encoded> = inputs.iter().map(|x| enc.forward(x)).collect::<Result<_>>()?;
    let c_theta = inputs
        .iter()
        .zip(&encoded)
        .map(|(x, e)| enc.lipschitz_factor(x, e))
        .fold(0.0, f64::max);
    let sup_grad = match c {
        Critic::Cosine => encoded.iter().map(|e| norm(&e.z)).fold(0.0, f64::max),
        Critic::Rbf { dim_scale } => {
            let mut worst: f64 = 0.0;
            for a in &encoded {
                for b in &encoded {
                    worst = worst.max(crate::linalg::sq_dist(&a.z, &b.z));
                }
            }
            2.0 * dim_scale * worst.sqrt()
        }
    };
    Ok(4.0 * sup_grad / tau.value() * c_theta)
}

/// `−log[κ(f(x), g(y)) / (κ(f(x), g(y)) + Σⱼ κ(f(x), g(yⱼ')))]`.
#[allow(clippy::too_many_arguments)]
pub fn directional_mm_loss(
    f: &LinearEncoder,
    g: &LinearEncoder,
    x: &[f64],
    y: &[f64],
    neg_ys: &[Vec<f64>],
    c: Critic,
    tau: Temperature,
) -> Result<f64> {
    if neg_ys.is_empty() {
        return Err(Error::EmptyInput);
    }
    let z = f.encode(x)?;
    let w = g.encode(y)?;
    if z.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: w.len() });
    }
    let s_neg = neg_ys.iter().map(|yn| Ok(c.eval(&z, &g.encode(yn)?))).collect::<Result<Vec<f64>>>()?;
    finite(infonce_from_scores(c.eval(&z, &w), &s_neg, tau))
}

fn score_matrix(c: Critic, zs: &[Encoded], ws: &[Encoded]) -> Vec<f64> {
    let b = zs.len();
    let mut s = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            s[i * b + j] = c.eval(&zs[i].z, &ws[j].z);
        }
    }
    s
}

/// `½(CE(S/τ, diag) + CE(Sᵀ/τ, diag))` with `S_ij = s(f(xᵢ), g(yⱼ))`.
pub fn symmetric_clip_inbatch_loss(
    f: &LinearEncoder,
    g: &LinearEncoder,
    pb: &PairBatch,
    c: Critic,
    tau: Temperature,
) -> Result<f64> {
    let zs = f.encode_all(&pb.xs)?;
    let ws = g.encode_all(&pb.ys)?;
    finite(clip_from_scores(&score_matrix(c, &zs, &ws), pb.len(), tau))
}

/// Row and column softmaxes of `S/t` plus the symmetric cross-entropy against
/// the diagonal. A single shared shift is used when the logit range allows it.
fn row_col_softmax(s: &[f64], b: usize, t: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let logits: Vec<f64> = s.iter().map(|v| v / t).collect();
    let hi = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = logits.iter().copied().fold(f64::INFINITY, f64::min);
    let mut row_sum = vec![0.0; b];
    let mut col_sum = vec![0.0; b];
    let mut p = vec![0.0; b * b];
    let mut q = vec![0.0; b * b];
    let (row_shift, col_shift) = if hi - lo <= 600.0 {
        for i in 0..b {
            for j in 0..b {
                let e = (logits[i * b + j] - hi).exp();
                p[i * b + j] = e;
                row_sum[i] += e;
                col_sum[j] += e;
            }
        }
        q.copy_from_slice(&p);
        (vec![hi; b], vec![hi; b])
    } else {
        let mut row_max = vec![f64::NEG_INFINITY; b];
        let mut col_max = vec![f64::NEG_INFINITY; b];
        for i in 0..b {
            for j in 0..b {
                let l = logits[i * b + j];
                row_max[i] = row_max[i].max(l);
                col_max[j] = col_max[j].max(l);
            }
        }
        for i in 0..b {
            for j in 0..b {
                let l = logits[i * b + j];
                p[i * b + j] = (l - row_max[i]).exp();
                q[i * b + j] = (l - col_max[j]).exp();
                row_sum[i] += p[i * b + j];
                col_sum[j] += q[i * b + j];
            }
        }
        (row_max, col_max)
    };
    let mut loss = 0.0;
    for i in 0..b {
        loss += row_shift[i] + row_sum[i].ln() - logits[i * b + i];
        loss += col_shift[i] + col_sum[i].ln() - logits[i * b + i];
    }
    for i in 0..b {
        for j in 0..b {
            p[i * b + j] /= row_sum[i];
            q[i * b + j] /= col_sum[j];
        }
    }
    (p, q, loss / (2.0 * b as f64))
}

/// The symmetric in-batch loss with gradients for both encoders.
pub fn symmetric_clip_grad(
    f: &LinearEncoder,
    g: &LinearEncoder,
    pb: &PairBatch,
    c: Critic,
    tau: Temperature,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let b = pb.len();
    let t = tau.value();
    let zs = f.encode_all(&pb.xs)?;
    let ws = g.encode_all(&pb.ys)?;
    let s = score_matrix(c, &zs, &ws);
    let (p, q, loss) = row_col_softmax(&s, b, t);
    let loss = finite(loss)?;
    let d = zs[0].z.len();
    let mut gz = vec![vec![0.0; d]; b];
    let mut gw = vec![vec![0.0; d]; b];
    let scale = 1.0 / (2.0 * b as f64 * t);
    for i in 0..b {
        for j in 0..b {
            let delta = if i == j { 2.0 } else { 0.0 };
            let ds = scale * (p[i * b + j] + q[i * b + j] - delta);
            c.accumulate_grad_z(&zs[i].z, &ws[j].z, ds, &mut gz[i]);
            c.accumulate_grad_z(&ws[j].z, &zs[i].z, ds, &mut gw[j]);
        }
    }
    let mut grad_f = vec![0.0; f.n_params()];
    let mut grad_g = vec![0.0; g.n_params()];
    for i in 0..b {
        f.backward(&pb.xs[i], &zs[i], &gz[i], &mut grad_f);
        g.backward(&pb.ys[i], &ws[i], &gw[i], &mut grad_g);
    }
    Ok((loss, grad_f, grad_g))
}

/// Batch-mean InfoNCE as a function of the flattened encoder weights.
pub struct InfoNceObjective<'a> {
    pub encoder: &'a LinearEncoder,
    pub batch: &'a SharedPoolBatch,
    pub n: usize,
    pub critic: Critic,
    pub tau: Temperature,
}

impl Objective for InfoNceObjective<'_> {
    fn n_params(&self) -> usize {
        self.encoder.n_params()
    }

    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.encoder.with_weights(params)?;
        infonce_batch_mean_grad(&e, self.batch, self.n, self.critic, self.tau)
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        let e = self.encoder.with_weights(params)?;
        infonce_batch_mean_loss(&e, self.batch, self.n, self.critic, self.tau)
    }
}

/// Symmetric in-batch loss over `[W_f, W_g]` concatenated.
pub struct ClipObjective<'a> {
    pub f: &'a LinearEncoder,
    pub g: &'a LinearEncoder,
    pub batch: &'a PairBatch,
    pub critic: Critic,
    pub tau: Temperature,
}

impl ClipObjective<'_> {
    fn split(&self, params: &[f64]) -> Result<(LinearEncoder, LinearEncoder)> {
        if params.len() != self.n_params() {
            return Err(Error::ShapeMismatch { expected: self.n_params(), got: params.len() });
        }
        let nf = self.f.n_params();
        Ok((self.f.with_weights(&params[..nf])?, self.g.with_weights(&params[nf..])?))
    }
}

impl Objective for ClipObjective<'_> {
    fn n_params(&self) -> usize {
        self.f.n_params() + self.g.n_params()
    }

    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (f, g) = self.split(params)?;
        let (v, mut gf, gg) = symmetric_clip_grad(&f, &g, self.batch, self.critic, self.tau)?;
        gf.extend(gg);
        Ok((v, gf))
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        let (f, g) = self.split(params)?;
        symmetric_clip_inbatch_loss(&f, &g, self.batch, self.critic, self.tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{gradient_check, FlatParams, Head};
    use crate::rng::{seeded, standard_normal, Prng};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tau(t: f64) -> Temperature {
        Temperature::new(t).unwrap()
    }

    fn randv(rng: &mut Prng, m: usize) -> Vec<f64> {
        (0..m).map(|_| standard_normal(rng)).collect()
    }

    fn random_batch(rng: &mut Prng, m: usize, b: usize, pool: usize) -> SharedPoolBatch {
        SharedPoolBatch {
            anchors: (0..b).map(|_| randv(rng, m)).collect(),
            positives: (0..b).map(|_| randv(rng, m)).collect(),
            pool: (0..pool).map(|_| randv(rng, m)).collect(),
        }
    }

    #[test]
    fn infonce_examples() {
        let a = (0.5f64.sqrt()).atanh();
        let e = LinearEncoder::identity(2, Head::Tanh);
        let b = UniBatch { anchor: vec![a, a], positive: vec![a, a], negatives: vec![vec![a, -a]] };
        assert_relative_eq!(infonce_loss(&e, &b, Critic::Cosine, tau(1.0)).unwrap(), 0.313262, epsilon = 1e-6);
        assert_relative_eq!(
            infonce_loss(&e, &b, Critic::Cosine, tau(1.0)).unwrap(),
            (1.0 + (-1.0f64).exp()).ln(),
            epsilon = 1e-14
        );
        let b = UniBatch { anchor: vec![0.3, 0.1], positive: vec![0.2, 0.2], negatives: vec![vec![0.2, 0.2]; 5] };
        assert_relative_eq!(infonce_loss(&e, &b, Critic::Cosine, tau(0.5)).unwrap(), 6f64.ln(), epsilon = 1e-14);
        assert!(infonce_from_scores(1.0, &[0.0, 0.0], tau(1e-3)) < 1e-200);
        let empty = UniBatch { negatives: vec![], ..b };
        assert!(matches!(infonce_loss(&e, &empty, Critic::Cosine, tau(1.0)), Err(Error::EmptyInput)));
    }

    #[test]
    fn batch_mean_examples() {
        let mut rng = seeded(1);
        let e = LinearEncoder::random(3, 4, Head::Normalize, &mut rng).unwrap();
        let batch = random_batch(&mut rng, 4, 1, 6);
        let single = UniBatch {
            anchor: batch.anchors[0].clone(),
            positive: batch.positives[0].clone(),
            negatives: batch.pool[..4].to_vec(),
        };
        assert_relative_eq!(
            infonce_batch_mean_loss(&e, &batch, 4, Critic::Cosine, tau(0.2)).unwrap(),
            infonce_loss(&e, &single, Critic::Cosine, tau(0.2)).unwrap(),
            epsilon = 1e-14
        );
        let dup = SharedPoolBatch {
            anchors: vec![batch.anchors[0].clone(); 3],
            positives: vec![batch.positives[0].clone(); 3],
            pool: batch.pool.clone(),
        };
        assert_relative_eq!(
            infonce_batch_mean_loss(&e, &dup, 4, Critic::Cosine, tau(0.2)).unwrap(),
            infonce_batch_mean_loss(&e, &batch, 4, Critic::Cosine, tau(0.2)).unwrap(),
            epsilon = 1e-14
        );
        assert!(matches!(
            infonce_batch_mean_loss(&e, &batch, 7, Critic::Cosine, tau(0.2)),
            Err(Error::PoolTooSmall { requested: 7, available: 6 })
        ));
    }

    #[test]
    fn infonce_gradient_small_batch() {
        let mut rng = seeded(2);
        let e = LinearEncoder::random(3, 2, Head::Normalize, &mut rng).unwrap();
        let b = UniBatch {
            anchor: randv(&mut rng, 2),
            positive: randv(&mut rng, 2),
            negatives: (0..2).map(|_| randv(&mut rng, 2)).collect(),
        };
        let (v, g) = infonce_loss_grad(&e, &b, Critic::Cosine, tau(0.1)).unwrap();
        assert_relative_eq!(v, infonce_loss(&e, &b, Critic::Cosine, tau(0.1)).unwrap(), epsilon = 1e-13);
        assert_eq!(g.len(), 6);
        let batch = SharedPoolBatch { anchors: vec![b.anchor], positives: vec![b.positive], pool: b.negatives };
        let obj = InfoNceObjective { encoder: &e, batch: &batch, n: 2, critic: Critic::Cosine, tau: tau(0.1) };
        assert!(gradient_check(&obj, &FlatParams(e.weights().to_vec()), 1e-5).unwrap() <= 1e-4);
    }

    #[test]
    fn infonce_gradients_match_fd_on_random_configurations() {
        for seed in 0..24u64 {
            let mut rng = seeded(1000 + seed);
            let head = if seed % 2 == 0 { Head::Normalize } else { Head::Tanh };
            let critic = if seed % 4 < 2 { Critic::Cosine } else { Critic::rbf_for_dim(3) };
            let t = if critic == Critic::Cosine { 0.1 } else { 1.0 };
            let e = LinearEncoder::random(3, 4, head, &mut rng).unwrap();
            let batch = random_batch(&mut rng, 4, 3, 5);
            let obj = InfoNceObjective { encoder: &e, batch: &batch, n: 5, critic, tau: tau(t) };
            let rel = gradient_check(&obj, &FlatParams(e.weights().to_vec()), 1e-5).unwrap();
            assert!(rel <= 1e-4, "seed {seed}: {rel}");
        }
    }

    #[test]
    fn gradient_norm_respects_bound() {
        for seed in 0..20u64 {
            let mut rng = seeded(2000 + seed);
            let head = if seed % 2 == 0 { Head::Normalize } else { Head::Tanh };
            let critic = if seed % 3 == 0 { Critic::rbf_for_dim(4) } else { Critic::Cosine };
            let e = LinearEncoder::random(4, 6, head, &mut rng).unwrap();
            let batch = random_batch(&mut rng, 6, 8, 16);
            let (_, g) = infonce_batch_mean_grad(&e, &batch, 16, critic, tau(0.3)).unwrap();
            let bound = infonce_grad_bound(&e, &batch, 16, critic, tau(0.3)).unwrap();
            assert!(norm(&g) <= bound, "seed {seed}: {} > {bound}", norm(&g));
        }
    }

    #[test]
    fn directional_examples() {
        let mut rng = seeded(3);
        let f = LinearEncoder::random(2, 3, Head::Normalize, &mut rng).unwrap();
        let x = randv(&mut rng, 3);
        let xp = randv(&mut rng, 3);
        let negs: Vec<Vec<f64>> = (0..4).map(|_| randv(&mut rng, 3)).collect();
        let uni = infonce_loss(&f, &UniBatch { anchor: x.clone(), positive: xp.clone(), negatives: negs.clone() }, Critic::Cosine, tau(0.5)).unwrap();
        assert_relative_eq!(
            directional_mm_loss(&f, &f, &x, &xp, &negs, Critic::Cosine, tau(0.5)).unwrap(),
            uni,
            epsilon = 1e-14
        );
        let e = LinearEncoder::identity(2, Head::Normalize);
        let l = directional_mm_loss(&e, &e, &[1.0, 0.0], &[0.0, 1.0], &[vec![0.0, -1.0]], Critic::Cosine, tau(0.5)).unwrap();
        assert_relative_eq!(l, 2f64.ln(), epsilon = 1e-14);

        // Three pairs, two different encoders: the two directions disagree.
        let g = LinearEncoder::random(2, 3, Head::Normalize, &mut rng).unwrap();
        let xs: Vec<Vec<f64>> = (0..3).map(|_| randv(&mut rng, 3)).collect();
        let ys: Vec<Vec<f64>> = (0..3).map(|_| randv(&mut rng, 3)).collect();
        let forward = directional_mm_loss(&f, &g, &xs[0], &ys[0], &ys[1..], Critic::Cosine, tau(0.5)).unwrap();
        let backward = directional_mm_loss(&g, &f, &ys[0], &xs[0], &xs[1..], Critic::Cosine, tau(0.5)).unwrap();
        // Brute-force both sides from encoded points.
        let (zx, zy): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
            (xs.iter().map(|x| f.encode(x).unwrap()).collect(), ys.iter().map(|y| g.encode(y).unwrap()).collect());
        let brute = |a: &[Vec<f64>], b: &[Vec<f64>]| {
            let k = |u: &[f64], v: &[f64]| (crate::linalg::dot(u, v) / 0.5).exp();
            let num = k(&a[0], &b[0]);
            -(num / (num + k(&a[0], &b[1]) + k(&a[0], &b[2]))).ln()
        };
        assert_relative_eq!(forward, brute(&zx, &zy), epsilon = 1e-12);
        assert_relative_eq!(backward, brute(&zy, &zx), epsilon = 1e-12);
        assert!((forward - backward).abs() > 1e-6);
    }

    #[test]
    fn clip_examples() {
        let t = tau(1.0);
        assert_relative_eq!(clip_from_scores(&[1.0, 0.0, 0.0, 1.0], 2, t), 0.313262, epsilon = 1e-6);
        assert_relative_eq!(clip_from_scores(&[0.3; 16], 4, t), 4f64.ln(), epsilon = 1e-14);
        let sharp = [1.0, -1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0, 1.0];
        assert!(clip_from_scores(&sharp, 3, tau(1e-3)) < 1e-300);
        let e = LinearEncoder::identity(2, Head::Normalize);
        let pb = PairBatch::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_relative_eq!(
            symmetric_clip_inbatch_loss(&e, &e, &pb, Critic::Cosine, t).unwrap(),
            (1.0 + (-1.0f64).exp()).ln(),
            epsilon = 1e-14
        );
        assert!(PairBatch::new(vec![vec![1.0]], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn clip_gradients_match_fd_on_random_configurations() {
        for seed in 0..20u64 {
            let mut rng = seeded(3000 + seed);
            let f = LinearEncoder::random(2, 2, Head::Normalize, &mut rng).unwrap();
            let g = LinearEncoder::random(2, 2, Head::Normalize, &mut rng).unwrap();
            let b = 3 + seed as usize % 4;
            let pb = PairBatch::new((0..b).map(|_| randv(&mut rng, 2)).collect(), (0..b).map(|_| randv(&mut rng, 2)).collect())
                .unwrap();
            let critic = if seed % 2 == 0 { Critic::Cosine } else { Critic::rbf_for_dim(2) };
            let t = [0.07, 0.3, 1.0][seed as usize % 3];
            let obj = ClipObjective { f: &f, g: &g, batch: &pb, critic, tau: tau(t) };
            let mut p = f.weights().to_vec();
            p.extend_from_slice(g.weights());
            let rel = gradient_check(&obj, &FlatParams(p), 1e-5).unwrap();
            assert!(rel <= 1e-4, "seed {seed}: {rel}");
        }
    }

    proptest! {
        #[test]
        fn loss_invariants(
            s_pos in -1.0f64..1.0,
            s_neg in prop::collection::vec(-1.0f64..1.0, 1..12),
            shift in -5.0f64..5.0,
            t in 0.05f64..2.0,
        ) {
            let l = infonce_from_scores(s_pos, &s_neg, tau(t));
            prop_assert!(l >= 0.0);
            let shifted: Vec<f64> = s_neg.iter().map(|s| s + shift).collect();
            prop_assert!((infonce_from_scores(s_pos + shift, &shifted, tau(t)) - l).abs() < 1e-9);
            let mut rev = s_neg.clone();
            rev.reverse();
            prop_assert!((infonce_from_scores(s_pos, &rev, tau(t)) - l).abs() < 1e-12);
            let eq = vec![s_pos; s_neg.len()];
            prop_assert!((infonce_from_scores(s_pos, &eq, tau(t)) - ((s_neg.len() + 1) as f64).ln()).abs() < 1e-12);
        }

        #[test]
        fn fused_softmax_matches_reference(seed in 0u64..500, spread in prop::sample::select(vec![1.0, 50.0, 2000.0])) {
            let mut rng = seeded(seed);
            let b = 2 + seed as usize % 6;
            let s: Vec<f64> = (0..b * b).map(|_| spread * (rng.gen::<f64>() - 0.5)).collect();
            let (p, q, loss) = row_col_softmax(&s, b, 1.0);
            let reference = clip_from_scores(&s, b, tau(1.0));
            prop_assert!((loss - reference).abs() <= 1e-10 * reference.abs().max(1.0));
            for i in 0..b {
                let row: f64 = p[i * b..(i + 1) * b].iter().sum();
                let col: f64 = (0..b).map(|k| q[k * b + i]).sum();
                prop_assert!((row - 1.0).abs() < 1e-12 && (col - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn clip_symmetry_and_permutation(seed in 0u64..300, shift in -3.0f64..3.0) {
            let mut rng = seeded(seed);
            let b = 4;
            let f = LinearEncoder::random(2, 3, Head::Normalize, &mut rng).unwrap();
            let g = LinearEncoder::random(2, 2, Head::Normalize, &mut rng).unwrap();
            let pb = PairBatch::new((0..b).map(|_| randv(&mut rng, 3)).collect(), (0..b).map(|_| randv(&mut rng, 2)).collect()).unwrap();
            let a = symmetric_clip_inbatch_loss(&f, &g, &pb, Critic::Cosine, tau(0.2)).unwrap();
            let swapped = symmetric_clip_inbatch_loss(&g, &f, &pb.swapped(), Critic::Cosine, tau(0.2)).unwrap();
            prop_assert_eq!(a.to_bits(), swapped.to_bits());
            let perm = [2usize, 0, 3, 1];
            let pp = PairBatch::new(perm.iter().map(|&i| pb.xs[i].clone()).collect(), perm.iter().map(|&i| pb.ys[i].clone()).collect()).unwrap();
            let c = symmetric_clip_inbatch_loss(&f, &g, &pp, Critic::Cosine, tau(0.2)).unwrap();
            prop_assert!((a - c).abs() < 1e-12);
            let zs = f.encode_all(&pb.xs).unwrap();
            let ws = g.encode_all(&pb.ys).unwrap();
            let s = score_matrix(Critic::Cosine, &zs, &ws);
            let s2: Vec<f64> = s.iter().map(|v| v + shift).collect();
            prop_assert!((clip_from_scores(&s2, b, tau(0.2)) - clip_from_scores(&s, b, tau(0.2))).abs() < 1e-9);
        }
    }
}
