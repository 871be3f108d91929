//! Linear encoders with hand-derived backward passes, a central-difference
//! gradient oracle, Adam and Langevin noise.

use crate::error::{Error, Result};
use crate::linalg::{dot, matvec, norm};
use crate::manifold::{ManifoldKind, MIN_NORM};
use crate::rng::{standard_normal, Prng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// `z = Wx / ‖Wx‖` on S^{d−1}.
    Normalize,
    /// `z = tanh(Wx)` in [−1, 1]^d.
    Tanh,
}

/// `f_W(x) = head(W x)` with a row-major `d × m` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    w: Vec<f64>,
    d: usize,
    m: usize,
    head: Head,
}

/// Cached forward pass of one input.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub z: Vec<f64>,
    pre_norm: f64,
}

impl LinearEncoder {
    pub fn new(d: usize, m: usize, w: Vec<f64>, head: Head) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid("encoder dimensions must be positive"));
        }
        if w.len() != d * m {
            return Err(Error::ShapeMismatch { expected: d * m, got: w.len() });
        }
        if let Some(bad) = w.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(*bad));
        }
        Ok(LinearEncoder { w, d, m, head })
    }

    pub fn identity(d: usize, head: Head) -> Self {
        let mut w = vec![0.0; d * d];
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
        LinearEncoder { w, d, m: d, head }
    }

    /// Entries i.i.d. `N(0, 1/m)`.
    pub fn random(d: usize, m: usize, head: Head, rng: &mut Prng) -> Result<Self> {
        Self::random_with_std(d, m, 1.0 / (m as f64).sqrt(), head, rng)
    }

    /// Entries i.i.d. `N(0, std²)`.
    pub fn random_with_std(d: usize, m: usize, std: f64, head: Head, rng: &mut Prng) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::invalid(format!("init std must be positive and finite, got {std}")));
        }
        let w = (0..d * m).map(|_| std * standard_normal(rng)).collect();
        Self::new(d, m, w, head)
    }

    pub fn out_dim(&self) -> usize {
        self.d
    }

    pub fn in_dim(&self) -> usize {
        self.m
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn n_params(&self) -> usize {
        self.w.len()
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.w.len() {
            return Err(Error::ShapeMismatch { expected: self.w.len(), got: w.len() });
        }
        self.w.copy_from_slice(w);
        Ok(())
    }

    pub fn with_weights(&self, w: &[f64]) -> Result<Self> {
        let mut e = self.clone();
        e.set_weights(w)?;
        Ok(e)
    }

    /// The container the head maps into.
    pub fn manifold(&self) -> ManifoldKind {
        match self.head {
            Head::Normalize => ManifoldKind::Sphere(self.d),
            Head::Tanh => ManifoldKind::Box(self.d),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Encoded> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: x.len() });
        }
        let mut u = vec![0.0; self.d];
        matvec(&self.w, self.d, self.m, x, &mut u);
        match self.head {
            Head::Normalize => {
                let n = norm(&u);
                if !n.is_finite() {
                    return Err(Error::NonFiniteLoss);
                }
                if n <= MIN_NORM {
                    return Err(Error::ZeroVector { norm: n });
                }
                u.iter_mut().for_each(|v| *v /= n);
                Ok(Encoded { z: u, pre_norm: n })
            }
            Head::Tanh => {
                u.iter_mut().for_each(|v| *v = v.tanh());
                Ok(Encoded { z: u, pre_norm: f64::NAN })
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.z)
    }

    pub fn encode_all<X: AsRef<[f64]>>(&self, xs: &[X]) -> Result<Vec<Encoded>> {
        xs.iter().map(|x| self.forward(x.as_ref())).collect()
    }

    /// Pulls `g = ∂L/∂z` back through the head to `∂L/∂(Wx)`.
    pub fn head_backward(&self, enc: &Encoded, g: &[f64]) -> Vec<f64> {
        match self.head {
            Head::Normalize => {
                let gz = dot(g, &enc.z);
                g.iter().zip(&enc.z).map(|(gi, zi)| (gi - gz * zi) / enc.pre_norm).collect()
            }
            Head::Tanh => g.iter().zip(&enc.z).map(|(gi, zi)| gi * (1.0 - zi * zi)).collect(),
        }
    }

    /// Adds `∂L/∂W` for one input into `grad_w` given `g = ∂L/∂z`.
    pub fn backward(&self, x: &[f64], enc: &Encoded, g: &[f64], grad_w: &mut [f64]) {
        let du = self.head_backward(enc, g);
        for (r, dur) in du.iter().enumerate() {
            if *dur == 0.0 {
                continue;
            }
            let row = &mut grad_w[r * self.m..(r + 1) * self.m];
            for (gw, xc) in row.iter_mut().zip(x) {
                *gw += dur * xc;
            }
        }
    }

    /// Norm of the head Jacobian bound times ‖x‖: `‖x‖/‖Wx‖` (normalize) or `‖x‖` (tanh).
    pub fn lipschitz_factor(&self, x: &[f64], enc: &Encoded) -> f64 {
        match self.head {
            Head::Normalize => norm(x) / enc.pre_norm,
            Head::Tanh => norm(x),
        }
    }
}

/// Row-major concatenation of one or more weight matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlatParams(pub Vec<f64>);

impl FlatParams {
    pub fn zeros(n: usize) -> Self {
        FlatParams(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FlatParams {
    fn from(v: Vec<f64>) -> Self {
        FlatParams(v)
    }
}

/// A scalar function of flat parameters with an analytic gradient.
pub trait Objective {
    fn n_params(&self) -> usize;

    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn value(&self, params: &[f64]) -> Result<f64> {
        Ok(self.value_and_grad(params)?.0)
    }
}

/// Adapts a closure returning `(value, gradient)`.
pub struct FnObjective<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>> FnObjective<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnObjective { n, f }
    }
}

impl<F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>> Objective for FnObjective<F> {
    fn n_params(&self) -> usize {
        self.n
    }

    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        (self.f)(params)
    }
}

fn check_len<O: Objective + ?Sized>(obj: &O, params: &FlatParams) -> Result<()> {
    if params.len() != obj.n_params() {
        return Err(Error::ShapeMismatch { expected: obj.n_params(), got: params.len() });
    }
    Ok(())
}

pub fn loss_and_grad<O: Objective + ?Sized>(obj: &O, params: &FlatParams) -> Result<(f64, FlatParams)> {
    check_len(obj, params)?;
    let (v, g) = obj.value_and_grad(&params.0)?;
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    Ok((v, FlatParams(g)))
}

/// Central differences `(f(p + h eᵢ) − f(p − h eᵢ)) / 2h`.
pub fn finite_diff_grad<O: Objective + ?Sized>(obj: &O, params: &FlatParams, h: f64) -> Result<FlatParams> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    check_len(obj, params)?;
    let mut p = params.0.clone();
    let mut out = vec![0.0; p.len()];
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = obj.value(&p)?;
        p[i] = orig - h;
        let fm = obj.value(&p)?;
        p[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        out[i] = (fp - fm) / (2.0 * h);
    }
    Ok(FlatParams(out))
}

/// `‖g_analytic − g_fd‖ / max(‖g_fd‖, 1e-12)` at step `h`.
pub fn gradient_check<O: Objective + ?Sized>(obj: &O, params: &FlatParams, h: f64) -> Result<f64> {
    let (_, g) = loss_and_grad(obj, params)?;
    let fd = finite_diff_grad(obj, params, h)?;
    let diff: f64 = g.0.iter().zip(&fd.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(diff / norm(&fd.0).max(1e-12))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        AdamState {
            step: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Bias-corrected update applied in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        let n = self.first_moment.len();
        if grad.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: grad.len() });
        }
        if params.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: params.len() });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..n {
            let g = grad[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
        }
        Ok(())
    }
}

pub fn adam_step(state: &AdamState, grad: &FlatParams, params: &FlatParams) -> Result<(AdamState, FlatParams)> {
    let mut s = state.clone();
    let mut p = params.clone();
    s.update(&mut p.0, &grad.0)?;
    Ok((s, p))
}

/// Adds `σ ξ`, `ξ ~ N(0, I)`, in place.
pub fn langevin_noise_in_place(params: &mut [f64], sigma: f64, rng: &mut Prng) {
    if sigma == 0.0 {
        return;
    }
    for p in params.iter_mut() {
        *p += sigma * standard_normal(rng);
    }
}

pub fn langevin_perturb(params: &FlatParams, sigma: f64, rng: &mut Prng) -> Result<FlatParams> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("noise scale must be nonnegative, got {sigma}")));
    }
    let mut p = params.clone();
    langevin_noise_in_place(&mut p.0, sigma, rng);
    Ok(p)
}
