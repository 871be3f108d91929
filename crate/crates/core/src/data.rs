//! Synthetic data: Gaussian-mixture pairs for the gradient-consistency study and
//! von Mises mixture latents observed on noisy circles for the multimodal study.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{write_csv, Value};
use crate::manifold::{sample_uniform_sphere, wrap_raw, Angle, wrap_angle};
use crate::rng::{open_unit, standard_normal, Prng};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub m: usize,
    pub k: usize,
    pub separation: f64,
    pub sigma: f64,
    pub sigma_aug: f64,
}

impl GmmConfig {
    /// m = 64, K = 4, separation 4, σ = 1; `sigma_aug` depends on the regime.
    pub fn standard(sigma_aug: f64) -> Self {
        GmmConfig { m: 64, k: 4, separation: 4.0, sigma: 1.0, sigma_aug }
    }

    fn check(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::invalid("GMM needs m >= 1 and K >= 1"));
        }
        if !(self.separation > 0.0 && self.sigma > 0.0 && self.sigma_aug >= 0.0) {
            return Err(Error::invalid("GMM separation and sigma must be positive, sigma_aug nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub means: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Means are `separation` times independent uniform directions; weights are uniform.
pub fn gmm_build(cfg: &GmmConfig, rng: &mut Prng) -> Result<GmmModel> {
    cfg.check()?;
    if cfg.m < 2 {
        let means = (0..cfg.k)
            .map(|_| vec![if rng.random::<bool>() { cfg.separation } else { -cfg.separation }])
            .collect();
        return Ok(GmmModel { means, weights: vec![1.0 / cfg.k as f64; cfg.k] });
    }
    let means = sample_uniform_sphere(rng, cfg.m, cfg.k)?
        .into_iter()
        .map(|u| u.coords().iter().map(|x| cfg.separation * x).collect())
        .collect();
    Ok(GmmModel { means, weights: vec![1.0 / cfg.k as f64; cfg.k] })
}

impl GmmModel {
    fn pick(&self, rng: &mut Prng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }

    /// One draw from the mixture.
    pub fn sample(&self, cfg: &GmmConfig, rng: &mut Prng) -> Vec<f64> {
        let c = self.pick(rng);
        self.means[c].iter().map(|mu| mu + cfg.sigma * standard_normal(rng)).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.means[0].len();
        (0..d).map(|j| self.means.iter().zip(&self.weights).map(|(m, w)| w * m[j]).sum()).collect()
    }
}

/// `(x, x + ε)` with `ε ~ N(0, σ_aug² I)`.
pub fn gmm_sample_pair(model: &GmmModel, cfg: &GmmConfig, rng: &mut Prng) -> (Vec<f64>, Vec<f64>) {
    let x = model.sample(cfg, rng);
    let pos = if cfg.sigma_aug == 0.0 {
        x.clone()
    } else {
        x.iter().map(|xi| xi + cfg.sigma_aug * standard_normal(rng)).collect()
    };
    (x, pos)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmMixtureConfig {
    pub w: f64,
    pub mu1: Angle,
    pub mu2: Angle,
    pub concentration: f64,
    pub sigma_mis: f64,
    pub sigma_obs: f64,
}

impl VmMixtureConfig {
    /// w = 0.7, μ₁ = 0, μ₂ = π, k = 6, σ_obs = 0.02.
    pub fn standard(sigma_mis: f64) -> Self {
        VmMixtureConfig {
            w: 0.7,
            mu1: wrap_angle(0.0).expect("finite"),
            mu2: wrap_angle(PI).expect("finite"),
            concentration: 6.0,
            sigma_mis,
            sigma_obs: 0.02,
        }
    }
}

/// Best–Fisher wrapped-Cauchy rejection sampler for von Mises(μ, k).
pub fn von_mises_sample(mu: Angle, k: f64, rng: &mut Prng) -> Result<Angle> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("von Mises concentration must be positive, got {k}")));
    }
    let tau = 1.0 + (1.0 + 4.0 * k * k).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * k);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2 = open_unit(rng);
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = k * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let theta = f.clamp(-1.0, 1.0).acos();
            let signed = if u3 < 0.5 { -theta } else { theta };
            return wrap_angle(mu.value() + signed);
        }
    }
}

/// θ from the two-component mixture and `θ₂ = wrap(θ + η)`, `η ~ N(0, σ_mis²)`.
pub fn sample_latent_pair(cfg: &VmMixtureConfig, rng: &mut Prng) -> Result<(Angle, Angle)> {
    let u: f64 = rng.random();
    let mu = if u < cfg.w { cfg.mu1 } else { cfg.mu2 };
    let theta = von_mises_sample(mu, cfg.concentration, rng)?;
    let theta2 = if cfg.sigma_mis == 0.0 {
        theta
    } else {
        wrap_angle(theta.value() + cfg.sigma_mis * standard_normal(rng))?
    };
    Ok((theta, theta2))
}

/// `[cos α, sin α] + ξ`, `ξ ~ N(0, σ_obs² I)`.
pub fn observe_on_circle(alpha: Angle, sigma_obs: f64, rng: &mut Prng) -> [f64; 2] {
    let (s, c) = alpha.value().sin_cos();
    if sigma_obs == 0.0 {
        return [c, s];
    }
    [c + sigma_obs * standard_normal(rng), s + sigma_obs * standard_normal(rng)]
}

/// Paired circle observations of `n` latent pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CirclePairs {
    pub theta: Vec<f64>,
    pub theta2: Vec<f64>,
    pub xs: Vec<[f64; 2]>,
    pub ys: Vec<[f64; 2]>,
}

pub fn sample_circle_pairs(cfg: &VmMixtureConfig, n: usize, rng: &mut Prng) -> Result<CirclePairs> {
    let mut out = CirclePairs {
        theta: Vec::with_capacity(n),
        theta2: Vec::with_capacity(n),
        xs: Vec::with_capacity(n),
        ys: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let (a, b) = sample_latent_pair(cfg, rng)?;
        out.xs.push(observe_on_circle(a, cfg.sigma_obs, rng));
        out.ys.push(observe_on_circle(b, cfg.sigma_obs, rng));
        out.theta.push(a.value());
        out.theta2.push(b.value());
    }
    Ok(out)
}

/// One row per sample with columns `theta,theta2,x1,x2,y1,y2`.
pub fn dump_circle_pairs(path: &Path, pairs: &CirclePairs) -> Result<()> {
    let rows: Vec<Vec<Value>> = (0..pairs.theta.len())
        .map(|i| {
            vec![
                pairs.theta[i].into(),
                pairs.theta2[i].into(),
                pairs.xs[i][0].into(),
                pairs.xs[i][1].into(),
                pairs.ys[i][0].into(),
                pairs.ys[i][1].into(),
            ]
        })
        .collect();
    write_csv(path, &["theta", "theta2", "x1", "x2", "y1", "y2"], &rows)
}

/// Circular mean of angles.
pub fn circular_mean(angles: &[f64]) -> f64 {
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    s.atan2(c)
}

/// Mean resultant length `|mean of e^{iθ}|`.
pub fn resultant_length(angles: &[f64]) -> f64 {
    let n = angles.len() as f64;
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    (s * s + c * c).sqrt() / n
}

/// Circular standard deviation `√(−2 log R)`.
pub fn circular_std(angles: &[f64]) -> f64 {
    (-2.0 * resultant_length(angles).ln()).max(0.0).sqrt()
}

/// Jammalamadaka–SenGupta circular correlation.
pub fn circular_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let (ma, mb) = (circular_mean(a), circular_mean(b));
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (sx, sy) = ((x - ma).sin(), (y - mb).sin());
        num += sx * sy;
        da += sx * sx;
        db += sy * sy;
    }
    Ok(num / (da * db).sqrt())
}

/// Rotational dependence `|mean of e^{i(b − a)}|`: one for an exact rotation, zero
/// for independent uniform angles.
pub fn rotational_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(resultant_length(&angle_differences(a, b)))
}

/// `wrap(b − a)` elementwise.
pub fn angle_differences(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wrap_raw(y - x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::bessel_i;
    use crate::linalg::norm;
    use crate::manifold::{angle_of, normalize};
    use crate::rng::seeded;

    #[test]
    fn gmm_build_examples() {
        let mut rng = seeded(1);
        let cfg = GmmConfig { m: 5, k: 1, separation: 2.5, sigma: 1.0, sigma_aug: 0.0 };
        let g = gmm_build(&cfg, &mut rng).unwrap();
        assert!((norm(&g.means[0]) - 2.5).abs() < 1e-12);
        let g = gmm_build(&GmmConfig::standard(0.05), &mut rng).unwrap();
        assert_eq!(g.means.len(), 4);
        for m in &g.means {
            assert!((norm(m) - 4.0).abs() < 1e-9);
        }
        for i in 0..4 {
            for j in i + 1..4 {
                assert!(crate::linalg::sq_dist(&g.means[i], &g.means[j]) > 0.0);
            }
        }
        assert!(gmm_build(&GmmConfig { k: 0, ..cfg }, &mut rng).is_err());
    }

    #[test]
    fn gmm_pair_examples() {
        let mut rng = seeded(2);
        let cfg = GmmConfig { m: 3, k: 3, separation: 4.0, sigma: 1.0, sigma_aug: 0.0 };
        let g = gmm_build(&cfg, &mut rng).unwrap();
        let (x, p) = gmm_sample_pair(&g, &cfg, &mut rng);
        assert_eq!(x, p);
        let n = 100_000;
        let mut mean = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let x = g.sample(&cfg, &mut rng);
            for j in 0..3 {
                mean[j] += x[j] / n as f64;
                sq[j] += x[j] * x[j] / n as f64;
            }
        }
        let target = g.mean();
        for j in 0..3 {
            assert!((mean[j] - target[j]).abs() < 0.05);
            // Var = σ² + Σπ_k μ_kj² − (Σπ_k μ_kj)².
            let second: f64 = g.means.iter().map(|m| m[j] * m[j] / 3.0).sum();
            let var = 1.0 + second - target[j] * target[j];
            assert!((sq[j] - mean[j] * mean[j] - var).abs() < 0.1 * var.max(1.0), "coord {j}");
        }
    }

    #[test]
    fn von_mises_concentrated() {
        let mut rng = seeded(3);
        let mu = wrap_angle(1.0).unwrap();
        let s: Vec<f64> = (0..20_000).map(|_| von_mises_sample(mu, 500.0, &mut rng).unwrap().value()).collect();
        assert!(circular_std(&s) < 0.06);
        assert!((circular_mean(&s) - 1.0).abs() < 0.01);
        assert!(von_mises_sample(mu, 0.0, &mut rng).is_err());
    }

    #[test]
    fn von_mises_resultant_length_matches_bessel_ratio() {
        let mut rng = seeded(4);
        let mu = wrap_angle(-2.0).unwrap();
        let s: Vec<f64> = (0..100_000).map(|_| von_mises_sample(mu, 6.0, &mut rng).unwrap().value()).collect();
        let expect = bessel_i(1, 6.0) / bessel_i(0, 6.0);
        assert!((resultant_length(&s) - expect).abs() < 0.003, "{}", resultant_length(&s));
        assert!(wrap_raw(circular_mean(&s) + 2.0).abs() < 0.01);
    }

    #[test]
    fn von_mises_is_symmetric() {
        let mut rng = seeded(5);
        let mu = wrap_angle(0.7).unwrap();
        let nb = 30;
        let mut hist = vec![0.0; nb];
        let n = 100_000;
        for _ in 0..n {
            let d = wrap_raw(von_mises_sample(mu, 2.0, &mut rng).unwrap().value() - 0.7);
            let b = (((d + PI) / (2.0 * PI)) * nb as f64).floor().min(nb as f64 - 1.0) as usize;
            hist[b] += 1.0 / n as f64;
        }
        let mirror: f64 = (0..nb).map(|i| (hist[i] - hist[nb - 1 - i]).abs()).sum();
        assert!(mirror < 0.02, "{mirror}");
    }

    #[test]
    fn latent_pair_examples() {
        let mut rng = seeded(6);
        let cfg = VmMixtureConfig::standard(0.0);
        for _ in 0..100 {
            let (a, b) = sample_latent_pair(&cfg, &mut rng).unwrap();
            assert_eq!(a, b);
        }
        let cfg = VmMixtureConfig::standard(0.1);
        let p = sample_circle_pairs(&cfg, 50_000, &mut rng).unwrap();
        let d = angle_differences(&p.theta, &p.theta2);
        let var = d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
        assert!((var - 0.01).abs() < 0.0005, "{var}");
    }

    #[test]
    fn mixture_weight_by_posterior() {
        let mut rng = seeded(7);
        let cfg = VmMixtureConfig::standard(0.0);
        let n = 100_000;
        let mut near1 = 0.0;
        for _ in 0..n {
            let (a, _) = sample_latent_pair(&cfg, &mut rng).unwrap();
            // Posterior responsibility of component 1 under k = 6.
            let l1 = cfg.w * (6.0 * (a.value() - cfg.mu1.value()).cos()).exp();
            let l2 = (1.0 - cfg.w) * (6.0 * (a.value() - cfg.mu2.value()).cos()).exp();
            near1 += l1 / (l1 + l2);
        }
        assert!((near1 / n as f64 - 0.7).abs() < 0.01);
    }

    #[test]
    fn observation_examples() {
        let mut rng = seeded(8);
        assert_eq!(observe_on_circle(wrap_angle(0.0).unwrap(), 0.0, &mut rng), [1.0, 0.0]);
        let n = 100_000;
        let mut outside = 0;
        let mut worst = 0.0f64;
        for i in 0..n {
            let a = wrap_angle(i as f64 * 0.001).unwrap();
            let x = observe_on_circle(a, 0.02, &mut rng);
            let r = norm(&x);
            if !(0.9..=1.1).contains(&r) {
                outside += 1;
            }
            let back = angle_of(&normalize(&x).unwrap()).unwrap();
            worst = worst.max(wrap_raw(back.value() - a.value()).abs());
        }
        assert!(outside as f64 / n as f64 <= 1e-4);
        assert!(worst < 0.02 * 6.0);
    }

    #[test]
    fn latent_marginal_is_bimodal() {
        let mut rng = seeded(9);
        let p = sample_circle_pairs(&VmMixtureConfig::standard(0.0), 50_000, &mut rng).unwrap();
        let nb = 60;
        let mut counts = vec![0.0; nb];
        for t in &p.theta {
            let b = (((t + PI) / (2.0 * PI)) * nb as f64).ceil() as usize;
            counts[b.clamp(1, nb) - 1] += 1.0;
        }
        let smooth: Vec<f64> = (0..nb).map(|i| counts[(i + nb - 1) % nb] + counts[i] + counts[(i + 1) % nb]).collect();
        let maxima: Vec<usize> = (0..nb)
            .filter(|&i| smooth[i] > smooth[(i + nb - 1) % nb] && smooth[i] >= smooth[(i + 1) % nb])
            .collect();
        assert_eq!(maxima.len(), 2, "{maxima:?}");
        let centers: Vec<f64> = maxima.iter().map(|&i| -PI + (i as f64 + 0.5) * 2.0 * PI / nb as f64).collect();
        assert!(centers.iter().any(|c| c.abs() < 0.3));
        assert!(centers.iter().any(|c| (c.abs() - PI).abs() < 0.3));
    }

    #[test]
    fn positive_pairs_stay_dependent() {
        let mut rng = seeded(10);
        for k in 0..8 {
            let s = 0.1 * k as f64;
            let p = sample_circle_pairs(&VmMixtureConfig::standard(s), 20_000, &mut rng).unwrap();
            assert!(rotational_correlation(&p.theta, &p.theta2).unwrap() > 0.5, "sigma {s}");
        }
    }

    #[test]
    fn correlation_examples() {
        let a: Vec<f64> = (0..200).map(|i| wrap_raw(0.37 * i as f64)).collect();
        let shifted: Vec<f64> = a.iter().map(|x| wrap_raw(x + 1.0)).collect();
        assert!((rotational_correlation(&a, &shifted).unwrap() - 1.0).abs() < 1e-12);
        assert!((circular_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(circular_correlation(&a, &a[1..]).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let cfg = VmMixtureConfig::standard(0.3);
        let a = sample_circle_pairs(&cfg, 100, &mut seeded(11)).unwrap();
        let b = sample_circle_pairs(&cfg, 100, &mut seeded(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dump_writes_one_row_per_sample() {
        let dir = tempfile::tempdir().unwrap();
        let p = sample_circle_pairs(&VmMixtureConfig::standard(0.2), 10, &mut seeded(12)).unwrap();
        let path = dir.path().join("pairs.csv");
        dump_circle_pairs(&path, &p).unwrap();
        let t = crate::io::read_csv(&path).unwrap();
        assert_eq!(t.rows.len(), 10);
        assert_eq!(t.column_f64("theta").unwrap(), p.theta);
    }
}
