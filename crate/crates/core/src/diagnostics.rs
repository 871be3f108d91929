//! Angular histograms and the divergence diagnostics computed from them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::manifold::wrap_raw;

/// Uniform bins `(−π + i w, −π + (i + 1) w]` with `w = 2π / nbins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram1D {
    pub nbins: usize,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub pseudocount: f64,
}

#[inline]
pub fn bin_width(nbins: usize) -> f64 {
    2.0 * PI / nbins as f64
}

/// Bin of a wrapped angle; π falls into the last bin.
#[inline]
pub fn bin_index(angle: f64, nbins: usize) -> usize {
    let pos = ((angle + PI) / bin_width(nbins)).ceil() as isize - 1;
    pos.clamp(0, nbins as isize - 1) as usize
}

pub fn bin_center(i: usize, nbins: usize) -> f64 {
    -PI + (i as f64 + 0.5) * bin_width(nbins)
}

impl Histogram1D {
    pub fn bin_width(&self) -> f64 {
        bin_width(self.nbins)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.nbins).map(|i| bin_center(i, self.nbins)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin probabilities `density · width`.
    pub fn probabilities(&self) -> Vec<f64> {
        let w = self.bin_width();
        self.density.iter().map(|d| d * w).collect()
    }

    /// Circular standard deviation computed from the binned mass at bin centers.
    pub fn circular_std(&self) -> f64 {
        let p = self.probabilities();
        let (s, c) = p
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(s, c), (i, pi)| {
                let x = bin_center(i, self.nbins);
                (s + pi * x.sin(), c + pi * x.cos())
            });
        (-2.0 * (s * s + c * c).sqrt().ln()).max(0.0).sqrt()
    }
}

fn check_angles(angles: &[f64]) -> Result<()> {
    if let Some(bad) = angles.iter().find(|a| !a.is_finite()) {
        return Err(Error::NonFinite(*bad));
    }
    Ok(())
}

fn histogram_from_counts(counts: Vec<u64>, pseudocount: f64) -> Histogram1D {
    let nbins = counts.len();
    let total: f64 = counts.iter().map(|&c| c as f64).sum::<f64>() + pseudocount * nbins as f64;
    let w = bin_width(nbins);
    let density = counts.iter().map(|&c| (c as f64 + pseudocount) / (total * w)).collect();
    Histogram1D { nbins, counts, density, pseudocount }
}

/// Densities from `(count + pseudocount)` renormalized over the circle.
pub fn binned_marginal(angles: &[f64], nbins: usize, pseudocount: f64) -> Result<Histogram1D> {
    if angles.is_empty() {
        return Err(Error::EmptyInput);
    }
    if nbins < 2 {
        return Err(Error::invalid(format!("need at least two bins, got {nbins}")));
    }
    if !(pseudocount >= 0.0) {
        return Err(Error::invalid("pseudocount must be nonnegative"));
    }
    check_angles(angles)?;
    let mut counts = vec![0u64; nbins];
    for &a in angles {
        counts[bin_index(wrap_raw(a), nbins)] += 1;
    }
    Ok(histogram_from_counts(counts, pseudocount))
}

/// `KL(p‖q) + KL(q‖p)` over bins, with no ½ factor.
pub fn sym_kl_sum(p: &Histogram1D, q: &Histogram1D) -> Result<f64> {
    if p.nbins != q.nbins {
        return Err(Error::BinMismatch(p.nbins, q.nbins));
    }
    let w = p.bin_width();
    let mut total = 0.0;
    for (i, (&a, &b)) in p.density.iter().zip(&q.density).enumerate() {
        if !(a > 0.0) {
            return Err(Error::NonPositiveDensity { index: i, value: a });
        }
        if !(b > 0.0) {
            return Err(Error::NonPositiveDensity { index: i, value: b });
        }
        // (a − b)(log a − log b) is unchanged, bit for bit, when a and b swap.
        total += (a - b) * (a.ln() - b.ln()) * w;
    }
    Ok(total)
}

/// Joint counts over (−π, π]², row index from `a1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub nbins: usize,
    pub counts: Vec<u64>,
}

impl Histogram2D {
    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.nbins + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of mass with circular bin-index distance at most `band`.
    pub fn diagonal_band_fraction(&self, band: usize) -> f64 {
        let n = self.nbins;
        let mut inside = 0u64;
        for i in 0..n {
            for j in 0..n {
                let d = i.abs_diff(j);
                if d.min(n - d) <= band {
                    inside += self.count(i, j);
                }
            }
        }
        inside as f64 / self.total().max(1) as f64
    }
}

pub fn joint_histogram(a1: &[f64], a2: &[f64], nbins: usize) -> Result<Histogram2D> {
    if a1.len() != a2.len() {
        return Err(Error::LengthMismatch(a1.len(), a2.len()));
    }
    if nbins < 2 {
        return Err(Error::invalid(format!("need at least two bins, got {nbins}")));
    }
    check_angles(a1)?;
    check_angles(a2)?;
    let mut counts = vec![0u64; nbins * nbins];
    for (x, y) in a1.iter().zip(a2) {
        counts[bin_index(wrap_raw(*x), nbins) * nbins + bin_index(wrap_raw(*y), nbins)] += 1;
    }
    Ok(Histogram2D { nbins, counts })
}

/// Histogram of `Δa = wrap(a₂ − a₁)`.
pub fn angle_shift_density(a1: &[f64], a2: &[f64], nbins: usize, pseudocount: f64) -> Result<Histogram1D> {
    if a1.len() != a2.len() {
        return Err(Error::LengthMismatch(a1.len(), a2.len()));
    }
    check_angles(a1)?;
    check_angles(a2)?;
    let shifts: Vec<f64> = a1.iter().zip(a2).map(|(x, y)| wrap_raw(y - x)).collect();
    binned_marginal(&shifts, nbins, pseudocount)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    Ok(num / (dx * dy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}
