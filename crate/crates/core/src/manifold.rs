//! The representation container: unit spheres, the tanh box, and angles on S¹.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::{standard_normal, Prng};

/// Norms at or below this are treated as zero by [`normalize`].
pub const MIN_NORM: f64 = 1e-12;
/// Inner products are clamped to `[-1 + ARCCOS_CLAMP, 1 - ARCCOS_CLAMP]` before `acos`.
pub const ARCCOS_CLAMP: f64 = 1e-12;

/// A point on S^{d-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps coordinates already known to have unit norm.
    pub(crate) fn from_unit(coords: Vec<f64>) -> Self {
        debug_assert!((norm(&coords) - 1.0).abs() < 1e-9);
        UnitVector(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// An angle in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Angle(f64);

impl Angle {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    /// S^{d-1} embedded in R^d.
    Sphere(usize),
    /// [−1, 1]^d, reached through a tanh head.
    Box(usize),
}

impl ManifoldKind {
    pub fn ambient_dim(self) -> usize {
        match self {
            ManifoldKind::Sphere(d) | ManifoldKind::Box(d) => d,
        }
    }

    /// Surface measure μ(Z) of the sphere; Lebesgue volume 2^d of the box.
    pub fn volume(self) -> f64 {
        match self {
            ManifoldKind::Sphere(d) => sphere_area(d),
            ManifoldKind::Box(d) => 2f64.powi(d as i32),
        }
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldKind::Sphere(d) => write!(f, "sphere S^{} in R^{}", d - 1, d),
            ManifoldKind::Box(d) => write!(f, "box [-1,1]^{d}"),
        }
    }
}

/// Surface area of the unit sphere S^{d-1} in R^d (2π for the circle, 4π for S²).
pub fn sphere_area(d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    let n = norm(v);
    if !n.is_finite() {
        return Err(Error::NonFinite(n));
    }
    if n <= MIN_NORM {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

/// Great-circle distance with the inner product clamped away from ±1.
pub fn geodesic_distance_sphere(z: &UnitVector, w: &UnitVector) -> Result<f64> {
    if z.dim() != w.dim() {
        return Err(Error::DimensionMismatch { expected: z.dim(), got: w.dim() });
    }
    Ok(geodesic_distance_raw(z.coords(), w.coords()))
}

#[inline]
pub(crate) fn geodesic_distance_raw(z: &[f64], w: &[f64]) -> f64 {
    dot(z, w).clamp(-1.0 + ARCCOS_CLAMP, 1.0 - ARCCOS_CLAMP).acos()
}

pub fn wrap_angle(x: f64) -> Result<Angle> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    Ok(Angle(wrap_raw(x)))
}

#[inline]
pub(crate) fn wrap_raw(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// `n` i.i.d. uniform points on S^{d-1} by normalizing isotropic Gaussians.
pub fn sample_uniform_sphere(rng: &mut Prng, d: usize, n: usize) -> Result<Vec<UnitVector>> {
    if d < 2 {
        return Err(Error::invalid(format!("sphere dimension d = {d} must be at least 2")));
    }
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0.0; d];
    while out.len() < n {
        buf.iter_mut().for_each(|x| *x = standard_normal(rng));
        if let Ok(u) = normalize(&buf) {
            out.push(u);
        }
    }
    Ok(out)
}

pub fn angle_of(p: &UnitVector) -> Result<Angle> {
    if p.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: p.dim() });
    }
    Ok(angle_of_raw(p.coords()))
}

#[inline]
pub(crate) fn angle_of_raw(p: &[f64]) -> Angle {
    Angle(wrap_raw(p[1].atan2(p[0])))
}

pub fn embed_angle(a: Angle) -> UnitVector {
    UnitVector(vec![a.0.cos(), a.0.sin()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn circ_diff(a: f64, b: f64) -> f64 {
        wrap_raw(a - b).abs()
    }

    #[test]
    fn normalize_examples() {
        let u = normalize(&[3.0, 4.0]).unwrap();
        assert!((u.coords()[0] - 0.6).abs() < 1e-15 && (u.coords()[1] - 0.8).abs() < 1e-15);
        assert_eq!(normalize(&[0.0, 0.0, 1.0]).unwrap().coords(), &[0.0, 0.0, 1.0]);
        let v = [0.85, 0.15, -0.50];
        let u = normalize(&v).unwrap();
        let n = (0.85f64 * 0.85 + 0.15 * 0.15 + 0.25).sqrt();
        for (a, b) in u.coords().iter().zip(v) {
            assert!((a - b / n).abs() < 1e-15);
        }
        assert!(matches!(normalize(&[0.0, 1e-13]), Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn normalize_is_idempotent() {
        let u = normalize(&[1.0, -2.0, 0.5]).unwrap();
        let uu = normalize(u.coords()).unwrap();
        for (a, b) in u.coords().iter().zip(uu.coords()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn geodesic_examples() {
        let e0 = embed_angle(Angle(0.0));
        let z = normalize(&[1.0, 0.0]).unwrap();
        let w = normalize(&[-1.0, 0.0]).unwrap();
        let o = normalize(&[0.0, 1.0]).unwrap();
        assert!(geodesic_distance_sphere(&e0, &e0).unwrap() < 2e-6);
        assert!((geodesic_distance_sphere(&z, &w).unwrap() - PI).abs() < 2e-6);
        assert!((geodesic_distance_sphere(&z, &o).unwrap() - PI / 2.0).abs() < 1e-15);
        let s3 = normalize(&[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            geodesic_distance_sphere(&z, &s3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap().value(), 0.0);
        assert!((wrap_angle(1.5 * PI).unwrap().value() + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(-PI).unwrap().value(), PI);
        assert_eq!(wrap_angle(PI).unwrap().value(), PI);
        assert!(matches!(wrap_angle(f64::NAN), Err(Error::NonFinite(_))));
    }

    #[test]
    fn angle_embedding_examples() {
        assert_eq!(embed_angle(Angle(0.0)).coords(), &[1.0, 0.0]);
        let up = normalize(&[0.0, 1.0]).unwrap();
        assert!((angle_of(&up).unwrap().value() - PI / 2.0).abs() < 1e-15);
        let a = wrap_angle(2.5).unwrap();
        assert!((angle_of(&embed_angle(a)).unwrap().value() - 2.5).abs() < 1e-12);
        let s3 = normalize(&[1.0, 0.0, 0.0]).unwrap();
        assert!(angle_of(&s3).is_err());
    }

    #[test]
    fn uniform_sphere_moments() {
        let mut rng = seeded(7);
        let pts = sample_uniform_sphere(&mut rng, 3, 100_000).unwrap();
        let n = pts.len() as f64;
        let mut mean = [0.0; 3];
        let mut cov = [[0.0; 3]; 3];
        for p in &pts {
            let c = p.coords();
            for i in 0..3 {
                mean[i] += c[i] / n;
                for j in 0..3 {
                    cov[i][j] += c[i] * c[j] / n;
                }
            }
        }
        for i in 0..3 {
            assert!(mean[i].abs() < 0.02, "mean[{i}] = {}", mean[i]);
            for j in 0..3 {
                let target = if i == j { 1.0 / 3.0 } else { 0.0 };
                assert!((cov[i][j] - target).abs() < 0.02);
            }
        }
    }

    #[test]
    fn uniform_sphere_is_deterministic() {
        let a = sample_uniform_sphere(&mut seeded(3), 4, 1).unwrap();
        let b = sample_uniform_sphere(&mut seeded(3), 4, 1).unwrap();
        assert_eq!(a, b);
        assert!(sample_uniform_sphere(&mut seeded(3), 1, 1).is_err());
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn cosine_sandwich_on_s2() {
        // 1 - cos d lies between (2/π²) d² and d²/2 on [0, π].
        for k in 0..=1000 {
            let d = PI * k as f64 / 1000.0;
            let gap = 1.0 - d.cos();
            assert!(gap >= 2.0 / (PI * PI) * d * d - 1e-15);
            assert!(gap <= 0.5 * d * d + 1e-15);
        }
    }

    fn unit3() -> impl Strategy<Value = UnitVector> {
        prop::array::uniform3(-1.0f64..1.0)
            .prop_filter("nonzero", |v| norm(v) > 1e-3)
            .prop_map(|v| normalize(&v).unwrap())
    }

    proptest! {
        #[test]
        fn inner_products_bounded(z in unit3(), w in unit3()) {
            prop_assert!(dot(z.coords(), w.coords()).abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn triangle_inequality(a in unit3(), b in unit3(), c in unit3()) {
            let ab = geodesic_distance_sphere(&a, &b).unwrap();
            let bc = geodesic_distance_sphere(&b, &c).unwrap();
            let ac = geodesic_distance_sphere(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!((ab - geodesic_distance_sphere(&b, &a).unwrap()).abs() == 0.0);
        }

        #[test]
        fn wrap_is_idempotent_and_additive(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let wa = wrap_angle(a).unwrap().value();
            prop_assert!(wa > -PI && wa <= PI);
            prop_assert_eq!(wrap_angle(wa).unwrap().value(), wa);
            let lhs = wrap_angle(wa + wrap_angle(b).unwrap().value()).unwrap().value();
            let rhs = wrap_angle(a + b).unwrap().value();
            prop_assert!(circ_diff(lhs, rhs) < 1e-12);
        }
    }
}
