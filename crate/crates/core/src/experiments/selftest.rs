//! Fast invariant suites: finite-difference gradients, exact grid identities,
//! convexity probes and histogram bookkeeping.

use crate::diagnostics::{binned_marginal, sym_kl_sum};
use crate::error::Result;
use crate::grad::{gradient_check, FlatParams, FnObjective, Head, LinearEncoder, Objective};
use crate::intrinsic::{
    concavity_probe, convexity_probe, coordinate_lower_bound, effective_potential, free_energy, gibbs_density,
    mm_free_energy, multimodal_consistency_identity, random_density, random_floor_density, sigma_spike_density,
    spike_gap_bound, sym_kl, unimodal_consistency_identity, FloorConstraint, Grid, PotentialField,
};
use crate::io::{csv_string, parse_csv, Value};
use crate::kernel::{kernel_volume_mc, sharp_peak_check, Critic, Temperature};
use crate::losses::{infonce_loss_grad, ClipObjective, InfoNceObjective, PairBatch, SharedPoolBatch, UniBatch};
use crate::manifold::{sample_uniform_sphere, ManifoldKind};
use crate::particles::{particle_objective_grad, KdeBandwidth, ParticleCloud, TwoWellPotential};
use crate::rng::{derive_seed, seeded, standard_normal, Prng};
use rand::Rng;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// The particle objective goes through a clamped arccos.
pub const FD_TOL_PARTICLES: f64 = 1e-3;
pub const IDENTITY_TOL: f64 = 1e-9;
pub const FD_CONFIGS: usize = 20;
pub const PROBE_TRIALS: usize = 200;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelftestOptions {
    /// Flips the sign of every analytic gradient handed to the finite-difference
    /// suites. Used to confirm that the harness can fail.
    pub corrupt_gradient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed statistic for the check (an error, a gap or a margin).
    pub worst: f64,
    pub threshold: f64,
    pub cases: usize,
}

impl CheckResult {
    /// Passes when every observed value is at most `threshold`.
    fn at_most(name: &str, values: &[f64], threshold: f64) -> Self {
        let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        CheckResult { name: name.into(), passed: worst <= threshold, worst, threshold, cases: values.len() }
    }

    /// Passes when every observed value is strictly above `threshold`.
    fn above(name: &str, values: &[f64], threshold: f64) -> Self {
        let worst = values.iter().copied().fold(f64::INFINITY, f64::min);
        CheckResult { name: name.into(), passed: worst > threshold, worst, threshold, cases: values.len() }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<40} worst={:.3e} threshold={:.1e} cases={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.threshold,
            self.cases
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().len();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

struct Corrupted<'a>(&'a dyn Objective, bool);

impl Objective for Corrupted<'_> {
    fn n_params(&self) -> usize {
        self.0.n_params()
    }

    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, mut g) = self.0.value_and_grad(params)?;
        if self.1 {
            g.iter_mut().for_each(|x| *x = -*x);
        }
        Ok((v, g))
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        self.0.value(params)
    }
}

fn fd_error(obj: &dyn Objective, x0: Vec<f64>, opts: &SelftestOptions) -> Result<f64> {
    gradient_check(&Corrupted(obj, opts.corrupt_gradient), &FlatParams(x0), FD_STEP)
}

fn randv(rng: &mut Prng, m: usize) -> Vec<f64> {
    (0..m).map(|_| standard_normal(rng)).collect()
}

fn random_shared_batch(rng: &mut Prng, m: usize) -> SharedPoolBatch {
    let b = rng.random_range(2..6);
    let n = rng.random_range(3..9);
    SharedPoolBatch {
        anchors: (0..b).map(|_| randv(rng, m)).collect(),
        positives: (0..b).map(|_| randv(rng, m)).collect(),
        pool: (0..n).map(|_| randv(rng, m)).collect(),
    }
}

fn rng_for(seed_base: u64, name: &str) -> Prng {
    seeded(derive_seed(seed_base, 0, &format!("selftest/{name}")))
}

/// Batch InfoNCE in both regimes, single-anchor InfoNCE, the symmetric in-batch
/// loss, the two-well potential and the particle objective.
pub fn gradient_checks(opts: &SelftestOptions, seed_base: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (name, head, rbf) in [("grad/infonce_sphere_cosine", Head::Normalize, false), ("grad/infonce_box_rbf", Head::Tanh, true)] {
        let mut rng = rng_for(seed_base, name);
        let mut errs = Vec::new();
        for _ in 0..FD_CONFIGS {
            let d = rng.random_range(2..6);
            let m = rng.random_range(2..7);
            let critic = if rbf { Critic::rbf_for_dim(d) } else { Critic::Cosine };
            let tau = Temperature::new(if rbf { rng.random_range(0.5..2.0) } else { rng.random_range(0.1..1.0) })?;
            let enc = LinearEncoder::random(d, m, head, &mut rng)?;
            let batch = random_shared_batch(&mut rng, m);
            let n = batch.pool.len();
            let obj = InfoNceObjective { encoder: &enc, batch: &batch, n, critic, tau };
            errs.push(fd_error(&obj, enc.weights().to_vec(), opts)?);
        }
        out.push(CheckResult::at_most(name, &errs, FD_TOL));
    }

    let mut rng = rng_for(seed_base, "grad/infonce_single");
    let mut errs = Vec::new();
    for _ in 0..FD_CONFIGS {
        let (d, m) = (rng.random_range(2..5), rng.random_range(2..5));
        let enc = LinearEncoder::random(d, m, Head::Normalize, &mut rng)?;
        let negs = rng.random_range(1..6);
        let b = UniBatch { anchor: randv(&mut rng, m), positive: randv(&mut rng, m), negatives: (0..negs).map(|_| randv(&mut rng, m)).collect() };
        let tau = Temperature::new(rng.random_range(0.1..1.0))?;
        let obj = FnObjective::new(enc.n_params(), |w: &[f64]| infonce_loss_grad(&enc.with_weights(w)?, &b, Critic::Cosine, tau));
        errs.push(fd_error(&obj, enc.weights().to_vec(), opts)?);
    }
    out.push(CheckResult::at_most("grad/infonce_single_anchor", &errs, FD_TOL));

    let mut rng = rng_for(seed_base, "grad/clip");
    let mut errs = Vec::new();
    for k in 0..FD_CONFIGS {
        let d = rng.random_range(2..4);
        let (mx, my) = (rng.random_range(2..5), rng.random_range(2..5));
        let f = LinearEncoder::random(d, mx, Head::Normalize, &mut rng)?;
        let g = LinearEncoder::random(d, my, Head::Normalize, &mut rng)?;
        let b = rng.random_range(2..6);
        let batch = PairBatch::new((0..b).map(|_| randv(&mut rng, mx)).collect(), (0..b).map(|_| randv(&mut rng, my)).collect())?;
        let critic = if k % 2 == 0 { Critic::Cosine } else { Critic::rbf_for_dim(d) };
        let tau = Temperature::new(rng.random_range(0.1..1.0))?;
        let obj = ClipObjective { f: &f, g: &g, batch: &batch, critic, tau };
        let x0: Vec<f64> = f.weights().iter().chain(g.weights()).copied().collect();
        errs.push(fd_error(&obj, x0, opts)?);
    }
    out.push(CheckResult::at_most("grad/clip_symmetric", &errs, FD_TOL));

    let mut rng = rng_for(seed_base, "grad/two_well");
    let p = TwoWellPotential::standard();
    let obj = FnObjective::new(3, |z: &[f64]| Ok((p.value(z), p.grad(z).to_vec())));
    let mut errs = Vec::new();
    for _ in 0..FD_CONFIGS {
        let z = sample_uniform_sphere(&mut rng, 3, 1)?.remove(0).into_inner();
        errs.push(fd_error(&obj, z, opts)?);
    }
    out.push(CheckResult::at_most("grad/two_well_potential", &errs, FD_TOL));

    let mut rng = rng_for(seed_base, "grad/particles");
    let mut errs = Vec::new();
    for _ in 0..FD_CONFIGS {
        let m = rng.random_range(3..12);
        let cloud = ParticleCloud::uniform(m, &mut rng)?;
        let tau = Temperature::new(rng.random_range(0.1..5.0))?;
        let h = KdeBandwidth::new(0.35)?;
        let obj = FnObjective::new(3 * m, |flat: &[f64]| {
            let ambient = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            let (v, g) = particle_objective_grad(&ParticleCloud::from_ambient(ambient)?, &p, tau, h)?;
            Ok((v, g.into_iter().flatten().collect()))
        });
        // Off-sphere ambient points exercise the projection Jacobian.
        let x0: Vec<f64> = cloud.ambient().iter().flatten().map(|x| 1.3 * x).collect();
        errs.push(fd_error(&obj, x0, opts)?);
    }
    out.push(CheckResult::at_most("grad/particle_objective", &errs, FD_TOL_PARTICLES));
    Ok(out)
}

fn random_field(grid: &Grid, rng: &mut Prng) -> Result<PotentialField> {
    PotentialField::new((0..grid.len()).map(|_| standard_normal(rng)).collect())
}

fn test_grids() -> Result<Vec<Grid>> {
    Ok(vec![Grid::circle(16)?, Grid::circle(360)?, Grid::fibonacci_sphere(512)?])
}

/// Exact grid identities: Gibbs optimum value and optimality, the two
/// consistency identities, the coordinate lower bound and the spike gap.
pub fn identity_checks(seed_base: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = rng_for(seed_base, "identity");
    let mut resid = Vec::new();
    let mut margins = Vec::new();
    for grid in test_grids()? {
        for _ in 0..5 {
            let u = random_field(&grid, &mut rng)?;
            let tau = Temperature::new(rng.random_range(0.1..3.0))?;
            let (star, log_z) = gibbs_density(&grid, &u, tau)?;
            let f_star = free_energy(&grid, &star, &u, tau)?;
            resid.push((f_star + log_z).abs());
            for _ in 0..20 {
                let rho = random_density(&grid, 0.8, &mut rng);
                margins.push(free_energy(&grid, &rho, &u, tau)? - f_star);
            }
        }
    }
    out.push(CheckResult::at_most("identity/gibbs_free_energy", &resid, IDENTITY_TOL));
    out.push(CheckResult::above("identity/gibbs_optimality", &margins, 1e-10));

    let mut uni = Vec::new();
    let mut multi = Vec::new();
    for grid in test_grids()? {
        for _ in 0..20 {
            let tau = Temperature::new(rng.random_range(0.1..3.0))?;
            let (u12, u21) = (random_field(&grid, &mut rng)?, random_field(&grid, &mut rng)?);
            let d: Vec<_> = (0..4).map(|_| random_density(&grid, 1.0, &mut rng)).collect();
            let (l, r) = unimodal_consistency_identity(&grid, &d[0], &d[1], &u12, tau)?;
            uni.push((l - r).abs());
            let (l, r) = multimodal_consistency_identity(&grid, &d[0], &d[1], &d[2], &d[3], &u12, &u21, tau)?;
            multi.push((l - r).abs());
        }
    }
    out.push(CheckResult::at_most("identity/unimodal_kl", &uni, IDENTITY_TOL));
    out.push(CheckResult::at_most("identity/multimodal_log_ratio", &multi, IDENTITY_TOL));

    let grid = Grid::circle(128)?;
    let fc = FloorConstraint::default_for(&grid);
    let tau = Temperature::new(0.5)?;
    let u12 = PotentialField::from_fn(&grid, |z| -z[0] - 0.4 * (3.0 * z[1].atan2(z[0])).cos())?;
    let u21 = PotentialField::from_fn(&grid, |z| -0.6 * z[0] - 0.8 * z[1])?;
    let rho2 = crate::intrinsic::DiscreteDensity::normalized(
        &grid,
        grid.points().iter().map(|z| (2.0 * (z[0] * 0.9 + z[1] * 0.4)).exp()).collect(),
    )?;
    let bound = coordinate_lower_bound(&grid, &rho2, &u12, &u21, &fc, tau)?;
    let mut gaps = Vec::new();
    for _ in 0..100 {
        let rho1 = random_floor_density(&grid, &fc, 1.5, &mut rng);
        gaps.push(mm_free_energy(&grid, &rho1, &rho2, &u12, &u21, tau)? - bound);
    }
    out.push(CheckResult {
        name: "identity/coordinate_lower_bound".into(),
        passed: gaps.iter().all(|g| *g >= 0.0),
        worst: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        threshold: 0.0,
        cases: gaps.len(),
    });

    let v = effective_potential(&u12, &rho2, tau)?;
    let range = v.max() - v.min();
    let mut excess = Vec::new();
    for k in 0..8 {
        let sigma = range / 2f64.powi(k);
        let spike = sigma_spike_density(&grid, &v, sigma, &fc)?;
        let gap = mm_free_energy(&grid, &spike, &rho2, &u12, &u21, tau)? - bound;
        excess.push(gap - spike_gap_bound(&grid, &v, &rho2, sigma, &fc)?);
        excess.push(-gap);
    }
    out.push(CheckResult::at_most("identity/spike_gap_bound", &excess, 1e-12));
    Ok(out)
}

/// Convexity and concavity probes, the cosine sharp-peak sandwich and kernel
/// volume independence of the anchor.
pub fn probe_checks(seed_base: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = rng_for(seed_base, "probe");
    let grid = Grid::circle(64)?;
    let u = random_field(&grid, &mut rng)?;
    let r = convexity_probe(&grid, &u, Temperature::new(0.5)?, PROBE_TRIALS, &mut rng)?;
    out.push(CheckResult {
        name: "probe/free_energy_convexity".into(),
        passed: r.passed,
        worst: r.worst_margin,
        threshold: crate::intrinsic::PROBE_SLACK,
        cases: r.trials,
    });
    let (u12, u21) = (random_field(&grid, &mut rng)?, random_field(&grid, &mut rng)?);
    let rho2 = random_density(&grid, 1.0, &mut rng);
    let fc = FloorConstraint::default_for(&grid);
    let r = concavity_probe(&grid, &u12, &u21, &rho2, &fc, Temperature::new(0.5)?, PROBE_TRIALS, &mut rng)?;
    out.push(CheckResult {
        name: "probe/mm_coordinate_concavity".into(),
        passed: r.passed,
        worst: r.worst_margin,
        threshold: crate::intrinsic::PROBE_SLACK,
        cases: r.trials,
    });

    let sp = sharp_peak_check(Critic::Cosine, ManifoldKind::Sphere(3), PI, 2.0 / (PI * PI), 0.5, 5000, &mut rng)?;
    out.push(CheckResult { name: "probe/sharp_peak_cosine_s2".into(), passed: sp.ok, worst: sp.worst_violation, threshold: 1e-12, cases: sp.probes });

    let tau = Temperature::new(0.5)?;
    let anchors = sample_uniform_sphere(&mut rng, 3, 6)?;
    let est: Vec<_> = anchors
        .iter()
        .map(|a| kernel_volume_mc(ManifoldKind::Sphere(3), Critic::Cosine, tau, a.coords(), 40_000, &mut rng))
        .collect::<Result<_>>()?;
    let mut ratios = Vec::new();
    for i in 0..est.len() {
        for j in i + 1..est.len() {
            let se = (est[i].std_error.powi(2) + est[j].std_error.powi(2)).sqrt();
            ratios.push((est[i].value - est[j].value).abs() / se);
        }
    }
    out.push(CheckResult::at_most("probe/kernel_volume_anchor_independence", &ratios, 4.0));
    Ok(out)
}

/// Divergence symmetry, histogram normalization and CSV round trips.
pub fn bookkeeping_checks(seed_base: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = rng_for(seed_base, "bookkeeping");
    let mut asym = Vec::new();
    let mut mass = Vec::new();
    let grid = Grid::circle(60)?;
    for _ in 0..50 {
        let n = rng.random_range(10..500);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        let b: Vec<f64> = (0..n).map(|_| 0.5 * standard_normal(&mut rng)).collect();
        let (ha, hb) = (binned_marginal(&a, 60, 1.0)?, binned_marginal(&b, 60, 1.0)?);
        asym.push((sym_kl_sum(&ha, &hb)? - sym_kl_sum(&hb, &ha)?).abs());
        mass.push((ha.density.iter().sum::<f64>() * ha.bin_width() - 1.0).abs());
        let (p, q) = (random_density(&grid, 1.0, &mut rng), random_density(&grid, 1.0, &mut rng));
        asym.push((sym_kl(&grid, &p, &q)? - sym_kl(&grid, &q, &p)?).abs());
    }
    out.push(CheckResult::at_most("invariant/sym_kl_bit_symmetry", &asym, 0.0));
    out.push(CheckResult::at_most("invariant/histogram_mass", &mass, 1e-10));

    let mut mismatches = Vec::new();
    for _ in 0..20 {
        let rows: Vec<Vec<Value>> = (0..5)
            .map(|i| vec![Value::Int(i), Value::Real(standard_normal(&mut rng) * 10f64.powi(rng.random_range(-8..8)))])
            .collect();
        let text = csv_string(&["idx", "value"], &rows)?;
        let table = parse_csv(&text, Path::new("<memory>"))?;
        let back = table.column_f64("value")?;
        let bad = rows.iter().zip(&back).filter(|(r, b)| r[1] != Value::Real(**b)).count();
        mismatches.push(bad as f64);
    }
    out.push(CheckResult::at_most("invariant/csv_round_trip", &mismatches, 0.0));
    Ok(out)
}

pub fn run_selftest(opts: &SelftestOptions, seed_base: u64) -> Result<SelftestReport> {
    let mut checks = gradient_checks(opts, seed_base)?;
    checks.extend(identity_checks(seed_base)?);
    checks.extend(probe_checks(seed_base)?);
    checks.extend(bookkeeping_checks(seed_base)?);
    Ok(SelftestReport { checks })
}
