use contrastive_geometry::experiments::selftest::SelftestOptions;
use contrastive_geometry::experiments::{execute, gibbs_sphere, grad_consistency, mm_gap, ExperimentConfig, ExperimentKind};
use contrastive_geometry::io::{read_csv, Config, CsvTable, RunRecord};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

fn small(kind: ExperimentKind, seeds: usize, out: &Path, params: &str) -> ExperimentConfig {
    let mut cfg = Config::parse(params, Path::new("inline")).unwrap();
    cfg.set("seeds", &seeds.to_string());
    cfg.set("out_dir", &out.to_string_lossy());
    ExperimentConfig::from_params(kind, cfg).unwrap()
}

fn grad_cfg(out: &Path) -> ExperimentConfig {
    small(ExperimentKind::GradConsistency, 3, out, "m = 8\nd = 6\nbatch = 8\nn_ref = 128\nn_sweep = 4, 16, 64\n")
}

fn gibbs_cfg(out: &Path) -> ExperimentConfig {
    small(
        ExperimentKind::GibbsSphere,
        2,
        out,
        "steps = 30\nn_mc = 3000\nviz_pool = 500\nviz_draws = 50\nparticles = 16\ntaus = 10, 1, 0.1\n",
    )
}

fn mm_cfg(out: &Path) -> ExperimentConfig {
    small(ExperimentKind::MmGap, 2, out, "steps = 20\nbatch = 32\nn_eval = 400\nnbins = 12\nsigmas = 0, 0.7\n")
}

fn header(t: &CsvTable) -> Vec<&str> {
    t.header.iter().map(String::as_str).collect()
}

fn check_runs(dir: &Path, experiment: &str, seeds: usize) {
    let runs = read_csv(&dir.join("runs.csv")).unwrap();
    assert_eq!(header(&runs), RunRecord::HEADER);
    let names = runs.column_str("experiment").unwrap();
    assert!(names.iter().all(|n| *n == experiment));
    let mut seen: Vec<&str> = runs.column_str("seed").unwrap();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), seeds);
}

fn summary_columns_consistent(t: &CsvTable, prefix: &str, n: &[f64]) {
    let std = t.column_f64(&format!("{prefix}_std")).unwrap();
    let se = t.column_f64(&format!("{prefix}_stderr")).unwrap();
    for ((s, e), k) in std.iter().zip(&se).zip(n) {
        assert!(*s >= 0.0);
        assert!((e - s / k.sqrt()).abs() <= 1e-12 * (1.0 + s), "{e} vs {s}/sqrt({k})");
    }
}

#[test]
fn grad_consistency_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = grad_cfg(dir.path());
    execute(&cfg, &SelftestOptions::default()).unwrap();
    let t = read_csv(&dir.path().join("grad_consistency.csv")).unwrap();
    assert_eq!(header(&t), grad_consistency::HEADER);
    assert_eq!(t.rows.len(), 6);
    let regimes = t.column_str("regime").unwrap();
    assert_eq!(regimes, ["sphere_cosine", "sphere_cosine", "sphere_cosine", "box_rbf", "box_rbf", "box_rbf"]);
    assert_eq!(t.column_f64("N").unwrap(), [4.0, 16.0, 64.0, 4.0, 16.0, 64.0]);
    for a in t.column_f64("align_mean").unwrap() {
        assert!((-1.0..=1.0).contains(&a));
    }
    for r in t.column_f64("relerr_mean").unwrap() {
        assert!(r >= 0.0);
    }
    summary_columns_consistent(&t, "align", &[3.0; 6]);
    summary_columns_consistent(&t, "relerr", &[3.0; 6]);
    check_runs(dir.path(), "grad_consistency", 3);
}

#[test]
fn gibbs_sphere_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = gibbs_cfg(dir.path());
    execute(&cfg, &SelftestOptions::default()).unwrap();
    let t = read_csv(&dir.path().join("concentration.csv")).unwrap();
    assert_eq!(header(&t), gibbs_sphere::HEADER);
    assert_eq!(t.column_f64("tau").unwrap(), [10.0, 1.0, 0.1]);
    for col in ["capmass_trained_mean", "capmass_gibbs_mean"] {
        assert!(t.column_f64(col).unwrap().iter().all(|m| (0.0..=1.0).contains(m)));
    }
    for tau in [10.0, 1.0, 0.1] {
        let g = read_csv(&dir.path().join(gibbs_sphere::cloud_file_name(tau, "gibbs"))).unwrap();
        let p = read_csv(&dir.path().join(gibbs_sphere::cloud_file_name(tau, "trained"))).unwrap();
        assert_eq!(header(&g), gibbs_sphere::CLOUD_HEADER);
        assert_eq!(g.rows.len(), 50);
        assert_eq!(p.rows.len(), 16);
        for table in [&g, &p] {
            let (x, y, z) = (table.column_f64("x").unwrap(), table.column_f64("y").unwrap(), table.column_f64("z").unwrap());
            for i in 0..x.len() {
                assert!(((x[i] * x[i] + y[i] * y[i] + z[i] * z[i]).sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }
    assert!(dir.path().join("cloud_0.1_gibbs.csv").exists());
    check_runs(dir.path(), "gibbs_sphere", 2);
}

#[test]
fn mm_gap_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mm_cfg(dir.path());
    execute(&cfg, &SelftestOptions::default()).unwrap();
    let gap = read_csv(&dir.path().join("gap_curve.csv")).unwrap();
    assert_eq!(header(&gap), mm_gap::GAP_HEADER);
    assert_eq!(gap.column_f64("sigma_mis").unwrap(), [0.0, 0.7]);
    assert_eq!(gap.column_f64("seed_count").unwrap(), [2.0, 2.0]);
    assert!(gap.column_f64("symkl_mean").unwrap().iter().all(|s| *s >= 0.0));
    summary_columns_consistent(&gap, "symkl", &[2.0, 2.0]);
    let width = 2.0 * PI / 12.0;
    for label in ["0", "0.7"] {
        let m = read_csv(&dir.path().join(format!("marginals_{label}.csv"))).unwrap();
        assert_eq!(header(&m), mm_gap::MARGINALS_HEADER);
        assert_eq!(m.rows.len(), 12);
        let centers = m.column_f64("bin_center").unwrap();
        assert!((centers[0] + PI - width / 2.0).abs() < 1e-12);
        for col in ["density_mod1", "density_mod2"] {
            let d = m.column_f64(col).unwrap();
            assert!(d.iter().all(|x| *x > 0.0));
            assert!((d.iter().sum::<f64>() * width - 1.0).abs() < 1e-9);
        }
        let j = read_csv(&dir.path().join(format!("joint_{label}.csv"))).unwrap();
        assert_eq!(header(&j), mm_gap::JOINT_HEADER);
        assert_eq!(j.rows.len(), 144);
        assert_eq!(j.column_f64("count").unwrap().iter().sum::<f64>(), 800.0);
        let d = read_csv(&dir.path().join(format!("delta_{label}.csv"))).unwrap();
        assert_eq!(header(&d), mm_gap::DELTA_HEADER);
        let dens = d.column_f64("density").unwrap();
        assert!((dens.iter().sum::<f64>() * width - 1.0).abs() < 1e-9);
    }
    check_runs(dir.path(), "mm_gap", 2);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical_and_parallelism_does_not_matter() {
    for make in [grad_cfg as fn(&Path) -> ExperimentConfig, gibbs_cfg, mm_cfg] {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        execute(&make(a.path()), &SelftestOptions::default()).unwrap();
        let mut cfg = make(b.path());
        cfg.jobs = 3;
        execute(&cfg, &SelftestOptions::default()).unwrap();
        assert_eq!(snapshot(a.path()), snapshot(b.path()));
        let mut cfg = make(c.path());
        cfg.seed_base = 1;
        execute(&cfg, &SelftestOptions::default()).unwrap();
        assert_ne!(snapshot(a.path()), snapshot(c.path()));
    }
}

#[test]
fn shipped_configs_match_the_built_in_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let gc = ExperimentConfig::load(ExperimentKind::GradConsistency, &root.join("grad_consistency.cfg")).unwrap();
    assert_eq!(grad_consistency::GradConsistencyParams::from_config(&gc).unwrap(), Default::default());
    let gs = ExperimentConfig::load(ExperimentKind::GibbsSphere, &root.join("gibbs_sphere.cfg")).unwrap();
    assert_eq!(gibbs_sphere::GibbsSphereParams::from_config(&gs).unwrap(), Default::default());
    let mm = ExperimentConfig::load(ExperimentKind::MmGap, &root.join("mm_gap.cfg")).unwrap();
    assert_eq!(mm_gap::MmGapParams::from_config(&mm).unwrap(), Default::default());
    for cfg in [&gc, &gs, &mm] {
        assert_eq!((cfg.seeds, cfg.seed_base), (20, 0));
        assert!(cfg.params.warn_unknown(&[]).len() > 3);
    }
    assert!(gc.warn_unknown(&grad_consistency::KEYS).is_empty());
    assert!(gs.warn_unknown(&gibbs_sphere::KEYS).is_empty());
    assert!(mm.warn_unknown(&mm_gap::KEYS).is_empty());
}
