//! Acceptance suite: one test per criterion, serialized behind a global
//! lock so the stated runtime budgets are measured on a quiet machine.
//! Each test prints a single PASS line when it completes.

use brolin::gapdomain::{gap_domain, gate_mass, GapDomainSpec, GapScale, GateState};
use brolin::julia::{escape_radius, filled_julia_outer, julia_inner, CoverIndex};
use brolin::measure::DiscreteMeasure;
use brolin::pullback::{
    balanced_defect, bl_measure, convergence_study, invariance_defect, pullback_measure,
    PullbackConfig,
};
use brolin::rational::RationalMap;
use brolin::sphere::{sph_dist, SpherePoint};
use brolin::transport;
use brolin::walk::{capacity, harmonic_measure, wos_sample, CompactSetOracle, WalkConfig, WalkStart};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Mutex;
use std::time::Instant;

static SERIAL: Mutex<()> = Mutex::new(());

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn poly(coeffs: &[(f64, f64)]) -> RationalMap {
    let c: Vec<Complex64> = coeffs.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
    RationalMap::from_polynomial(&c).unwrap()
}

fn z_squared() -> RationalMap {
    poly(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)])
}

fn basilica() -> RationalMap {
    poly(&[(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)])
}

fn dendrite() -> RationalMap {
    poly(&[(0.0, 1.0), (0.0, 0.0), (1.0, 0.0)])
}

fn chebyshev_like() -> RationalMap {
    // z^2 - 2: filled Julia set is the segment [-2, 2]
    poly(&[(-2.0, 0.0), (0.0, 0.0), (1.0, 0.0)])
}

fn uniform_circle(n: usize) -> DiscreteMeasure {
    DiscreteMeasure::uniform_on(
        (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                SpherePoint::from_re_im(t.cos(), t.sin())
            })
            .collect(),
    )
    .unwrap()
}

/// Criterion 1: the depth-12 pullback of z^2 from base 1 is within
/// `pi/2^12 + pi/4096` of the exact 4096-point circle discretization.
#[test]
fn criterion_1_circle_oracle() {
    let _guard = lock();
    let t0 = Instant::now();
    let cfg = PullbackConfig { pair_budget: 20_000_000, ..PullbackConfig::default() };
    let res = pullback_measure(&z_squared(), &SpherePoint::from_re_im(1.0, 0.0), 12, &cfg).unwrap();
    let reference = uniform_circle(4096);
    let (dist, _) = transport::w1(&res.measure, &reference, cfg.pair_budget).unwrap();
    let bound = PI / 4096.0 + PI / 4096.0; // pi/2^12 + pi/4096
    let elapsed = t0.elapsed();
    assert!(
        dist <= bound + 1e-6,
        "criterion 1: W1 = {dist:.3e} above bound {bound:.3e}"
    );
    assert!(elapsed.as_secs_f64() < 10.0, "criterion 1: took {elapsed:?}");
    println!("ACCEPTANCE 1 PASS circle oracle: W1 = {dist:.3e} <= {bound:.3e} in {elapsed:.2?}");
}

/// Criterion 2: the convergence study of z^2 over depths 2..12 recovers the
/// exponential rate base 2 within [1.8, 2.2].
#[test]
fn criterion_2_rate_recovery() {
    let _guard = lock();
    let t0 = Instant::now();
    let cfg = PullbackConfig { pair_budget: 20_000_000, ..PullbackConfig::default() };
    let fit = convergence_study(&z_squared(), &SpherePoint::from_re_im(1.0, 0.0), 2, 12, 7, &cfg)
        .unwrap();
    let elapsed = t0.elapsed();
    assert!(
        fit.alpha >= 1.8 && fit.alpha <= 2.2,
        "criterion 2: alpha = {} outside [1.8, 2.2]",
        fit.alpha
    );
    assert!(elapsed.as_secs_f64() < 60.0, "criterion 2: took {elapsed:?}");
    println!("ACCEPTANCE 2 PASS rate recovery: alpha = {:.4} in {elapsed:.2?}", fit.alpha);
}

fn basilica_oracle(seed: u64) -> CompactSetOracle {
    let map = basilica();
    let m = escape_radius(&map).unwrap();
    let cover = filled_julia_outer(&map, 1.0 / 512.0, 60).unwrap();
    let cloud = julia_inner(&map, 14, seed, 1 << 20).unwrap();
    CompactSetOracle::from_parts(cover, &cloud, m).unwrap()
}

/// Criterion 3: harmonic measure and the pullback measure of the basilica
/// agree within W1 = 0.05 for three independent seeds.
#[test]
fn criterion_3_brolin_cross_validation() {
    let _guard = lock();
    let t0 = Instant::now();
    let map = basilica();
    let pull_cfg = PullbackConfig { pair_budget: 24_000_000, ..PullbackConfig::default() };
    let oracle = basilica_oracle(0);
    for seed in [1u64, 2, 3] {
        let (lambda, cert) = bl_measure(&map, 5, seed, &pull_cfg).unwrap();
        let cfg = WalkConfig {
            eps: 1e-3,
            samples: 10_000,
            r_cap: 4.0 * oracle.bounding_radius,
            r_start: 4.0 * oracle.bounding_radius,
            seed,
            step_cap: 1_000_000,
            snap: true,
        };
        let (omega, stats) = harmonic_measure(&oracle, WalkStart::Circle(cfg.r_start), &cfg).unwrap();
        let (dist, _) = transport::w1(&omega, &lambda, pull_cfg.pair_budget).unwrap();
        assert!(
            dist <= 0.05,
            "criterion 3 seed {seed}: W1 = {dist:.4} > 0.05 (bl depth {}, flagged {})",
            cert.depth,
            stats.flagged_count
        );
        println!(
            "  seed {seed}: W1(harmonic, pullback) = {dist:.4} (bl depth {}, {} flagged)",
            cert.depth, stats.flagged_count
        );
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "criterion 3: took {elapsed:?}");
    println!("ACCEPTANCE 3 PASS Brolin cross-validation in {elapsed:.2?}");
}

/// Criterion 4: capacity estimates of the three filled Julia sets are within
/// three standard errors of 1 and within 0.02 absolutely.
#[test]
fn criterion_4_capacity_is_one() {
    let _guard = lock();
    for (name, map, cell, depth) in [
        ("z2", z_squared(), 1.0 / 1024.0, 13),
        ("basilica", basilica(), 1.0 / 1024.0, 14),
        ("z2-2", chebyshev_like(), 1.0 / 1024.0, 14),
    ] {
        let t0 = Instant::now();
        let m = escape_radius(&map).unwrap();
        let cover = filled_julia_outer(&map, cell, 60).unwrap();
        let cloud = julia_inner(&map, depth, 0, 1 << 20).unwrap();
        let oracle = CompactSetOracle::from_parts(cover, &cloud, m).unwrap();
        let cfg = WalkConfig {
            eps: 5e-4,
            samples: 100_000,
            r_cap: 4.0 * m,
            r_start: 4.0 * m,
            seed: 42,
            step_cap: 1_000_000,
            snap: true,
        };
        let est = capacity(&oracle, &cfg).unwrap();
        let elapsed = t0.elapsed();
        let dev = (est.value - 1.0).abs();
        assert!(
            dev <= 3.0 * est.stderr.max(1e-12),
            "criterion 4 {name}: capacity {} is {dev:.4} from 1.0 with stderr {}",
            est.value,
            est.stderr
        );
        assert!(dev <= 0.02, "criterion 4 {name}: |{} - 1| > 0.02", est.value);
        assert!(elapsed.as_secs_f64() < 600.0, "criterion 4 {name}: took {elapsed:?}");
        println!(
            "  {name}: capacity = {:.5} +- {:.5} ({} flagged, {elapsed:.2?})",
            est.value, est.stderr, est.flagged_count
        );
    }
    println!("ACCEPTANCE 4 PASS capacity of filled Julia sets");
}

/// Criterion 5: all 10^5 walk samples on the unit-disk oracle stop inside
/// the band (eps/2, eps). Zero tolerance.
#[test]
fn criterion_5_stopping_band() {
    let _guard = lock();
    let t0 = Instant::now();
    let map = z_squared();
    let cover = filled_julia_outer(&map, 1.0 / 256.0, 60).unwrap();
    let cloud = julia_inner(&map, 13, 0, 1 << 20).unwrap();
    let oracle = CompactSetOracle::from_parts(cover, &cloud, 2.0).unwrap();
    let cfg = WalkConfig {
        eps: 1e-3,
        samples: 100_000,
        r_cap: 8.0,
        r_start: 8.0,
        seed: 9,
        step_cap: 1_000_000,
        snap: false,
    };
    use rayon::prelude::*;
    let violations: u64 = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let s = wos_sample(&oracle, Complex64::new(2.0, 0.0), &cfg, i).unwrap();
            u64::from(!(s.dist_at_stop > 0.5 * cfg.eps && s.dist_at_stop < cfg.eps))
        })
        .sum();
    assert_eq!(violations, 0, "criterion 5: {violations} samples outside the band");
    println!(
        "ACCEPTANCE 5 PASS stopping band: 100000/100000 samples inside (eps/2, eps) in {:.2?}",
        t0.elapsed()
    );
}

/// Criterion 6: invariance and balancedness defects of the pullback at depth
/// 10 are at most 0.2 of their depth-3 values for z^2 and the basilica.
#[test]
fn criterion_6_defect_decay() {
    let _guard = lock();
    let t0 = Instant::now();
    let cfg = PullbackConfig::default();
    for (name, map) in [("z2", z_squared()), ("basilica", basilica())] {
        let z = SpherePoint::from_re_im(1.0, 0.0);
        let shallow = pullback_measure(&map, &z, 3, &cfg).unwrap().measure;
        let deep = pullback_measure(&map, &z, 10, &cfg).unwrap().measure;
        let inv3 = invariance_defect(&map, &shallow, 64).unwrap();
        let inv10 = invariance_defect(&map, &deep, 64).unwrap();
        assert!(
            inv10 <= 0.2 * inv3,
            "criterion 6 {name}: invariance defect {inv3:.3e} -> {inv10:.3e}"
        );
        let bal3 = balanced_defect(&map, &shallow, 32, 1234).unwrap();
        let bal10 = balanced_defect(&map, &deep, 32, 1234).unwrap();
        assert!(
            bal10 <= 0.2 * bal3,
            "criterion 6 {name}: balanced defect {bal3:.3e} -> {bal10:.3e}"
        );
        println!(
            "  {name}: invariance {inv3:.3e} -> {inv10:.3e}, balanced {bal3:.3e} -> {bal10:.3e}"
        );
    }
    println!("ACCEPTANCE 6 PASS defect decay in {:.2?}", t0.elapsed());
}

/// Criterion 7: inner clouds at depth 12 and pullback supports lie inside
/// the h = 1/256, N = 60 outer cover inflated by one cell diagonal.
#[test]
fn criterion_7_sandwich_and_support() {
    let _guard = lock();
    let t0 = Instant::now();
    let pull_cfg = PullbackConfig::default();
    for (name, map) in [("z2", z_squared()), ("basilica", basilica()), ("dendrite", dendrite())] {
        let cover = filled_julia_outer(&map, 1.0 / 256.0, 60).unwrap();
        let index = CoverIndex::build(&cover);
        let cloud = julia_inner(&map, 12, 0, 1 << 20).unwrap();
        let mut violations = 0usize;
        for p in &cloud.points {
            let z = p.to_complex().expect("polynomial clouds are finite");
            if cover.distance_to_cover(z, &index) > cover.cell_diagonal() {
                violations += 1;
            }
        }
        assert_eq!(violations, 0, "criterion 7 {name}: {violations} cloud points escape the cover");

        let (lambda, _) = bl_measure(&map, 4, 7, &pull_cfg).unwrap();
        let mut measure_violations = 0usize;
        for a in lambda.atoms() {
            let z = a.to_complex().expect("pullback atoms of polynomials are finite");
            if cover.distance_to_cover(z, &index) > cover.cell_diagonal() {
                measure_violations += 1;
            }
        }
        assert_eq!(
            measure_violations, 0,
            "criterion 7 {name}: {measure_violations} measure atoms escape the cover"
        );
        println!("  {name}: {} cloud points and {} atoms inside", cloud.points.len(), lambda.len());
    }
    println!("ACCEPTANCE 7 PASS sandwich and support in {:.2?}", t0.elapsed());
}

/// Criterion 8: the network simplex agrees with exhaustive LP-vertex
/// enumeration on 200 random instances with at most 6 atoms per side.
#[test]
fn criterion_8_transport_oracle() {
    let _guard = lock();
    let t0 = Instant::now();
    use rand::Rng;
    use rayon::prelude::*;
    let instances: Vec<(DiscreteMeasure, DiscreteMeasure)> = {
        let mut rng = brolin::rng::stream(2024, brolin::rng::StreamKind::Thin, 5);
        (0..200)
            .map(|_| {
                let n = rng.gen_range(1..=6);
                let m = rng.gen_range(1..=6);
                let mk = |rng: &mut rand_chacha::ChaCha8Rng, k: usize| {
                    let atoms: Vec<SpherePoint> = (0..k)
                        .map(|_| {
                            SpherePoint::from_re_im(
                                rng.gen_range(-2.0..2.0),
                                rng.gen_range(-2.0..2.0),
                            )
                        })
                        .collect();
                    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
                    DiscreteMeasure::new(atoms, weights).unwrap()
                };
                let a = mk(&mut rng, n);
                let b = mk(&mut rng, m);
                (a, b)
            })
            .collect()
    };
    let worst: f64 = instances
        .par_iter()
        .map(|(a, b)| {
            let cost: Vec<f64> = a
                .atoms()
                .iter()
                .flat_map(|x| b.atoms().iter().map(move |y| sph_dist(x, y)))
                .collect();
            let exact =
                transport::reference::min_cost_exhaustive(a.weights(), b.weights(), &cost, b.len());
            let (fast, _) = transport::w1(a, b, 1_000_000).unwrap();
            (fast - exact).abs()
        })
        .reduce(|| 0.0, f64::max);
    assert!(worst <= 1e-9, "criterion 8: worst deviation {worst:.3e}");
    println!(
        "ACCEPTANCE 8 PASS transport oracle: 200 instances, worst deviation {worst:.2e} in {:.2?}",
        t0.elapsed()
    );
}

/// Criterion 9: scaled gate-domain dichotomy at n = 1 with 10^5 walks:
/// open-gate mass at least 10x the blocked mass, confidence intervals
/// disjoint.
#[test]
fn criterion_9_gap_dichotomy() {
    let _guard = lock();
    let t0 = Instant::now();
    let spec_with = |state: GateState| {
        let mut gates = BTreeMap::new();
        gates.insert("1".to_string(), state);
        GapDomainSpec {
            n_lo: 1,
            n_hi: 1,
            gates,
            scale: GapScale { cell: Some(1.0 / 512.0), ..GapScale::default() },
        }
    };
    let blocked = gap_domain(&spec_with(GateState::Blocked)).unwrap();
    let open = gap_domain(&spec_with(GateState::Open { open: 1 })).unwrap();
    let cfg = |domain: &brolin::gapdomain::GapDomain| WalkConfig {
        eps: 2e-4,
        samples: 100_000,
        r_cap: 4.0 * domain.oracle.bounding_radius,
        r_start: 4.0 * domain.oracle.bounding_radius,
        seed: 31,
        step_cap: 1_000_000,
        snap: false,
    };
    let mass_blocked = gate_mass(&blocked, 1, &cfg(&blocked)).unwrap();
    let mass_open = gate_mass(&open, 1, &cfg(&open)).unwrap();
    assert!(
        mass_open.estimate >= 10.0 * mass_blocked.estimate,
        "criterion 9: open {} < 10 x blocked {}",
        mass_open.estimate,
        mass_blocked.estimate
    );
    assert!(
        mass_open.ci_low > mass_blocked.ci_high,
        "criterion 9: confidence intervals overlap: [{}, {}] vs [{}, {}]",
        mass_blocked.ci_low,
        mass_blocked.ci_high,
        mass_open.ci_low,
        mass_open.ci_high
    );
    println!(
        "ACCEPTANCE 9 PASS gap dichotomy: open {:.4} [{:.4}, {:.4}] vs blocked {:.4} [{:.4}, {:.4}] in {:.2?}",
        mass_open.estimate,
        mass_open.ci_low,
        mass_open.ci_high,
        mass_blocked.estimate,
        mass_blocked.ci_low,
        mass_blocked.ci_high,
        t0.elapsed()
    );
}

/// Criterion 10: every randomized command re-run with the same seed and a
/// different worker count produces byte-identical output files.
#[test]
fn criterion_10_determinism_across_workers() {
    let _guard = lock();
    let t0 = Instant::now();
    let bin = env!("CARGO_BIN_EXE_brolin");
    let base = std::env::temp_dir().join(format!("brolin_det_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);

    let cases: Vec<(&str, Vec<String>)> = vec![
        (
            "blmeasure",
            vec!["blmeasure", "--preset", "z2", "--precision", "3", "--seed", "11"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "harmonic",
            vec![
                "harmonic", "--preset", "z2", "--samples", "500", "--seed", "11", "--cell",
                "0.0078125", "--iters", "40", "--cloud-depth", "10",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "capacity",
            vec![
                "capacity", "--preset", "z2", "--samples", "500", "--seed", "11", "--cell",
                "0.0078125", "--iters", "40", "--cloud-depth", "10",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "convergence",
            vec!["convergence", "--preset", "z2", "--mmin", "2", "--mmax", "7", "--seed", "11"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "gapdemo",
            vec!["gapdemo", "--samples", "2000", "--eps", "0.0002", "--seed", "11"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "validate",
            vec!["validate", "--preset", "z2", "--seed", "11"].into_iter().map(String::from).collect(),
        ),
        (
            "render",
            vec!["render", "--preset", "basilica", "--cell", "0.015625", "--iters", "30", "--depth", "9", "--seed", "11"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
    ];

    for (name, args) in &cases {
        let mut outputs: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
        for workers in ["1", "4"] {
            let dir = base.join(format!("{name}_{workers}"));
            std::fs::create_dir_all(&dir).unwrap();
            let status = std::process::Command::new(bin)
                .args(args)
                .arg("--workers")
                .arg(workers)
                .arg("--out")
                .arg(&dir)
                .status()
                .expect("spawn CLI");
            assert!(status.success(), "criterion 10: {name} failed with {status:?}");
            let mut files = BTreeMap::new();
            for entry in std::fs::read_dir(&dir).unwrap() {
                let entry = entry.unwrap();
                files.insert(
                    entry.file_name().to_string_lossy().to_string(),
                    std::fs::read(entry.path()).unwrap(),
                );
            }
            outputs.push(files);
        }
        let names: Vec<&String> = outputs[0].keys().collect();
        assert_eq!(
            outputs[0].keys().collect::<Vec<_>>(),
            outputs[1].keys().collect::<Vec<_>>(),
            "criterion 10: {name} produced different file sets"
        );
        for file in names {
            assert_eq!(
                outputs[0][file], outputs[1][file],
                "criterion 10: {name}/{file} differs between worker counts"
            );
        }
        println!("  {name}: {} files byte-identical across workers", outputs[0].len());
    }
    let _ = std::fs::remove_dir_all(&base);
    println!("ACCEPTANCE 10 PASS determinism across workers in {:.2?}", t0.elapsed());
}
