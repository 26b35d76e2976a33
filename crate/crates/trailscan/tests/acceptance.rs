//! Acceptance gate: one test per criterion, each printing a PASS/FAIL
//! line with the measured quantities. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.
//!
//! Criterion 2's r6-spread clause is known to fail at these sizes: the
//! n^4 ln n normalization of ||A^2||_F^2 still drifts ~25% per octave
//! below n ~ 10^3, compounding past the 1.5 max/min band over two
//! octaves. The assertion is kept as stated rather than loosened; the
//! measured table is printed alongside.

use trailscan::detect::{DetectorKind, ThresholdMode};
use trailscan::harness::{
    threshold_scan, DetectorSettings, ExperimentConfig, PathFamilySpec, RiskSession,
};
use trailscan::kernel::Scenery;
use trailscan::lattice::{sample_path, Aperture, LatticeSpec, PathKind};
use trailscan::multiscale::{PartitionTree, ScaleSchedule};
use trailscan::sim::stream_rng;
use trailscan::verify::{run_suite, SuiteKind, SuiteReport, VerifyOptions, VerifyScale};

fn full() -> VerifyOptions {
    VerifyOptions { scale: VerifyScale::Full, seed: 0xACCE97 }
}

fn banner(criterion: &str, pass: bool, detail: &str) -> bool {
    println!("ACCEPTANCE {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn suite_detail(report: &SuiteReport) -> String {
    let failed: Vec<&str> = report.assertions.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect();
    if failed.is_empty() {
        format!("{} assertions", report.assertions.len())
    } else {
        format!("{} assertions, failing: {}", report.assertions.len(), failed.join("; "))
    }
}

#[test]
fn criterion_01_oracle_equivalence() {
    let report = run_suite(SuiteKind::Kernel, full()).unwrap();
    let worst = report
        .assertions
        .iter()
        .filter(|a| a.name.starts_with("quadratic_form"))
        .map(|a| a.observed)
        .fold(0.0f64, f64::max);
    let pass = report.pass;
    assert!(
        banner("1 (oracle equivalence)", pass, &format!("worst relative error {worst:.3e} vs 1e-10 bound")),
        "{}",
        suite_detail(&report)
    );
}

#[test]
fn criterion_02_ratio_stability() {
    let report = run_suite(SuiteKind::LemmaA, full()).unwrap();
    for note in &report.notes {
        println!("  {note}");
    }
    let detail = report
        .assertions
        .iter()
        .map(|a| format!("{}={:.3}", a.name.trim_end_matches(" spread"), a.observed))
        .collect::<Vec<_>>()
        .join(", ");
    let pass = report.pass;
    assert!(
        banner("2 (ratio stability, max/min <= 1.5)", pass, &detail),
        "r6 drifts past the 1.5 band at desk scale; see the printed table. {}",
        suite_detail(&report)
    );
}

#[test]
fn criterion_03_subset_minimization() {
    let report = run_suite(SuiteKind::BruteForce, full()).unwrap();
    let min_ratio = report
        .assertions
        .iter()
        .filter(|a| a.name.starts_with("min /"))
        .map(|a| a.observed)
        .fold(f64::MAX, f64::min);
    let pass = report.pass;
    assert!(
        banner(
            "3 (subset minimization)",
            pass,
            &format!("exact 1.0 at n=3,4; min ratio over n in [3,16] is {min_ratio:.3} vs 0.1")
        ),
        "{}",
        suite_detail(&report)
    );
}

#[test]
fn criterion_04_gaussian_approximation() {
    let report = run_suite(SuiteKind::Ks, full()).unwrap();
    for note in &report.notes {
        println!("  {note}");
    }
    let main = report
        .assertions
        .iter()
        .find(|a| a.name.contains("n=256"))
        .map(|a| a.observed)
        .unwrap_or(f64::NAN);
    let pass = report.pass;
    assert!(
        banner("4 (Gaussian approximation)", pass, &format!("KS at n=256 is {main:.4} vs 0.05; series nonincreasing")),
        "{}",
        suite_detail(&report)
    );
}

#[test]
fn criterion_05_simple_quad_power() {
    // Calibrated to type I = 0.05 at n = 512: power >= 0.9 once
    // mu^2 sqrt(ln n) >= 9, and risk >= 0.8 once mu^2 sqrt(ln n) <= 0.1.
    let n = 512usize;
    let sqrt_ln = (n as f64).ln().sqrt();
    let mu_strong = (9.0 / sqrt_ln).sqrt();
    let mu_weak = (0.1 / sqrt_ln).sqrt();
    let config = ExperimentConfig {
        n,
        a: Aperture::ZERO,
        detector: DetectorSettings {
            kind: DetectorKind::SimpleQuad,
            threshold_mode: ThresholdMode::Calibrated { alpha: 0.05, trials: 2000, seed: 51 },
            schedule: None,
        },
        mu_grid: vec![mu_weak, mu_strong],
        path_family: PathFamilySpec::Zigzag,
        trials: 1000,
        base_seed: 505,
        output: None,
    };
    let session = RiskSession::new(&config).unwrap();
    let strong = session.risk_at(mu_strong).unwrap();
    let power = 1.0 - strong.type2_by_path["zigzag"];
    let weak = session.risk_at(mu_weak).unwrap();
    let pass = power >= 0.9 && weak.gamma >= 0.8;
    assert!(banner(
        "5 (weaker-version power scaling)",
        pass,
        &format!(
            "power {power:.3} at mu={mu_strong:.3} (>= 0.9); gamma {:.3} at mu={mu_weak:.3} (>= 0.8); type1 {:.3}",
            weak.gamma, strong.type1
        ),
    ));
}

#[test]
fn criterion_06_threshold_scaling() {
    // Simple quadratic: mu*(n) (ln n)^(1/4) constant within 25% across
    // n in {128, 512}; oracle: mu*(n) sqrt(n) constant within 25%.
    let scan_at = |kind: DetectorKind, n: usize, lo: f64, hi: f64| {
        let config = ExperimentConfig {
            n,
            a: Aperture::ZERO,
            detector: DetectorSettings {
                kind,
                threshold_mode: match kind {
                    DetectorKind::OraclePath => ThresholdMode::Analytic,
                    _ => ThresholdMode::Calibrated { alpha: 0.05, trials: 2000, seed: 61 },
                },
                schedule: None,
            },
            mu_grid: vec![lo],
            path_family: PathFamilySpec::Zigzag,
            trials: 400,
            base_seed: 606,
            output: None,
        };
        threshold_scan(&config, 0.2, lo, hi).unwrap().mu_star
    };

    let quad_128 = scan_at(DetectorKind::SimpleQuad, 128, 0.2, 3.0);
    let quad_512 = scan_at(DetectorKind::SimpleQuad, 512, 0.2, 3.0);
    let scaled_q128 = quad_128 * (128f64).ln().powf(0.25);
    let scaled_q512 = quad_512 * (512f64).ln().powf(0.25);
    let quad_ratio = scaled_q128 / scaled_q512;

    let oracle_128 = scan_at(DetectorKind::OraclePath, 128, 0.02, 1.0);
    let oracle_512 = scan_at(DetectorKind::OraclePath, 512, 0.02, 1.0);
    let scaled_o128 = oracle_128 * (128f64).sqrt();
    let scaled_o512 = oracle_512 * (512f64).sqrt();
    let oracle_ratio = scaled_o128 / scaled_o512;

    let within = |r: f64| r >= 0.75 && r <= 1.0 / 0.75;
    let pass = within(quad_ratio) && within(oracle_ratio);
    assert!(banner(
        "6 (threshold scaling exponents)",
        pass,
        &format!(
            "simple_quad mu*(128)={quad_128:.3} mu*(512)={quad_512:.3} scaled ratio {quad_ratio:.3}; \
             oracle mu*(128)={oracle_128:.4} mu*(512)={oracle_512:.4} scaled ratio {oracle_ratio:.3}"
        ),
    ));
}

#[test]
fn criterion_07_multiscale_exactness() {
    let mut failures: Vec<String> = Vec::new();

    // Homogeneity to 1e-9 at depths 1 and 2.
    for (n, sides, factor) in [
        (64usize, vec![64usize, 8], 16.0),
        (64, vec![64, 16, 4], 256.0),
        (256, vec![256, 32, 8], 256.0),
        (256, vec![256, 64, 16], 256.0),
    ] {
        let spec = LatticeSpec::known_start(n).unwrap();
        let schedule = ScaleSchedule::manual(sides.clone()).unwrap();
        let tree = PartitionTree::build(&spec, &schedule).unwrap();
        let mut rng = stream_rng(7, n as u64);
        let x = Scenery::new(
            (0..tree.lattice().len()).map(|_| rand::Rng::gen::<f64>(&mut rng) - 0.5).collect(),
        );
        let q1 = tree.recursive_statistic(&x).unwrap();
        let q2 = tree.recursive_statistic(&x.scaled(2.0)).unwrap();
        let rel = (q2 - factor * q1).abs() / (factor * q1).abs().max(1e-300);
        if rel > 1e-9 {
            failures.push(format!("homogeneity n={n} sides={sides:?}: rel {rel:.2e}"));
        }
    }

    // Noiseless consistency to 1e-12.
    for (n, sides) in [(64usize, vec![64usize, 8]), (64, vec![64, 16, 4])] {
        let spec = LatticeSpec::known_start(n).unwrap();
        let tree = PartitionTree::build(&spec, &ScaleSchedule::manual(sides.clone()).unwrap()).unwrap();
        for seed in 0..20u64 {
            let mut rng = stream_rng(seed, 1);
            let path = sample_path(&spec, PathKind::UniformReflected, &mut rng);
            let planted = Scenery::path_indicator(tree.lattice(), &path, 1.1);
            let q = tree.recursive_statistic(&planted).unwrap();
            let nu = tree.signal_recursion(&path, 1.1).unwrap().root().nu;
            let rel = (q - nu).abs() / nu.abs().max(1e-300);
            if rel > 1e-12 {
                failures.push(format!("noiseless n={n} sides={sides:?} seed={seed}: rel {rel:.2e}"));
            }
        }
    }

    // Slab facts on 1000 random paths at n = 64, depth 1.
    let spec = LatticeSpec::known_start(64).unwrap();
    let tree = PartitionTree::build(&spec, &ScaleSchedule::manual(vec![64, 8]).unwrap()).unwrap();
    let mut slab_groups: std::collections::BTreeMap<(i64, i64), Vec<usize>> = Default::default();
    for (bi, b) in tree.level(1).iter().enumerate() {
        slab_groups.entry(b.cols).or_default().push(bi);
    }
    let mut projection_widths_ok = true;
    for seed in 0..1000u64 {
        let mut rng = stream_rng(seed, 2);
        let path = sample_path(&spec, PathKind::UniformReflected, &mut rng);
        let labels = tree.label_good(&path).unwrap();
        for (range, blocks) in &slab_groups {
            let good = blocks.iter().filter(|&&b| labels.node(1, b).good).count();
            let touched = blocks.iter().filter(|&&b| labels.node(1, b).touched).count();
            if good < 1 || touched > 2 {
                failures.push(format!("slab {range:?} seed={seed}: good={good} touched={touched}"));
            }
        }
        let proj = tree.project_path(&path, 1).unwrap();
        if !(proj.is_valid() && proj.cells.iter().all(|c| (1..=2).contains(&c.len()))) {
            projection_widths_ok = false;
        }
    }
    if !projection_widths_ok {
        failures.push("projection cell widths left {1,2}".into());
    }

    // Schedule exponents at depth 2.
    let eps = ScaleSchedule::eps_closed_form(2);
    if (eps[0] - 6.0 / 7.0).abs() > 1e-15 || (eps[1] - 2.0 / 3.0).abs() > 1e-15 {
        failures.push(format!("eps closed form gave {eps:?}"));
    }

    let pass = failures.is_empty();
    assert!(
        banner(
            "7 (multiscale exactness)",
            pass,
            "homogeneity 1e-9, noiseless consistency 1e-12, slab facts on 1000 paths, eps = (6/7, 2/3)",
        ),
        "failures: {failures:?}"
    );
}

#[test]
fn criterion_08_decomposition() {
    let report = run_suite(SuiteKind::Decomposition, full()).unwrap();
    for note in &report.notes {
        println!("  {note}");
    }
    let pass = report.pass;
    assert!(
        banner("8 (signal/noise decomposition)", pass, &suite_detail(&report)),
        "{}",
        suite_detail(&report)
    );
}

#[test]
fn criterion_09_moment_bounds() {
    let report = run_suite(SuiteKind::Moments, full()).unwrap();
    let detail = report
        .assertions
        .iter()
        .filter(|a| a.name.contains("within bound"))
        .map(|a| format!("{} -> {:.3}", a.name, a.observed))
        .collect::<Vec<_>>()
        .join("; ");
    let pass = report.pass;
    assert!(banner("9 (moment bounds)", pass, &detail), "{}", suite_detail(&report));
}

#[test]
fn criterion_10_cli_reproducibility() {
    let exe = env!("CARGO_BIN_EXE_trailscan");
    let dir = tempfile::tempdir().unwrap();
    // The output format is inferred from the file extension.
    let run = |out: &std::path::Path, seed: &str| {
        std::process::Command::new(exe)
            .args([
                "risk", "--n", "32", "--a", "0", "--detector", "simple-quad", "--mu", "0.8", "--mu", "1.6",
                "--family", "uniform-reflected", "--family-count", "3", "--trials", "60", "--seed", seed,
                "--calib-trials", "150", "--out",
            ])
            .arg(out)
            .status()
            .expect("spawn trailscan")
    };
    let mut pass = true;
    for ext in ["json", "csv"] {
        let p1 = dir.path().join(format!("one.{ext}"));
        let p2 = dir.path().join(format!("two.{ext}"));
        assert!(run(&p1, "99").success());
        assert!(run(&p2, "99").success());
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        pass &= b1 == b2;
        let p3 = dir.path().join(format!("three.{ext}"));
        assert!(run(&p3, "100").success());
        pass &= std::fs::read(&p3).unwrap() != b1;
    }
    assert!(banner(
        "10 (CLI byte-identical reruns)",
        pass,
        "identical config+seed reproduce JSON and CSV outputs byte for byte; a different seed changes them",
    ));
}
