//! Command-line front end: `simulate`, `risk`, `scan`, `schedule`,
//! `verify`, and `brute-min` subcommands over JSON/CSV inputs and
//! outputs. Exit codes: 0 success, 1 verification-suite failure,
//! 2 configuration or usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::detect::{DetectorKind, SchedulePlan, ThresholdMode};
use crate::error::{Error, Result};
use crate::harness::{
    estimate_risk, threshold_scan, write_risk_grid, DetectorSettings, ExperimentConfig, OutputFormat,
    OutputSpec, PathFamilySpec,
};
use crate::lattice::{sample_path, Aperture, LatticeSpec, PathKind, SiteSet};
use crate::multiscale::{ScaleSchedule, ScheduleConstants};
use crate::sim::{generate_scenery_with_noise, stream, stream_rng, Hypothesis};
use crate::verify::{run_suite, SuiteKind, SuiteReport, VerifyOptions, VerifyScale};

#[derive(Parser)]
#[command(
    name = "trailscan",
    version,
    about = "Anomalous-path detection on finite 2D lattices: simulation, detectors, risk estimation, verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a scenery under the null or a planted-path hypothesis
    Simulate(SimulateArgs),
    /// Estimate minimax risk of a detector over a path family
    Risk(RiskArgs),
    /// Bisect for the detection threshold mu* at a target risk
    Scan(ScanArgs),
    /// Print the automatic coarse-graining schedule
    Schedule(ScheduleArgs),
    /// Run a numerical verification suite
    Verify(VerifyArgs),
    /// Exhaustive subset-minimization value at small n
    BruteMin(BruteMinArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    SimpleQuad,
    Multiscale,
    Oracle,
}

impl From<KindArg> for DetectorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::SimpleQuad => DetectorKind::SimpleQuad,
            KindArg::Multiscale => DetectorKind::Multiscale,
            KindArg::Oracle => DetectorKind::OraclePath,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Zigzag,
    MaxDrift,
    UniformReflected,
    Exhaustive,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PathArg {
    Zigzag,
    MaxDrift,
    UniformReflected,
}

impl From<PathArg> for PathKind {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Zigzag => PathKind::Zigzag,
            PathArg::MaxDrift => PathKind::MaxDrift,
            PathArg::UniformReflected => PathKind::UniformReflected,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Analytic,
    Calibrated,
}

#[derive(Args)]
struct GeometryArgs {
    /// Number of hyperplanes
    #[arg(long)]
    n: usize,
    /// Aperture (exact rational or decimal text: 0, 1/2, 0.25)
    #[arg(long, default_value = "0")]
    a: Aperture,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Plant a path of this kind (omit for a null scenery)
    #[arg(long)]
    path: Option<PathArg>,
    /// Signal strength on the planted path
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// Zero the noise (scenery equals the planted signal exactly)
    #[arg(long)]
    noiseless: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectorArgs {
    #[arg(long, value_enum)]
    detector: KindArg,
    /// Threshold resolution (default: calibrated for the statistical
    /// detectors, analytic midpoint for the oracle baseline)
    #[arg(long, value_enum)]
    threshold_mode: Option<ModeArg>,
    /// Calibration type-I level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Calibration trials
    #[arg(long, default_value_t = 2000)]
    calib_trials: usize,
    /// Calibration seed
    #[arg(long, default_value_t = 0x7261_696c)]
    calib_seed: u64,
    /// Manual multiscale block sides, comma separated (e.g. 64,8)
    #[arg(long, value_delimiter = ',')]
    block_sides: Vec<usize>,
}

impl DetectorArgs {
    fn settings(&self) -> DetectorSettings {
        let mode = self.threshold_mode.unwrap_or(match self.detector {
            KindArg::Oracle => ModeArg::Analytic,
            _ => ModeArg::Calibrated,
        });
        let threshold_mode = match mode {
            ModeArg::Analytic => ThresholdMode::Analytic,
            ModeArg::Calibrated => ThresholdMode::Calibrated {
                alpha: self.alpha,
                trials: self.calib_trials,
                seed: self.calib_seed,
            },
        };
        let schedule = if self.block_sides.is_empty() {
            None
        } else {
            Some(SchedulePlan::Manual { block_sides: self.block_sides.clone() })
        };
        DetectorSettings { kind: self.detector.into(), threshold_mode, schedule }
    }
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Zigzag)]
    family: FamilyArg,
    /// Member count for the uniform_reflected family
    #[arg(long, default_value_t = 8)]
    family_count: usize,
}

impl FamilyArgs {
    fn spec(&self) -> PathFamilySpec {
        match self.family {
            FamilyArg::Zigzag => PathFamilySpec::Zigzag,
            FamilyArg::MaxDrift => PathFamilySpec::MaxDrift,
            FamilyArg::UniformReflected => PathFamilySpec::UniformReflected { count: self.family_count },
            FamilyArg::Exhaustive => PathFamilySpec::Exhaustive,
        }
    }
}

#[derive(Args)]
struct RiskArgs {
    /// JSON experiment config; when given, all other flags are ignored
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of hyperplanes (required without --config)
    #[arg(long)]
    n: Option<usize>,
    /// Aperture (exact rational or decimal text: 0, 1/2, 0.25)
    #[arg(long, default_value = "0")]
    a: Aperture,
    #[arg(long, value_enum)]
    detector: Option<KindArg>,
    /// Threshold resolution (default: calibrated for the statistical
    /// detectors, analytic midpoint for the oracle baseline)
    #[arg(long, value_enum)]
    threshold_mode: Option<ModeArg>,
    /// Calibration type-I level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Calibration trials
    #[arg(long, default_value_t = 2000)]
    calib_trials: usize,
    /// Calibration seed
    #[arg(long, default_value_t = 0x7261_696c)]
    calib_seed: u64,
    /// Manual multiscale block sides, comma separated (e.g. 64,8)
    #[arg(long, value_delimiter = ',')]
    block_sides: Vec<usize>,
    /// Signal strengths (repeatable)
    #[arg(long = "mu")]
    mu: Vec<f64>,
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RiskArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        if let Some(path) = &self.config {
            return ExperimentConfig::from_json_file(path);
        }
        let n = self.n.ok_or_else(|| Error::Config("either --config or --n is required".into()))?;
        let kind = self
            .detector
            .ok_or_else(|| Error::Config("--detector is required without --config".into()))?;
        if self.mu.is_empty() {
            return Err(Error::Config("at least one --mu is required".into()));
        }
        let detector = DetectorArgs {
            detector: kind,
            threshold_mode: self.threshold_mode,
            alpha: self.alpha,
            calib_trials: self.calib_trials,
            calib_seed: self.calib_seed,
            block_sides: self.block_sides.clone(),
        };
        Ok(ExperimentConfig {
            n,
            a: self.a,
            detector: detector.settings(),
            mu_grid: self.mu.clone(),
            path_family: self.family.spec(),
            trials: self.trials,
            base_seed: self.seed,
            output: self.out.as_ref().map(|p| OutputSpec { path: p.clone(), format: format_for(p) }),
        })
    }
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, default_value_t = 0.2)]
    target_gamma: f64,
    #[arg(long)]
    mu_lo: f64,
    #[arg(long)]
    mu_hi: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    mu: f64,
    /// Schedule constant c
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Schedule constant C1
    #[arg(long, default_value_t = 0.0)]
    c1: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suites to run (default: all)
    #[arg(long, value_delimiter = ',')]
    suite: Vec<String>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Quick)]
    scale: ScaleArg,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// JSON report destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Quick,
    Full,
}

#[derive(Args)]
struct BruteMinArgs {
    #[arg(long)]
    n: usize,
}

fn format_for(path: &PathBuf) -> OutputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => OutputFormat::Csv,
        _ => OutputFormat::Json,
    }
}

fn write_or_print<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulationOutput {
    n: usize,
    a: Aperture,
    hypothesis: String,
    mu: f64,
    noiseless: bool,
    seed: u64,
    path_heights: Option<Vec<i64>>,
    values: Vec<f64>,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let spec = LatticeSpec::new(args.geometry.n, args.geometry.a)?;
    let sites = SiteSet::from_spec(&spec)?;
    let mut rng = stream_rng(args.seed, stream::GENERIC);
    let path = args.path.map(|kind| sample_path(&spec, kind.into(), &mut rng));
    let noise_sd = if args.noiseless { 0.0 } else { 1.0 };
    let hypothesis = match &path {
        Some(p) => Hypothesis::Signal { path: p, mu: args.mu },
        None => Hypothesis::Null,
    };
    let scenery = generate_scenery_with_noise(&sites, hypothesis, noise_sd, &mut rng);
    let output = SimulationOutput {
        n: spec.n,
        a: spec.a,
        hypothesis: if path.is_some() { "signal".into() } else { "null".into() },
        mu: args.mu,
        noiseless: args.noiseless,
        seed: args.seed,
        path_heights: path.map(|p| p.heights().to_vec()),
        values: scenery.values().to_vec(),
    };
    write_or_print(&output, args.out.as_ref())
}

fn cmd_risk(args: &RiskArgs) -> Result<()> {
    let config = args.config()?;
    let grid = estimate_risk(&config)?;
    match &config.output {
        Some(spec) => write_risk_grid(&grid, spec)?,
        None => write_or_print(&grid, None)?,
    }
    Ok(())
}

fn cmd_scan(args: &ScanArgs) -> Result<()> {
    let config = ExperimentConfig {
        n: args.geometry.n,
        a: args.geometry.a,
        detector: args.detector.settings(),
        mu_grid: vec![args.mu_lo],
        path_family: args.family.spec(),
        trials: args.trials,
        base_seed: args.seed,
        output: None,
    };
    let result = threshold_scan(&config, args.target_gamma, args.mu_lo, args.mu_hi)?;
    write_or_print(&result, args.out.as_ref())
}

#[derive(Serialize)]
struct ScheduleOutput {
    #[serde(rename = "K")]
    k: usize,
    eps: Vec<f64>,
    block_sides: Vec<usize>,
}

fn cmd_schedule(args: &ScheduleArgs) -> Result<()> {
    let schedule = ScaleSchedule::auto(args.n, args.mu, ScheduleConstants { c: args.c, c1: args.c1 })?;
    write_or_print(
        &ScheduleOutput { k: schedule.k, eps: schedule.eps.clone(), block_sides: schedule.block_sides.clone() },
        None,
    )
}

#[derive(Serialize)]
struct VerifyOutput {
    pass: bool,
    suites: Vec<SuiteReport>,
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let kinds: Vec<SuiteKind> = if args.suite.is_empty() {
        SuiteKind::ALL.to_vec()
    } else {
        args.suite.iter().map(|s| SuiteKind::parse(s)).collect::<Result<_>>()?
    };
    let opts = VerifyOptions {
        scale: match args.scale {
            ScaleArg::Quick => VerifyScale::Quick,
            ScaleArg::Full => VerifyScale::Full,
        },
        seed: args.seed,
    };
    let mut suites = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let report = run_suite(kind, opts)?;
        for a in &report.assertions {
            let status = if a.pass { "ok " } else { "FAIL" };
            eprintln!("[{status}] {}: {} (observed {:.6e}, bound {:.6e})", report.suite, a.name, a.observed, a.bound);
        }
        suites.push(report);
    }
    let pass = suites.iter().all(|s| s.pass);
    write_or_print(&VerifyOutput { pass, suites }, args.out.as_ref())?;
    Ok(pass)
}

fn cmd_brute_min(args: &BruteMinArgs) -> Result<()> {
    let v = crate::verify::brute_force_min_subset(args.n)?;
    println!("{v:?}");
    Ok(())
}

fn configure_threads() {
    if let Ok(v) = std::env::var("TRAILSCAN_THREADS") {
        if let Ok(threads) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; anything else is a
            // usage error.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            let _ = std::io::stdout().flush();
            return code;
        }
    };
    configure_threads();
    let outcome = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args).map(|()| 0),
        Command::Risk(args) => cmd_risk(args).map(|()| 0),
        Command::Scan(args) => cmd_scan(args).map(|()| 0),
        Command::Schedule(args) => cmd_schedule(args).map(|()| 0),
        Command::Verify(args) => cmd_verify(args).map(|pass| if pass { 0 } else { 1 }),
        Command::BruteMin(args) => cmd_brute_min(args).map(|()| 0),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
