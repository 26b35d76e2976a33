//! Monte Carlo experiment engine: scenery generation under both
//! hypotheses, minimax-risk estimation over path families, bisection
//! threshold scans, and CSV/JSON reporting.
//!
//! Every trial draws from a stream derived from the experiment's base
//! seed, so identical configs reproduce reports bit for bit. Signal
//! trials share their noise across the whole mu grid (common random
//! numbers), which keeps the estimated risk monotone diagnostics stable.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{Detector, DetectorConfig, DetectorKind, SchedulePlan, ThresholdMode};
use crate::error::{Error, Result};
use crate::lattice::{
    enumerate_paths_with_budget, sample_path, Aperture, DirectedPath, LatticeSpec, PathKind, SiteSet,
};
use crate::sim::{stream, stream_rng};

pub use crate::sim::{generate_scenery, generate_scenery_with_noise, Hypothesis};

/// Exhaustive families are only usable at tiny n.
pub const EXHAUSTIVE_FAMILY_MAX_N: usize = 14;

/// The alternative's path family over which the type II supremum is
/// approximated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum PathFamilySpec {
    Zigzag,
    MaxDrift,
    UniformReflected { count: usize },
    Exhaustive,
}

impl PathFamilySpec {
    /// Materializes the family. Sampled members draw from a dedicated
    /// stream of `base_seed`.
    pub fn resolve(&self, spec: &LatticeSpec, base_seed: u64) -> Result<Vec<(String, DirectedPath)>> {
        match self {
            PathFamilySpec::Zigzag => Ok(vec![("zigzag".into(), DirectedPath::zigzag(spec))]),
            PathFamilySpec::MaxDrift => {
                let mut rng = stream_rng(base_seed, stream::PATH_FAMILY);
                Ok(vec![("max_drift".into(), sample_path(spec, PathKind::MaxDrift, &mut rng))])
            }
            PathFamilySpec::UniformReflected { count } => {
                if *count == 0 {
                    return Err(Error::Config("uniform_reflected family needs count >= 1".into()));
                }
                Ok((0..*count)
                    .map(|i| {
                        let mut rng = stream_rng(base_seed, stream::PATH_FAMILY | (i as u64 + 1));
                        (format!("uniform_reflected#{i}"), sample_path(spec, PathKind::UniformReflected, &mut rng))
                    })
                    .collect())
            }
            PathFamilySpec::Exhaustive => {
                if spec.n > EXHAUSTIVE_FAMILY_MAX_N {
                    return Err(Error::Config(format!(
                        "exhaustive family is limited to n <= {EXHAUSTIVE_FAMILY_MAX_N}, got n = {}",
                        spec.n
                    )));
                }
                Ok(enumerate_paths_with_budget(spec, 1 << 20)?
                    .into_iter()
                    .enumerate()
                    .map(|(i, p)| (format!("exhaustive#{i}"), p))
                    .collect())
            }
        }
    }
}

/// Detector settings as they appear in experiment configs; the signal
/// strength comes from the experiment's mu grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectorSettings {
    pub kind: DetectorKind,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
    #[serde(default)]
    pub schedule: Option<SchedulePlan>,
}

impl DetectorSettings {
    fn config_at(&self, mu: f64) -> DetectorConfig {
        DetectorConfig {
            kind: self.kind,
            mu,
            threshold_mode: self.threshold_mode,
            schedule: self.schedule.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: PathBuf,
    pub format: OutputFormat,
}

/// A full experiment: geometry, detector, signal grid, family, and
/// trial accounting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    #[serde(default)]
    pub a: Aperture,
    pub detector: DetectorSettings,
    pub mu_grid: Vec<f64>,
    pub path_family: PathFamilySpec,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.mu_grid.is_empty() {
            return Err(Error::Config("mu_grid must be nonempty".into()));
        }
        if self.mu_grid.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Config("mu_grid entries must be strictly positive".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.n, self.a)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Estimated risk of one detector at one signal strength.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RiskReport {
    pub type1: f64,
    pub type2_by_path: BTreeMap<String, f64>,
    /// Type I plus the family maximum of type II: a family-max lower
    /// bound of the true minimax risk.
    pub gamma: f64,
    /// Conservative binomial 95% half-width, `1.96 / (2 sqrt(trials))`.
    pub ci_halfwidth: f64,
    /// Wall-clock seconds; excluded from serialized outputs so reruns
    /// stay byte-identical.
    #[serde(skip)]
    pub runtime_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RiskEntry {
    pub mu: f64,
    pub report: RiskReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RiskGrid {
    pub detector: DetectorKind,
    pub n: usize,
    pub a: Aperture,
    pub trials: usize,
    pub base_seed: u64,
    pub entries: Vec<RiskEntry>,
}

/// Reusable risk-estimation state: site set, family, detector, and the
/// cached null statistics (the statistic itself never depends on mu, so
/// null samples are shared across the whole grid).
pub struct RiskSession {
    spec: LatticeSpec,
    sites: Arc<SiteSet>,
    family: Vec<(String, DirectedPath)>,
    settings: DetectorSettings,
    trials: usize,
    base_seed: u64,
    detector: Detector,
    null_stats: Vec<f64>,
    forced_threshold: Option<f64>,
}

impl RiskSession {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.spec()?;
        let sites = Arc::new(SiteSet::from_spec(&spec)?);
        let family = config.path_family.resolve(&spec, config.base_seed)?;
        if family.is_empty() {
            return Err(Error::Config("path family is empty".into()));
        }
        // The detector state is mu-free; build it once at the first grid
        // point. The oracle keys its statistic to the family's first
        // path (its null law is the same for every path).
        let detector_mu = config.mu_grid[0];
        let detector = Detector::build(
            &config.detector.config_at(detector_mu),
            &spec,
            Arc::clone(&sites),
            Some(&family[0].1),
        )?;
        let mut session = RiskSession {
            spec,
            sites,
            family,
            settings: config.detector.clone(),
            trials: config.trials,
            base_seed: config.base_seed,
            detector,
            null_stats: Vec::new(),
            forced_threshold: None,
        };
        session.null_stats = session.collect_stats(None)?;
        Ok(session)
    }

    pub fn family(&self) -> &[(String, DirectedPath)] {
        &self.family
    }

    pub fn sites(&self) -> &Arc<SiteSet> {
        &self.sites
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    /// Overrides the decision threshold (degenerate baselines, sweeps).
    pub fn override_threshold(&mut self, threshold: f64) {
        self.forced_threshold = Some(threshold);
    }

    /// Statistics over `trials` sceneries; `path` None means null
    /// sceneries, otherwise signal sceneries with the given strength.
    /// Signal noise streams depend on the path index and trial only, so
    /// the grid shares noise across mu (common random numbers).
    fn collect_stats(&self, path: Option<(usize, f64)>) -> Result<Vec<f64>> {
        (0..self.trials)
            .into_par_iter()
            .map(|t| {
                let scenery = match path {
                    None => {
                        let mut rng = stream_rng(self.base_seed, stream::NULL_EVAL | t as u64);
                        generate_scenery(&self.sites, Hypothesis::Null, &mut rng)
                    }
                    Some((p, mu)) => {
                        let mut rng = stream_rng(self.base_seed, stream::signal(p, t));
                        generate_scenery(
                            &self.sites,
                            Hypothesis::Signal { path: &self.family[p].1, mu },
                            &mut rng,
                        )
                    }
                };
                self.detector.statistic(&scenery)
            })
            .collect()
    }

    fn threshold_at(&self, mu: f64) -> Result<f64> {
        if let Some(thr) = self.forced_threshold {
            return Ok(thr);
        }
        match self.settings.threshold_mode {
            // Calibrated thresholds never depend on mu.
            ThresholdMode::Calibrated { .. } => Ok(self.detector.threshold()),
            ThresholdMode::Analytic => Ok(self.detector.analytic_threshold(&self.spec, mu)?.0),
        }
    }

    /// Full risk estimate at one signal strength.
    pub fn risk_at(&self, mu: f64) -> Result<RiskReport> {
        let start = Instant::now();
        let threshold = self.threshold_at(mu)?;
        let type1 =
            self.null_stats.iter().filter(|&&s| s > threshold).count() as f64 / self.trials as f64;
        let mut type2_by_path = BTreeMap::new();
        let mut worst: f64 = 0.0;
        for (p, (name, _)) in self.family.iter().enumerate() {
            let stats = self.collect_stats(Some((p, mu)))?;
            let type2 = stats.iter().filter(|&&s| s <= threshold).count() as f64 / self.trials as f64;
            worst = worst.max(type2);
            type2_by_path.insert(name.clone(), type2);
        }
        Ok(RiskReport {
            type1,
            type2_by_path,
            gamma: type1 + worst,
            ci_halfwidth: 1.96 * 0.5 / (self.trials as f64).sqrt(),
            runtime_s: start.elapsed().as_secs_f64(),
        })
    }

    pub fn gamma_at(&self, mu: f64) -> Result<f64> {
        Ok(self.risk_at(mu)?.gamma)
    }
}

/// Risk over the whole mu grid of a config.
pub fn estimate_risk(config: &ExperimentConfig) -> Result<RiskGrid> {
    let session = RiskSession::new(config)?;
    let mut entries = Vec::with_capacity(config.mu_grid.len());
    for &mu in &config.mu_grid {
        entries.push(RiskEntry { mu, report: session.risk_at(mu)? });
    }
    Ok(RiskGrid {
        detector: config.detector.kind,
        n: config.n,
        a: config.a,
        trials: config.trials,
        base_seed: config.base_seed,
        entries,
    })
}

/// Result of a bisection scan for the detection threshold `mu*`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanResult {
    pub mu_star: f64,
    pub gamma_at_star: f64,
    pub target_gamma: f64,
    pub bracket: (f64, f64),
    pub evaluations: Vec<(f64, f64)>,
}

/// Bisection on mu (at most 12 steps) toward the target risk. Requires
/// an honest bracket: `gamma(mu_lo) > target >= gamma(mu_hi)`. Stops
/// early once the estimate lands within 0.05 of the target.
pub fn threshold_scan(
    config: &ExperimentConfig,
    target_gamma: f64,
    mu_lo: f64,
    mu_hi: f64,
) -> Result<ScanResult> {
    if !(mu_lo > 0.0 && mu_hi > mu_lo) {
        return Err(Error::Bracket(format!("need 0 < mu_lo < mu_hi, got [{mu_lo}, {mu_hi}]")));
    }
    let mut config = config.clone();
    config.mu_grid = vec![mu_lo];
    let session = RiskSession::new(&config)?;
    let mut evaluations = Vec::new();
    let g_lo = session.gamma_at(mu_lo)?;
    evaluations.push((mu_lo, g_lo));
    let g_hi = session.gamma_at(mu_hi)?;
    evaluations.push((mu_hi, g_hi));
    if !(g_lo > target_gamma && target_gamma >= g_hi) {
        return Err(Error::Bracket(format!(
            "gamma({mu_lo}) = {g_lo:.4} and gamma({mu_hi}) = {g_hi:.4} do not bracket target {target_gamma}"
        )));
    }
    let (mut lo, mut hi) = (mu_lo, mu_hi);
    let mut mu_star = hi;
    let mut gamma_star = g_hi;
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        let g = session.gamma_at(mid)?;
        evaluations.push((mid, g));
        if g > target_gamma {
            lo = mid;
        } else {
            hi = mid;
            mu_star = mid;
            gamma_star = g;
        }
        if (g - target_gamma).abs() <= 0.05 {
            mu_star = mid;
            gamma_star = g;
            break;
        }
    }
    Ok(ScanResult { mu_star, gamma_at_star: gamma_star, target_gamma, bracket: (lo, hi), evaluations })
}

/// CSV schema: one row per (mu, path).
pub fn risk_grid_to_csv(grid: &RiskGrid) -> String {
    let mut out = String::from("detector,n,a,mu,path_id,type1,type2,gamma,ci,trials,seed\n");
    for entry in &grid.entries {
        for (path_id, type2) in &entry.report.type2_by_path {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                grid.detector,
                grid.n,
                grid.a,
                entry.mu,
                path_id,
                entry.report.type1,
                type2,
                entry.report.gamma,
                entry.report.ci_halfwidth,
                grid.trials,
                grid.base_seed
            ));
        }
    }
    out
}

pub fn write_risk_grid(grid: &RiskGrid, output: &OutputSpec) -> Result<()> {
    let mut file = std::fs::File::create(&output.path)?;
    match output.format {
        OutputFormat::Csv => file.write_all(risk_grid_to_csv(grid).as_bytes())?,
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut file, grid)?;
            file.write_all(b"\n")?;
        }
    }
    Ok(())
}
