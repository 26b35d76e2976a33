//! The detectors: the simple quadratic test, the multi-scale recursive
//! test, the known-path oracle baseline, and empirical threshold
//! calibration.
//!
//! Analytic thresholds follow the closed forms (they carry the unpinned
//! constants of the asymptotic analysis, so they are fidelity exhibits);
//! the calibrated mode replaces them with a null quantile estimated by
//! Monte Carlo and is the default for risk experiments.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelView, Scenery};
use crate::lattice::{DirectedPath, LatticeSpec, SiteSet};
use crate::multiscale::{PartitionTree, ScaleSchedule, ScheduleConstants};
use crate::sim::{generate_scenery, stream, stream_rng, Hypothesis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    SimpleQuad,
    Multiscale,
    OraclePath,
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DetectorKind::SimpleQuad => "simple_quad",
            DetectorKind::Multiscale => "multiscale",
            DetectorKind::OraclePath => "oracle_path",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ThresholdMode {
    Analytic,
    Calibrated { alpha: f64, trials: usize, seed: u64 },
}

impl Default for ThresholdMode {
    fn default() -> Self {
        ThresholdMode::Calibrated { alpha: 0.05, trials: 2000, seed: 0x7261_696c }
    }
}

/// How the multiscale detector obtains its schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "plan")]
pub enum SchedulePlan {
    Auto {
        #[serde(default)]
        constants: ScheduleConstants,
    },
    Manual {
        block_sides: Vec<usize>,
    },
}

impl SchedulePlan {
    pub fn resolve(&self, n: usize, mu: f64) -> Result<ScaleSchedule> {
        match self {
            SchedulePlan::Auto { constants } => ScaleSchedule::auto(n, mu, *constants),
            SchedulePlan::Manual { block_sides } => {
                let s = ScaleSchedule::manual(block_sides.clone())?;
                if s.n() != n {
                    return Err(Error::Schedule(format!("manual schedule is for n = {}, spec has n = {n}", s.n())));
                }
                Ok(s)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub mu: f64,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
    #[serde(default)]
    pub schedule: Option<SchedulePlan>,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if let ThresholdMode::Calibrated { alpha, trials, .. } = self.threshold_mode {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
            }
            if trials < 100 {
                return Err(Error::Config(format!("calibration needs at least 100 trials, got {trials}")));
            }
        }
        Ok(())
    }
}

/// One detector decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    /// Set when the analytic threshold degenerates (n = 1 has no log
    /// scale to set one).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl TestOutcome {
    pub fn decide(statistic: f64, threshold: f64) -> Self {
        TestOutcome { statistic, threshold, reject: statistic > threshold, degenerate: false }
    }
}

enum DetectorState {
    SimpleQuad { view: KernelView },
    Multiscale { tree: Arc<PartitionTree> },
    Oracle { indices: Vec<usize> },
}

/// A detector with its statistic state and a resolved threshold.
pub struct Detector {
    kind: DetectorKind,
    state: DetectorState,
    threshold: f64,
    degenerate: bool,
}

impl Detector {
    /// Builds the detector over a prebuilt site set. The oracle kind
    /// requires its reference path.
    pub fn build(
        config: &DetectorConfig,
        spec: &LatticeSpec,
        sites: Arc<SiteSet>,
        oracle_path: Option<&DirectedPath>,
    ) -> Result<Detector> {
        config.validate()?;
        let state = match config.kind {
            DetectorKind::SimpleQuad => DetectorState::SimpleQuad { view: KernelView::new(Arc::clone(&sites)) },
            DetectorKind::Multiscale => {
                let plan = config.schedule.clone().unwrap_or(SchedulePlan::Auto {
                    constants: ScheduleConstants::default(),
                });
                let schedule = plan.resolve(spec.n, config.mu)?;
                let tree = PartitionTree::build_on(spec, &schedule, Arc::clone(&sites))?;
                DetectorState::Multiscale { tree: Arc::new(tree) }
            }
            DetectorKind::OraclePath => {
                let path = oracle_path
                    .ok_or_else(|| Error::Config("the oracle detector needs a reference path".into()))?;
                let indices = path
                    .sites()
                    .map(|s| {
                        sites
                            .index_of(s)
                            .ok_or_else(|| Error::Config(format!("oracle path leaves the region at {s:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                DetectorState::Oracle { indices }
            }
        };
        let mut detector = Detector { kind: config.kind, state, threshold: 0.0, degenerate: false };
        match config.threshold_mode {
            ThresholdMode::Analytic => {
                let (thr, degenerate) = detector.analytic_threshold(spec, config.mu)?;
                detector.threshold = thr;
                detector.degenerate = degenerate;
            }
            ThresholdMode::Calibrated { alpha, trials, seed } => {
                let thr = calibrate_threshold(|x| detector.statistic(x), &sites, alpha, trials, seed)?;
                detector.threshold = thr;
            }
        }
        Ok(detector)
    }

    /// The closed-form threshold this detector kind uses at signal
    /// strength `mu`, plus a degeneracy flag.
    pub fn analytic_threshold(&self, spec: &LatticeSpec, mu: f64) -> Result<(f64, bool)> {
        let n = spec.n;
        match &self.state {
            DetectorState::SimpleQuad { .. } => {
                if n == 1 {
                    return Ok((0.0, true));
                }
                Ok((mu * mu * n as f64 * (n as f64).ln() / 2.0, false))
            }
            DetectorState::Multiscale { tree } => {
                // Half the zigzag reference signal; at depth 0 the signal
                // is path-free, so the reference choice is immaterial.
                let reference = DirectedPath::zigzag(spec);
                let nu = tree.signal_recursion(&reference, mu)?.root().nu;
                Ok((nu / 2.0, nu == 0.0))
            }
            DetectorState::Oracle { .. } => Ok((mu * n as f64 / 2.0, false)),
        }
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Replaces the threshold (used for degenerate accept/reject baselines
    /// and threshold sweeps).
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn tree(&self) -> Option<&Arc<PartitionTree>> {
        match &self.state {
            DetectorState::Multiscale { tree } => Some(tree),
            _ => None,
        }
    }

    pub fn statistic(&self, scenery: &Scenery) -> Result<f64> {
        match &self.state {
            DetectorState::SimpleQuad { view } => view.quadratic_form(scenery, false),
            DetectorState::Multiscale { tree } => tree.recursive_statistic(scenery),
            DetectorState::Oracle { indices } => {
                Ok(indices.iter().map(|&i| scenery.values()[i]).sum())
            }
        }
    }

    pub fn run(&self, scenery: &Scenery) -> Result<TestOutcome> {
        let statistic = self.statistic(scenery)?;
        Ok(TestOutcome {
            statistic,
            threshold: self.threshold,
            reject: statistic > self.threshold,
            degenerate: self.degenerate,
        })
    }
}

/// Simple quadratic test with the analytic threshold
/// `mu^2 n ln(n) / 2`; the statistic is the unnormalized form.
pub fn simple_quadratic_test(scenery: &Scenery, spec: &LatticeSpec, mu: f64) -> Result<TestOutcome> {
    let sites = Arc::new(SiteSet::from_spec(spec)?);
    let view = KernelView::new(sites);
    let statistic = view.quadratic_form(scenery, false)?;
    let degenerate = spec.n == 1;
    let threshold = if degenerate { 0.0 } else { mu * mu * spec.n as f64 * (spec.n as f64).ln() / 2.0 };
    Ok(TestOutcome { statistic, threshold, reject: statistic > threshold, degenerate })
}

/// Multiscale test: recursive statistic against half the zigzag
/// reference signal (analytic) or a calibrated null quantile.
pub fn multiscale_test(scenery: &Scenery, spec: &LatticeSpec, config: &DetectorConfig) -> Result<TestOutcome> {
    let sites = Arc::new(SiteSet::from_spec(spec)?);
    let detector = Detector::build(config, spec, sites, None)?;
    detector.run(scenery)
}

/// Known-path baseline: the path sum against the midpoint `mu n / 2` of
/// the null and signal means.
pub fn oracle_path_test(scenery: &Scenery, sites: &SiteSet, path: &DirectedPath, mu: f64) -> Result<TestOutcome> {
    if scenery.len() != sites.len() {
        return Err(Error::SceneryMismatch { got: scenery.len(), want: sites.len() });
    }
    let mut statistic = 0.0;
    for s in path.sites() {
        let ix = sites
            .index_of(s)
            .ok_or_else(|| Error::Config(format!("path leaves the region at {s:?}")))?;
        statistic += scenery.values()[ix];
    }
    let threshold = mu * path.len() as f64 / 2.0;
    Ok(TestOutcome::decide(statistic, threshold))
}

/// The `ceil((1-alpha) * trials)`-th order statistic of the detector
/// statistic over independent null sceneries; deterministic given the
/// seed (trial streams are derived, so the trial loop may run in any
/// order).
pub fn calibrate_threshold<F>(statistic: F, sites: &SiteSet, alpha: f64, trials: usize, seed: u64) -> Result<f64>
where
    F: Fn(&Scenery) -> Result<f64> + Sync,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if trials < 100 {
        return Err(Error::Config(format!("calibration needs at least 100 trials, got {trials}")));
    }
    let mut stats = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, stream::CALIBRATION | t as u64);
            let scenery = generate_scenery(sites, Hypothesis::Null, &mut rng);
            statistic(&scenery)
        })
        .collect::<Result<Vec<f64>>>()?;
    stats.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * trials as f64).ceil() as usize;
    Ok(stats[rank.clamp(1, trials) - 1])
}
