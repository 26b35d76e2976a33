//! Numerical verification of the supporting estimates: dense oracles for
//! the matrix-free kernels, the six-ratio stability table, the
//! subset-minimization bound by exhaustion, Gaussian-approximation
//! distances, quadratic-form moment bounds, and the signal/noise
//! decomposition of the planted statistic.
//!
//! Everything here is deliberately independent of the sliding-window
//! evaluators it checks: oracles iterate over site pairs directly.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernel::{entry, path_energy, KernelView, Neumaier, Scenery};
use crate::lattice::{Aperture, DirectedPath, LatticeSpec, Site, SiteSet};
use crate::multiscale::{PartitionTree, ScaleSchedule};
use crate::sim::{generate_scenery, generate_scenery_with_noise, stream, stream_rng, Hypothesis};

/// Largest site set the dense oracle will chew through.
pub const DENSE_ORACLE_MAX_SITES: usize = 5000;

/// Largest `n` for the exhaustive subset search.
pub const BRUTE_FORCE_MAX_N: usize = 20;

/// Direct double loop over site pairs; the anti-drift oracle for the
/// sliding-window quadratic form.
pub fn dense_oracle_quadratic(sites: &SiteSet, x: &Scenery) -> Result<f64> {
    if sites.len() > DENSE_ORACLE_MAX_SITES {
        return Err(Error::SizeGuard(format!(
            "dense oracle is capped at {DENSE_ORACLE_MAX_SITES} sites, got {}",
            sites.len()
        )));
    }
    if x.len() != sites.len() {
        return Err(Error::SceneryMismatch { got: x.len(), want: sites.len() });
    }
    let pts: Vec<Site> = sites.iter().collect();
    let mut acc = Neumaier::new();
    for (p, &sp) in pts.iter().enumerate() {
        for (q, &sq) in pts.iter().enumerate() {
            if p != q {
                acc.add(entry(sp, sq) * x.values()[p] * x.values()[q]);
            }
        }
    }
    Ok(acc.total())
}

/// Dense companion for the Frobenius norm.
pub fn dense_oracle_frobenius_sq(sites: &SiteSet) -> Result<f64> {
    if sites.len() > DENSE_ORACLE_MAX_SITES {
        return Err(Error::SizeGuard(format!(
            "dense oracle is capped at {DENSE_ORACLE_MAX_SITES} sites, got {}",
            sites.len()
        )));
    }
    let pts: Vec<Site> = sites.iter().collect();
    let mut acc = Neumaier::new();
    for &sp in &pts {
        for &sq in &pts {
            let e = entry(sp, sq);
            acc.add(e * e);
        }
    }
    Ok(acc.total())
}

/// `||A^2||_F^2` without materializing anything: for each block (i, j)
/// of `A^2` and intermediate column k, the entry at heights (u, v) gains
/// `1/(|i-k||j-k|)` times the count of column-k heights within `|i-k|`
/// of `u` and `|j-k|` of `v`. For fixed (k, u) that count is a
/// rise/plateau/fall ramp in `v`, added in O(1) through difference
/// arrays and reconstructed once per row.
pub fn a2_frobenius_sq(sites: &SiteSet) -> f64 {
    let cols = sites.columns();
    let nc = cols.len();
    let blocks: Vec<f64> = (0..nc * nc)
        .into_par_iter()
        .filter(|idx| idx / nc <= idx % nc)
        .map(|idx| {
            let (i, j) = (idx / nc, idx % nc);
            let weight = if i == j { 1.0 } else { 2.0 };
            weight * a2_block_sq(sites, i, j)
        })
        .collect();
    let mut total = Neumaier::new();
    for b in blocks {
        total.add(b);
    }
    total.total()
}

fn a2_block_sq(sites: &SiteSet, i: usize, j: usize) -> f64 {
    let cols = sites.columns();
    let (ci, cj) = (&cols[i], &cols[j]);
    let step = ci.step;
    let lj = cj.len();
    let mut d_const = vec![0.0f64; lj + 1];
    let mut d_slope = vec![0.0f64; lj + 1];
    let mut block_sq = 0.0;
    for t in 0..ci.len() {
        let u = ci.lo + step * t as i64;
        d_const.fill(0.0);
        d_slope.fill(0.0);
        for (kk, ck) in cols.iter().enumerate() {
            if kk == i || kk == j {
                continue;
            }
            let a = (ci.x1 - ck.x1).abs();
            let b = (cj.x1 - ck.x1).abs();
            let w = 1.0 / (a * b) as f64;
            // Partner window of u inside column k.
            let p_cap = (u + a).min(ck.hi);
            let q_cap = (u - a).max(ck.lo);
            if p_cap < q_cap {
                continue;
            }
            // Count of column-k heights in [max(Q, v-b), min(P, v+b)]:
            // rises on [Q-b, m1), holds on [m1, m2], falls on (m2, P+b].
            let m1 = (p_cap - b).min(q_cap + b);
            let m2 = (p_cap - b).max(q_cap + b);
            let plateau = ((2 * b).min(p_cap - q_cap) / step + 1) as f64;
            // Rising ramp N(s) = s + c_r.
            let c_r = ((cj.lo + b - q_cap) / step + 1) as f64;
            add_ramp(&mut d_const, &mut d_slope, cj, q_cap - b, m1 - step, w * c_r, w);
            // Plateau.
            add_ramp(&mut d_const, &mut d_slope, cj, m1, m2, w * plateau, 0.0);
            // Falling ramp N(s) = -s + c_f.
            let c_f = ((p_cap + b - cj.lo) / step + 1) as f64;
            add_ramp(&mut d_const, &mut d_slope, cj, m2 + step, p_cap + b, w * c_f, -w);
        }
        let mut acc_c = 0.0;
        let mut acc_s = 0.0;
        for s in 0..lj {
            acc_c += d_const[s];
            acc_s += d_slope[s];
            let m = acc_c + acc_s * s as f64;
            block_sq += m * m;
        }
    }
    block_sq
}

/// Adds `aconst + slope * s` over the height range `[h_lo, h_hi]`
/// (inclusive, on the column grid) into the difference arrays.
#[inline]
fn add_ramp(
    d_const: &mut [f64],
    d_slope: &mut [f64],
    cj: &crate::lattice::Column,
    h_lo: i64,
    h_hi: i64,
    aconst: f64,
    slope: f64,
) {
    if h_hi < h_lo {
        return;
    }
    let lj = (d_const.len() - 1) as i64;
    let s0 = ((h_lo - cj.lo) / cj.step).clamp(0, lj);
    let s1 = (((h_hi - cj.lo) / cj.step) + 1).clamp(0, lj);
    if s0 >= s1 {
        return;
    }
    d_const[s0 as usize] += aconst;
    d_const[s1 as usize] -= aconst;
    d_slope[s0 as usize] += slope;
    d_slope[s1 as usize] -= slope;
}

/// Caps on the expensive ratios; entries beyond a cap are left absent.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RatioCaps {
    pub r45_max_n: usize,
    pub r6_max_n: usize,
}

impl Default for RatioCaps {
    fn default() -> Self {
        RatioCaps { r45_max_n: 512, r6_max_n: 256 }
    }
}

/// One row of the six-ratio table. Ratios normalize the kernel
/// functionals by their expected growth:
/// r1 = ||A||_F^2 / (n^2 ln n),      r2 = ||A|| / n,
/// r3 = path_energy / (n ln n),      r4 = 1_p^T A^2 1_p / n^2,
/// r5 = 1_p^T A Diag(1_p) A 1_p / (n ln^2 n),
/// r6 = ||A^2||_F^2 / (n^4 ln n).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioRow {
    pub n: usize,
    pub r: [Option<f64>; 6],
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioTable {
    pub a: Aperture,
    pub rows: Vec<RatioRow>,
}

impl RatioTable {
    /// max/min of one ratio over the rows where it was computed.
    pub fn spread(&self, k: usize) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.r[k]).collect();
        if vals.is_empty() {
            return None;
        }
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        Some(max / min)
    }
}

pub fn lemma_a_table(ns: &[usize], a: Aperture, caps: RatioCaps, seed: u64) -> Result<RatioTable> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        if n < 2 {
            rows.push(RatioRow { n, r: [None; 6], degenerate: true });
            continue;
        }
        let spec = LatticeSpec::new(n, a)?;
        let sites = Arc::new(SiteSet::from_spec(&spec)?);
        let view = KernelView::new(Arc::clone(&sites));
        let nf = n as f64;
        let ln_n = nf.ln();
        let mut r: [Option<f64>; 6] = [None; 6];
        r[0] = Some(view.frobenius_norm_sq() / (nf * nf * ln_n));
        let mut rng = stream_rng(seed, stream::GENERIC | n as u64);
        r[1] = Some(view.spectral_norm_estimate(300, &mut rng) / nf);
        r[2] = Some(path_energy(n) / (nf * ln_n));
        if n <= caps.r45_max_n {
            let zig = DirectedPath::zigzag(&spec);
            let ind = Scenery::path_indicator(&sites, &zig, 1.0);
            let y = view.matvec(&ind, false)?;
            let quad2: f64 = y.values().iter().map(|v| v * v).sum();
            r[3] = Some(quad2 / (nf * nf));
            let on_path: f64 = zig
                .sites()
                .map(|s| {
                    let v = y.values()[sites.index_of(s).expect("path site in region")];
                    v * v
                })
                .sum();
            r[4] = Some(on_path / (nf * ln_n * ln_n));
        }
        if n <= caps.r6_max_n {
            r[5] = Some(a2_frobenius_sq(&sites) / (nf.powi(4) * ln_n));
        }
        rows.push(RatioRow { n, r, degenerate: false });
    }
    Ok(RatioTable { a, rows })
}

/// `min over I of max(S in {I, complement}) sum_{i != j in S} 1/|i-j|`
/// by exhaustion over all 2^n subsets (ordered pairs).
pub fn brute_force_min_subset(n: usize) -> Result<f64> {
    if n == 0 || n > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeGuard(format!("subset exhaustion handles 1 <= n <= {BRUTE_FORCE_MAX_N}, got {n}")));
    }
    let f = subset_pair_sums(n);
    let full = (1usize << n) - 1;
    let mut best = f64::INFINITY;
    for mask in 0..=full {
        let worst = f[mask].max(f[full ^ mask]);
        if worst < best {
            best = worst;
        }
    }
    Ok(best)
}

/// `B_n(alpha)` with `|I| = size` exactly: the minimum ordered-pair sum
/// over all subsets of that size.
pub fn restricted_min_subset(n: usize, size: usize) -> Result<f64> {
    if n == 0 || n > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeGuard(format!("subset exhaustion handles 1 <= n <= {BRUTE_FORCE_MAX_N}, got {n}")));
    }
    if size > n {
        return Err(Error::Config(format!("subset size {size} exceeds n = {n}")));
    }
    let f = subset_pair_sums(n);
    let mut best = f64::INFINITY;
    for (mask, &v) in f.iter().enumerate() {
        if mask.count_ones() as usize == size && v < best {
            best = v;
        }
    }
    Ok(best)
}

/// `f[mask] = sum over ordered pairs (i != j) in mask of 1/|i-j|`,
/// built by peeling the lowest set bit.
fn subset_pair_sums(n: usize) -> Vec<f64> {
    let mut f = vec![0.0f64; 1 << n];
    for mask in 1usize..(1 << n) {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        let mut add = 0.0;
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            add += 2.0 / (j - low) as f64;
            bits &= bits - 1;
        }
        f[mask] = f[rest] + add;
    }
    f
}

/// Kolmogorov distance between the empirical law of `statistic` over
/// null sceneries and the standard normal.
pub fn ks_null_distance<F>(sites: &SiteSet, statistic: F, trials: usize, seed: u64) -> Result<f64>
where
    F: Fn(&Scenery) -> Result<f64> + Sync,
{
    if trials == 0 {
        return Err(Error::Config("ks_null_distance needs at least one trial".into()));
    }
    let mut stats = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, stream::NULL_EVAL | t as u64);
            statistic(&generate_scenery(sites, Hypothesis::Null, &mut rng))
        })
        .collect::<Result<Vec<f64>>>()?;
    stats.sort_by(f64::total_cmp);
    Ok(ks_distance_to_normal(&stats))
}

/// Sup distance of a sorted sample's ECDF to the standard normal CDF.
pub fn ks_distance_to_normal(sorted: &[f64]) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = normal.cdf(x);
        d = d.max(phi - i as f64 / n).max((i + 1) as f64 / n - phi);
    }
    d
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MomentCheck {
    pub s: u32,
    pub empirical: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Monte Carlo `E|Q|^s` for the normalized null quadratic form against
/// the closed-form moment bound
/// `2^(5s/2) Gamma(s/2 + 1/2) Gamma(s + 1/2)^(1/2) max E[X^(2s)]`
/// with Gaussian inputs (`E X^4 = 3`, `E X^6 = 15`).
pub fn whittle_moment_check(
    s: u32,
    view: &KernelView,
    trials: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<MomentCheck> {
    if !(s == 2 || s == 3) {
        return Err(Error::Config(format!("moment order must be 2 or 3, got {s}")));
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    // Gamma at half-integers: G(1.5), G(2), G(2.5), G(3.5).
    let (g_half, g_full, x_moment) = match s {
        2 => (sqrt_pi / 2.0, 3.0 * sqrt_pi / 4.0, 3.0),
        _ => (1.0, 15.0 * sqrt_pi / 8.0, 15.0),
    };
    let bound = 2f64.powf(2.5 * s as f64) * g_half * g_full.sqrt() * x_moment;
    let sums = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, stream::GENERIC | t as u64);
            let x = generate_scenery_with_noise(view.sites(), Hypothesis::Null, noise_sd, &mut rng);
            view.quadratic_form(&x, true).map(|q| q.abs().powi(s as i32))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut acc = Neumaier::new();
    for v in sums {
        acc.add(v);
    }
    let empirical = acc.total() / trials as f64;
    Ok(MomentCheck { s, empirical, bound, pass: empirical <= bound })
}

/// Sample statistics of the planted-statistic decomposition
/// `Q = W + U + nu` with shared base noise across the two hypotheses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub n: usize,
    pub mu: f64,
    pub trials: usize,
    pub nu: f64,
    pub mean_q_minus_nu: f64,
    pub mean_u: f64,
    /// Standard error of the mean of U.
    pub se_u: f64,
    pub corr_w_u: f64,
    pub var_u: f64,
    /// `var(U) ln n / mu^2`; the recorded empirical constant.
    pub u_var_constant: f64,
    /// Empirical `E|W|^3` (the block statistic's third moment).
    pub beta3: f64,
    pub ks_null: f64,
}

pub fn decomposition_check(
    spec: &LatticeSpec,
    path: &DirectedPath,
    mu: f64,
    trials: usize,
    seed: u64,
) -> Result<DecompositionReport> {
    if trials < 2 {
        return Err(Error::Config("decomposition_check needs at least two trials".into()));
    }
    let sites = Arc::new(SiteSet::from_spec(spec)?);
    let view = KernelView::new(Arc::clone(&sites));
    let tree = PartitionTree::build_on(spec, &ScaleSchedule::manual(vec![spec.n])?, Arc::clone(&sites))?;
    let nu = tree.signal_recursion(path, mu)?.root().nu;
    let pairs = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, stream::GENERIC | t as u64);
            let noise = generate_scenery(&sites, Hypothesis::Null, &mut rng);
            let w = view.quadratic_form(&noise, true)?;
            let mut signal = noise;
            signal.plant(&sites, path, mu);
            let q = view.quadratic_form(&signal, true)?;
            Ok((w, q))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let ws: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let us: Vec<f64> = pairs.iter().map(|p| p.1 - p.0 - nu).collect();
    let qs_minus_nu_mean = mean(&pairs.iter().map(|p| p.1 - nu).collect::<Vec<_>>());
    let mean_u = mean(&us);
    let var_u = variance(&us, mean_u);
    let mut sorted_w = ws.clone();
    sorted_w.sort_by(f64::total_cmp);
    Ok(DecompositionReport {
        n: spec.n,
        mu,
        trials,
        nu,
        mean_q_minus_nu: qs_minus_nu_mean,
        mean_u,
        se_u: (var_u / trials as f64).sqrt(),
        corr_w_u: correlation(&ws, &us),
        var_u,
        u_var_constant: if mu > 0.0 { var_u * (spec.n as f64).ln() / (mu * mu) } else { 0.0 },
        beta3: mean(&ws.iter().map(|w| w.abs().powi(3)).collect::<Vec<_>>()),
        ks_null: ks_distance_to_normal(&sorted_w),
    })
}

fn mean(v: &[f64]) -> f64 {
    let mut acc = Neumaier::new();
    for &x in v {
        acc.add(x);
    }
    acc.total() / v.len() as f64
}

fn variance(v: &[f64], m: f64) -> f64 {
    let mut acc = Neumaier::new();
    for &x in v {
        acc.add((x - m) * (x - m));
    }
    acc.total() / (v.len() - 1) as f64
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = Neumaier::new();
    for (&x, &y) in a.iter().zip(b) {
        cov.add((x - ma) * (y - mb));
    }
    let denom = (variance(a, ma) * variance(b, mb)).sqrt() * (a.len() - 1) as f64;
    if denom > 0.0 {
        cov.total() / denom
    } else {
        0.0
    }
}

/// The depth-0 signal-to-scale ratio `nu / (mu^2 sqrt(ln n))`, which is
/// the same for every path.
pub fn nu_ratio_depth0(n: usize, a: Aperture) -> Result<f64> {
    let spec = LatticeSpec::new(n, a)?;
    let view = KernelView::from_sites(SiteSet::from_spec(&spec)?);
    Ok(path_energy(n) / (view.normalization() * (n as f64).ln().sqrt()))
}

/// Per-path signal diagnostics for one (possibly multi-level) schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NuBoundsReport {
    pub n: usize,
    pub block_sides: Vec<usize>,
    pub mu: f64,
    /// Per path: root signal, root-good flag, and the implied constant
    /// of the good-block lower form.
    pub per_path: Vec<NuPathRecord>,
    /// Smallest implied constant over good-rooted paths.
    pub c_min: f64,
    /// Homogeneity check: nu(mu) / nu(mu/2); 4 at depth 0, 16 at depth 1.
    pub halving_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NuPathRecord {
    pub path_id: String,
    pub nu_root: f64,
    pub root_good: bool,
    pub implied_c: Option<f64>,
}

/// Evaluates the signal recursion for a family of paths under one
/// schedule and records the implied constants of the good-block lower
/// form `c^(2^(K+1)-1) mu^(2^(K+1)) prod_l ln(n_l/n_(l+1))^(2^(l-1))`.
pub fn nu_bounds_check(
    spec: &LatticeSpec,
    schedule: &ScaleSchedule,
    family: &[(String, DirectedPath)],
    mu: f64,
) -> Result<NuBoundsReport> {
    if family.is_empty() {
        return Err(Error::Config("nu_bounds_check needs a nonempty family".into()));
    }
    let tree = PartitionTree::build(spec, schedule)?;
    let depth = tree.depth() as i32;
    let shape = lower_form_shape(schedule);
    let mut per_path = Vec::with_capacity(family.len());
    let mut c_min = f64::INFINITY;
    for (id, path) in family {
        let signals = tree.signal_recursion(path, mu)?;
        let root = signals.root();
        let implied_c = if root.good && root.nu > 0.0 {
            // nu >= c^(2^(K+1)-1) mu^(2^(K+1)) * shape, solved for c.
            let power = 2f64.powi(depth + 1);
            let c = (root.nu / (mu.powf(power) * shape)).powf(1.0 / (power - 1.0));
            c_min = c_min.min(c);
            Some(c)
        } else {
            None
        };
        per_path.push(NuPathRecord { path_id: id.clone(), nu_root: root.nu, root_good: root.good, implied_c });
    }
    let nu_full = tree.signal_recursion(&family[0].1, mu)?.root().nu;
    let nu_half = tree.signal_recursion(&family[0].1, mu / 2.0)?.root().nu;
    Ok(NuBoundsReport {
        n: spec.n,
        block_sides: schedule.block_sides.clone(),
        mu,
        per_path,
        c_min,
        halving_ratio: if nu_half > 0.0 { nu_full / nu_half } else { f64::NAN },
    })
}

/// `prod_{l=0}^{K} ln(n_l / n_(l+1))^(2^(l-1))` with `n_(K+1) = 1`.
pub fn lower_form_shape(schedule: &ScaleSchedule) -> f64 {
    let mut sides = schedule.block_sides.clone();
    sides.push(1);
    let mut shape = 1.0;
    for l in 0..=schedule.k {
        let ratio = sides[l] as f64 / sides[l + 1] as f64;
        shape *= ratio.ln().powf(2f64.powi(l as i32 - 1));
    }
    shape
}

// ---------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    Kernel,
    LemmaA,
    BruteForce,
    Ks,
    Moments,
    Decomposition,
    Nu,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 7] = [
        SuiteKind::Kernel,
        SuiteKind::LemmaA,
        SuiteKind::BruteForce,
        SuiteKind::Ks,
        SuiteKind::Moments,
        SuiteKind::Decomposition,
        SuiteKind::Nu,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SuiteKind::Kernel => "kernel",
            SuiteKind::LemmaA => "lemmaA",
            SuiteKind::BruteForce => "bruteforce",
            SuiteKind::Ks => "ks",
            SuiteKind::Moments => "moments",
            SuiteKind::Decomposition => "decomposition",
            SuiteKind::Nu => "nu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cmp {
    Le,
    Ge,
    AbsLe,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub observed: f64,
    pub cmp: Cmp,
    pub bound: f64,
    pub pass: bool,
}

impl Assertion {
    pub fn check(name: impl Into<String>, observed: f64, cmp: Cmp, bound: f64) -> Self {
        let pass = match cmp {
            Cmp::Le => observed <= bound,
            Cmp::Ge => observed >= bound,
            Cmp::AbsLe => observed.abs() <= bound,
        } && observed.is_finite();
        Assertion { name: name.into(), observed, cmp, bound, pass }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
    pub pass: bool,
}

impl SuiteReport {
    fn finish(mut self) -> Self {
        self.pass = self.assertions.iter().all(|a| a.pass);
        self
    }

    fn new(suite: &str) -> Self {
        SuiteReport { suite: suite.into(), assertions: Vec::new(), notes: Vec::new(), pass: false }
    }
}

/// Suite sizing. `Quick` keeps every suite interactive; `Full` runs the
/// sizes the acceptance gate pins (minutes of compute for some suites).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyScale {
    Quick,
    Full,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub scale: VerifyScale,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { scale: VerifyScale::Quick, seed: 0x5eed }
    }
}

pub fn run_suite(kind: SuiteKind, opts: VerifyOptions) -> Result<SuiteReport> {
    match kind {
        SuiteKind::Kernel => kernel_suite(opts),
        SuiteKind::LemmaA => lemma_a_suite(opts),
        SuiteKind::BruteForce => brute_force_suite(opts),
        SuiteKind::Ks => ks_suite(opts),
        SuiteKind::Moments => moments_suite(opts),
        SuiteKind::Decomposition => decomposition_suite(opts),
        SuiteKind::Nu => nu_suite(opts),
    }
}

/// Oracle equivalence of the sliding-window forms.
fn kernel_suite(opts: VerifyOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("kernel");
    let (max_n, sceneries) = match opts.scale {
        VerifyScale::Quick => (9, 30),
        VerifyScale::Full => (12, 100),
    };
    for (num, den) in [(0u64, 1u64), (1, 2)] {
        for n in 1..=max_n {
            let spec = LatticeSpec::new(n, Aperture::new(num, den)?)?;
            let sites = Arc::new(SiteSet::from_spec(&spec)?);
            let view = KernelView::new(Arc::clone(&sites));
            let mut worst = 0.0f64;
            for t in 0..sceneries {
                let mut rng = stream_rng(opts.seed, stream::GENERIC | (n as u64) << 16 | t as u64);
                let x = generate_scenery(&sites, Hypothesis::Null, &mut rng);
                let dense = dense_oracle_quadratic(&sites, &x)?;
                let fast = view.quadratic_form(&x, false)?;
                let rel = (fast - dense).abs() / dense.abs().max(1.0);
                worst = worst.max(rel);
            }
            report.assertions.push(Assertion::check(
                format!("quadratic_form vs dense oracle, n={n}, a={num}/{den}"),
                worst,
                Cmp::Le,
                1e-10,
            ));
            let dense_frob = dense_oracle_frobenius_sq(&sites)?;
            let fast_frob = view.frobenius_norm_sq();
            let rel = (fast_frob - dense_frob).abs() / dense_frob.max(1.0);
            report.assertions.push(Assertion::check(
                format!("frobenius vs dense oracle, n={n}, a={num}/{den}"),
                rel,
                Cmp::Le,
                1e-10,
            ));
        }
    }
    Ok(report.finish())
}

/// Ratio-stability table: every computable ratio's spread stays small.
fn lemma_a_suite(opts: VerifyOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("lemmaA");
    let (ns, caps): (Vec<usize>, RatioCaps) = match opts.scale {
        VerifyScale::Quick => (vec![64, 96, 128], RatioCaps { r45_max_n: 128, r6_max_n: 128 }),
        VerifyScale::Full => (vec![64, 128, 256, 512], RatioCaps { r45_max_n: 256, r6_max_n: 256 }),
    };
    let table = lemma_a_table(&ns, Aperture::ZERO, caps, opts.seed)?;
    for (k, label) in ["r1 frob", "r2 spectral", "r3 energy", "r4 two-step", "r5 diag", "r6 a2-frob"]
        .iter()
        .enumerate()
    {
        if let Some(spread) = table.spread(k) {
            report.assertions.push(Assertion::check(format!("{label} spread"), spread, Cmp::Le, 1.5));
        } else {
            report.notes.push(format!("{label}: no rows within budget"));
        }
    }
    for row in &table.rows {
        report.notes.push(format!(
            "n={}: {}",
            row.n,
            row.r
                .iter()
                .map(|v| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    Ok(report.finish())
}

/// The subset-minimization bound at accessible sizes, plus the exact
/// boundary values.
fn brute_force_suite(_opts: VerifyOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("bruteforce");
    let v2 = brute_force_min_subset(2)?;
    report.notes.push(format!(
        "n=2 minimum is {v2}: the singleton split zeroes both sides, so the bound only starts at n=3"
    ));
    report.assertions.push(Assertion::check("exact value at n=3", brute_force_min_subset(3)?, Cmp::AbsLe, 1.0 + 1e-12));
    report
        .assertions
        .push(Assertion::check("exact value at n=3 (lower)", brute_force_min_subset(3)?, Cmp::Ge, 1.0 - 1e-12));
    report.assertions.push(Assertion::check("exact value at n=4", brute_force_min_subset(4)?, Cmp::AbsLe, 1.0 + 1e-12));
    report
        .assertions
        .push(Assertion::check("exact value at n=4 (lower)", brute_force_min_subset(4)?, Cmp::Ge, 1.0 - 1e-12));
    for n in 3..=16 {
        let v = brute_force_min_subset(n)?;
        let ratio = v / (n as f64 * (n as f64).ln());
        report.assertions.push(Assertion::check(format!("min / (n ln n) at n={n}"), ratio, Cmp::Ge, 0.1));
    }
    // Monotone-fraction variant: B_n(alpha) nondecreasing in alpha.
    for n in [8usize, 11, 14] {
        let mut prev = -1.0;
        for (num, den) in [(1usize, 2usize), (3, 5), (4, 5), (1, 1)] {
            let size = (num * n) / den;
            let b = restricted_min_subset(n, size)?;
            report.assertions.push(Assertion::check(
                format!("B_{n}({num}/{den}) nondecreasing"),
                b - prev,
                Cmp::Ge,
                0.0,
            ));
            prev = b;
        }
    }
    Ok(report.finish())
}

/// Gaussian approximation of the normalized null quadratic form.
fn ks_suite(opts: VerifyOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("ks");
    let (main_n, series, trials) = match opts.scale {
        VerifyScale::Quick => (64usize, vec![16usize, 32, 64], 2000usize),
        VerifyScale::Full => (256, vec![32, 128, 512], 10_000),
    };
    let dist = |n: usize| -> Result<f64> {
        let spec = LatticeSpec::known_start(n)?;
        let sites = Arc::new(SiteSet::from_spec(&spec)?);
        let view = KernelView::new(Arc::clone(&sites));
        ks_null_distance(&sites, |x| view.quadratic_form(x, true), trials, opts.seed)
    };
    let d_main = dist(main_n)?;
    let bound = match opts.scale {
        VerifyScale::Quick => 0.12,
        VerifyScale::Full => 0.05,
    };
    report.assertions.push(Assertion::check(format!("ks distance at n={main_n}"), d_main, Cmp::Le, bound));
    let mc_err = 2.0 * 1.22 / (trials as f64).sqrt();
    let mut prev: Option<f64> = None;
    for n in series {
        let d = dist(n)?;
        report.notes.push(format!("ks(n={n}) = {d:.4}"));
        if let Some(p) = prev {
            report.assertions.push(Assertion::check(
                format!("ks nonincreasing at n={n} (within 2x MC error)"),
                d - p,
                Cmp::Le,
                mc_err,
            ));
        }
        prev = Some(d);
    }
    Ok(report.finish())
}

/// Quadratic-form moment bounds with Gaussian inputs.
fn moments_suite(opts: VerifyOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("moments");
    let (ns, trials) = match opts.scale {
        VerifyScale::Quick => (vec![16usize], 20_000usize),
        VerifyScale::Full => (vec![16, 64], 100_000),
    };
    for n in ns {
        let spec = LatticeSpec::known_start(n)?;
        let view = KernelView::from_sites(SiteSet::from_spec(&spec)?);
        for s in [2u32, 3] {
            let check = whittle_moment_check(s, &view, trials, 1.0, opts.seed)?;
            report.assertions.push(Assertion::check(
                format!("E|Q|^{s} within bound at n={n} (bound {:.1})", check.bound),
                check.empirical,
                Cmp::Le,
                check.bound,
            ));
            if s == 2 {
                // E Q^2 = 2 Trace(A^2) = 1 for the normalized kernel.
                report.assertions.push(Assertion::check(
                    format!("E Q^2 near 1 at n={n}"),
                    check.empirical - 1.0,
                    Cmp::AbsLe,
                    0.25,
                ));
            }
        }
        let degenerate = whittle_moment_check(2, &view, 500, 0.0, opts.seed)?;
        report.assertions.push(Assertion::check(
            format!("zero-variance scenery has zero moment at n={n}"),
            degenerate.empirical,
            Cmp::AbsLe,
            0.0,
        ));
    }
    Ok(report.finish())
}

/// Signal/noise decomposition diagnostics.
fn decomposition_suite(opts: VerifyOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("decomposition");
    let (ns, trials) = match opts.scale {
        VerifyScale::Quick => (vec![16usize, 32], 2000usize),
        VerifyScale::Full => (vec![16, 32, 64], 10_000),
    };
    let mu = 1.0;
    let mut constants = Vec::new();
    for &n in &ns {
        let spec = LatticeSpec::known_start(n)?;
        let path = DirectedPath::zigzag(&spec);
        let rep = decomposition_check(&spec, &path, mu, trials, opts.seed)?;
        report.assertions.push(Assertion::check(
            format!("mean(U) within 3 SE at n={n}"),
            rep.mean_u,
            Cmp::AbsLe,
            3.0 * rep.se_u,
        ));
        report.assertions.push(Assertion::check(
            format!("corr(W,U) within 3 SE at n={n}"),
            rep.corr_w_u,
            Cmp::AbsLe,
            3.0 / (trials as f64).sqrt(),
        ));
        report.assertions.push(Assertion::check(
            format!("mean(Q)-nu within 3 SE at n={n}"),
            rep.mean_q_minus_nu,
            Cmp::AbsLe,
            3.0 * rep.se_u + 3.0 / (trials as f64).sqrt(),
        ));
        report.notes.push(format!(
            "n={n}: nu={:.4} var(U)={:.5} C=var(U)ln(n)/mu^2={:.4} beta3={:.3} ks(W)={:.4}",
            rep.nu, rep.var_u, rep.u_var_constant, rep.beta3, rep.ks_null
        ));
        constants.push(rep.u_var_constant);
    }
    let c_mean = mean(&constants);
    for (i, &n) in ns.iter().enumerate() {
        report.assertions.push(Assertion::check(
            format!("var(U) constant stable at n={n} (center {c_mean:.4})"),
            constants[i] - c_mean,
            Cmp::AbsLe,
            0.5 * c_mean,
        ));
    }
    Ok(report.finish())
}

/// Signal-scale bounds across the family and across n.
fn nu_suite(opts: VerifyOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("nu");
    let ns = match opts.scale {
        VerifyScale::Quick => vec![32usize, 64],
        VerifyScale::Full => vec![64, 128, 256],
    };
    let mut ratios = Vec::new();
    for &n in &ns {
        let r = nu_ratio_depth0(n, Aperture::ZERO)?;
        report.notes.push(format!("depth-0 ratio nu/(mu^2 sqrt(ln n)) at n={n}: {r:.4}"));
        ratios.push(r);
    }
    for w in ratios.windows(2) {
        report.assertions.push(Assertion::check(
            "depth-0 ratio drift between consecutive n",
            (w[1] / w[0] - 1.0).abs(),
            Cmp::Le,
            0.3,
        ));
    }
    // Depth-1 instance: good-rooted signals dominate the lower form at
    // the recorded constant, and halving mu divides the root by 16.
    let n = 64;
    let spec = LatticeSpec::known_start(n)?;
    let schedule = ScaleSchedule::manual(vec![64, 8])?;
    let mut family: Vec<(String, DirectedPath)> = vec![("zigzag".into(), DirectedPath::zigzag(&spec))];
    for i in 0..6u64 {
        let mut rng = stream_rng(opts.seed, stream::PATH_FAMILY | i);
        family.push((format!("uniform#{i}"), crate::lattice::sample_path(&spec, crate::lattice::PathKind::UniformReflected, &mut rng)));
    }
    let mu = 1.0;
    let rep = nu_bounds_check(&spec, &schedule, &family, mu)?;
    report.assertions.push(Assertion::check("depth-1 halving ratio is 16", rep.halving_ratio - 16.0, Cmp::AbsLe, 1e-9));
    let shape = lower_form_shape(&schedule);
    let lower = rep.c_min.powi(3) * mu.powi(4) * shape;
    for p in &rep.per_path {
        if p.root_good {
            report.assertions.push(Assertion::check(
                format!("good-rooted nu above lower form ({})", p.path_id),
                p.nu_root,
                Cmp::Ge,
                lower * (1.0 - 1e-9),
            ));
        }
    }
    report.notes.push(format!("depth-1 recorded constant c_min = {:.4}", rep.c_min));
    // Depth-0 halving check: factor 4 exactly.
    let d0 = nu_bounds_check(&spec, &ScaleSchedule::manual(vec![64])?, &family[..1], mu)?;
    report.assertions.push(Assertion::check("depth-0 halving ratio is 4", d0.halving_ratio - 4.0, Cmp::AbsLe, 1e-9));
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dense_oracle_examples() {
        let spec = LatticeSpec::known_start(2).unwrap();
        let sites = SiteSet::from_spec(&spec).unwrap();
        let ones = Scenery::constant(3, 1.0);
        assert_relative_eq!(dense_oracle_quadratic(&sites, &ones).unwrap(), 4.0);
        assert_eq!(dense_oracle_quadratic(&sites, &Scenery::zeros(3)).unwrap(), 0.0);
        let mut basis = Scenery::zeros(3);
        basis.values_mut()[1] = 1.0;
        assert_eq!(dense_oracle_quadratic(&sites, &basis).unwrap(), 0.0);
        let big = LatticeSpec::known_start(200).unwrap();
        let big_sites = SiteSet::from_spec(&big).unwrap();
        assert!(dense_oracle_quadratic(&big_sites, &Scenery::zeros(big_sites.len())).is_err());
    }

    #[test]
    fn a2_frobenius_matches_dense() {
        for (n, num, den) in [(2usize, 0u64, 1u64), (3, 0, 1), (5, 0, 1), (4, 1, 2), (7, 0, 1), (6, 1, 1)] {
            let spec = LatticeSpec::new(n, Aperture::new(num, den).unwrap()).unwrap();
            let sites = SiteSet::from_spec(&spec).unwrap();
            let pts: Vec<Site> = sites.iter().collect();
            let m = pts.len();
            let mut a = vec![0.0f64; m * m];
            for p in 0..m {
                for q in 0..m {
                    a[p * m + q] = entry(pts[p], pts[q]);
                }
            }
            let mut dense = 0.0;
            for p in 0..m {
                for q in 0..m {
                    let mut v = 0.0;
                    for r in 0..m {
                        v += a[p * m + r] * a[r * m + q];
                    }
                    dense += v * v;
                }
            }
            let fast = a2_frobenius_sq(&sites);
            assert_relative_eq!(fast, dense, max_relative = 1e-10, epsilon = 1e-10);
        }
    }

    #[test]
    fn ratio_table_small_values() {
        let table = lemma_a_table(&[1, 2], Aperture::ZERO, RatioCaps::default(), 1).unwrap();
        assert!(table.rows[0].degenerate);
        assert!(table.rows[0].r.iter().all(|v| v.is_none()));
        let row = &table.rows[1];
        let ln2 = 2f64.ln();
        assert_relative_eq!(row.r[0].unwrap(), 4.0 / (4.0 * ln2), max_relative = 1e-12);
        assert_relative_eq!(row.r[2].unwrap(), 2.0 / (2.0 * ln2), max_relative = 1e-12);
        assert_relative_eq!(row.r[1].unwrap(), 2f64.sqrt() / 2.0, max_relative = 1e-5);
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_min_subset(2).unwrap(), 0.0);
        assert_relative_eq!(brute_force_min_subset(3).unwrap(), 1.0);
        assert_relative_eq!(brute_force_min_subset(4).unwrap(), 1.0);
        assert!(brute_force_min_subset(25).is_err());
        assert!(brute_force_min_subset(0).is_err());
    }

    #[test]
    fn restricted_subsets_monotone() {
        // B_n is monotone in the subset size by containment.
        let n = 10;
        let mut prev = -1.0;
        for size in [5usize, 6, 8, 10] {
            let b = restricted_min_subset(n, size).unwrap();
            assert!(b >= prev);
            prev = b;
        }
        assert!(restricted_min_subset(10, 11).is_err());
    }

    #[test]
    fn ks_point_mass_is_half() {
        let spec = LatticeSpec::known_start(3).unwrap();
        let sites = SiteSet::from_spec(&spec).unwrap();
        let d = ks_null_distance(&sites, |_| Ok(0.0), 500, 1).unwrap();
        assert_relative_eq!(d, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn whittle_bound_values() {
        let spec = LatticeSpec::known_start(8).unwrap();
        let view = KernelView::from_sites(SiteSet::from_spec(&spec).unwrap());
        let c2 = whittle_moment_check(2, &view, 500, 1.0, 3).unwrap();
        // 32 * G(1.5) * sqrt(G(2.5)) * 3.
        assert_relative_eq!(c2.bound, 98.09215452076273, max_relative = 1e-9);
        assert!(c2.pass);
        let c3 = whittle_moment_check(3, &view, 500, 1.0, 3).unwrap();
        assert_relative_eq!(c3.bound, 4949.990104527265, max_relative = 1e-9);
        assert!(c3.pass && c3.empirical * 10.0 <= c3.bound);
        let zero = whittle_moment_check(2, &view, 500, 0.0, 3).unwrap();
        assert_eq!(zero.empirical, 0.0);
        assert!(whittle_moment_check(4, &view, 500, 1.0, 3).is_err());
    }

    #[test]
    fn decomposition_trivial_cases() {
        let spec = LatticeSpec::known_start(12).unwrap();
        let path = DirectedPath::zigzag(&spec);
        // mu = 0: U vanishes identically and nu = 0.
        let rep = decomposition_check(&spec, &path, 0.0, 200, 5).unwrap();
        assert_eq!(rep.nu, 0.0);
        assert!(rep.mean_u.abs() < 1e-12 && rep.var_u < 1e-20);
        // Sanity at mu = 1: centered U, uncorrelated with W.
        let rep = decomposition_check(&spec, &path, 1.0, 4000, 5).unwrap();
        assert!(rep.nu > 0.0);
        assert!(rep.mean_u.abs() <= 3.0 * rep.se_u, "mean U = {} se {}", rep.mean_u, rep.se_u);
        assert!(rep.corr_w_u.abs() <= 3.0 / (4000f64).sqrt());
    }

    #[test]
    fn nu_ratio_depth0_is_path_free_formula() {
        let r = nu_ratio_depth0(16, Aperture::ZERO).unwrap();
        let spec = LatticeSpec::known_start(16).unwrap();
        let view = KernelView::from_sites(SiteSet::from_spec(&spec).unwrap());
        let want = path_energy(16) / (view.normalization() * (16f64).ln().sqrt());
        assert_relative_eq!(r, want);
    }

    #[test]
    fn quick_suites_pass() {
        let opts = VerifyOptions { scale: VerifyScale::Quick, seed: 0xACE };
        for kind in [SuiteKind::Kernel, SuiteKind::BruteForce, SuiteKind::Moments, SuiteKind::Nu] {
            let rep = run_suite(kind, opts).unwrap();
            assert!(rep.pass, "suite {} failed: {:?}", rep.suite, rep.assertions.iter().filter(|a| !a.pass).collect::<Vec<_>>());
        }
    }

    #[test]
    fn suite_parse_roundtrip() {
        for kind in SuiteKind::ALL {
            assert_eq!(SuiteKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(SuiteKind::parse("nope").is_err());
    }
}
