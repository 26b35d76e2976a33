//! The inverse-column-distance kernel over a site set: entries, Frobenius
//! norm, matrix-free quadratic/bilinear forms, matvec, spectral-norm
//! estimation, and the closed-form path energy.
//!
//! The kernel weights a pair of sites `x`, `y` by `1/|x1-y1|` when they
//! are light-cone equivalent and by zero otherwise (the diagonal is
//! zero). Nothing here ever materializes the matrix: all forms run over
//! column pairs with prefix-sum windows, because the set of partners of
//! height `u` in a column at distance `d` is exactly the height window
//! `[u-d, u+d]`.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{equivalent, DirectedPath, Site, SiteSet};

/// One real observation per site, aligned with the site set's ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenery {
    values: Vec<f64>,
}

impl Scenery {
    pub fn new(values: Vec<f64>) -> Self {
        Scenery { values }
    }

    pub fn zeros(len: usize) -> Self {
        Scenery { values: vec![0.0; len] }
    }

    pub fn constant(len: usize, v: f64) -> Self {
        Scenery { values: vec![v; len] }
    }

    /// `amplitude` on the path's sites, zero elsewhere.
    pub fn path_indicator(sites: &SiteSet, path: &DirectedPath, amplitude: f64) -> Self {
        let mut values = vec![0.0; sites.len()];
        for s in path.sites() {
            if let Some(ix) = sites.index_of(s) {
                values[ix] = amplitude;
            }
        }
        Scenery { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Scenery { values: self.values.iter().map(|v| v * factor).collect() }
    }

    /// Adds `amplitude` on the path's sites in place.
    pub fn plant(&mut self, sites: &SiteSet, path: &DirectedPath, amplitude: f64) {
        for s in path.sites() {
            if let Some(ix) = sites.index_of(s) {
                self.values[ix] += amplitude;
            }
        }
    }
}

/// Compensated (Neumaier) accumulator for the long reductions.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Neumaier::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Kernel matrix entry between two sites.
pub fn entry(x: Site, y: Site) -> f64 {
    if equivalent(x, y) {
        1.0 / (x.x1 - y.x1).abs() as f64
    } else {
        0.0
    }
}

/// The exact value of `1_pi^T A 1_pi` on the full region, which is the
/// same for every directed path: the kernel entry between two path sites
/// depends only on their column gap, and path heights always stay within
/// the light cone.
pub fn path_energy(n: usize) -> f64 {
    let mut acc = Neumaier::new();
    for d in 1..n {
        acc.add(2.0 * (n - d) as f64 / d as f64);
    }
    acc.total()
}

/// A site set together with the lazily cached kernel norms needed to
/// normalize quadratic forms; immutable and cheap to clone.
#[derive(Clone, Debug)]
pub struct KernelView {
    sites: Arc<SiteSet>,
    frob_sq: Arc<OnceLock<f64>>,
}

impl KernelView {
    pub fn new(sites: Arc<SiteSet>) -> Self {
        KernelView { sites, frob_sq: Arc::new(OnceLock::new()) }
    }

    pub fn from_sites(sites: SiteSet) -> Self {
        KernelView::new(Arc::new(sites))
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    pub fn sites_arc(&self) -> Arc<SiteSet> {
        Arc::clone(&self.sites)
    }

    /// `sum_{x,y} entry(x,y)^2` by interval-overlap counting over column
    /// pairs; O(1) work per pair.
    pub fn frobenius_norm_sq(&self) -> f64 {
        *self.frob_sq.get_or_init(|| {
            let cols = self.sites.columns();
            let mut acc = Neumaier::new();
            for (ci_idx, ci) in cols.iter().enumerate() {
                for cj in &cols[ci_idx + 1..] {
                    let d = cj.x1 - ci.x1;
                    let (base_lo, slots) = window_geometry(ci.lo, cj.lo, d, ci.step);
                    let pairs = interval_overlap_sum(base_lo, base_lo + ci.len() as i64, slots, cj.len() as i64);
                    acc.add(2.0 * pairs as f64 / (d * d) as f64);
                }
            }
            acc.total()
        })
    }

    /// The divisor turning the kernel into its normalized version:
    /// `sqrt(2) * ||A||_F`, so that the normalized kernel has
    /// `Trace(A^2) = 1/2`. Zero when the kernel vanishes.
    pub fn normalization(&self) -> f64 {
        (2.0 * self.frobenius_norm_sq()).sqrt()
    }

    fn check_len(&self, x: &Scenery) -> Result<()> {
        if x.len() != self.sites.len() {
            return Err(Error::SceneryMismatch { got: x.len(), want: self.sites.len() });
        }
        Ok(())
    }

    fn finish(&self, raw: f64, normalized: bool) -> f64 {
        if !normalized {
            return raw;
        }
        let norm = self.normalization();
        // A vanishing kernel has a vanishing form; keep 0/0 at zero.
        if norm > 0.0 {
            raw / norm
        } else {
            0.0
        }
    }

    /// `x^T A x`, matrix-free: for each unordered column pair at gap `d`,
    /// accumulate `(2/d) * sum_u x_u * (window sum of the partner column
    /// within d of u)`.
    pub fn quadratic_form(&self, x: &Scenery, normalized: bool) -> Result<f64> {
        self.check_len(x)?;
        let pfx = ColumnPrefixes::build(&self.sites, x.values());
        let cols = self.sites.columns();
        let mut acc = Neumaier::new();
        for (ci_idx, ci) in cols.iter().enumerate() {
            let xi = &x.values()[ci.offset..ci.offset + ci.len()];
            for (cj_off, cj) in cols[ci_idx + 1..].iter().enumerate() {
                let d = cj.x1 - ci.x1;
                let pair = windowed_dot(ci, xi, cj, pfx.prefix(ci_idx + 1 + cj_off), d);
                acc.add(2.0 * pair / d as f64);
            }
        }
        Ok(self.finish(acc.total(), normalized))
    }

    /// `x^T A y` (equal to `y^T A x`; the kernel is symmetric).
    pub fn bilinear(&self, x: &Scenery, y: &Scenery, normalized: bool) -> Result<f64> {
        self.check_len(x)?;
        self.check_len(y)?;
        let pfy = ColumnPrefixes::build(&self.sites, y.values());
        let cols = self.sites.columns();
        let mut acc = Neumaier::new();
        for (ci_idx, ci) in cols.iter().enumerate() {
            let xi = &x.values()[ci.offset..ci.offset + ci.len()];
            for (cj_idx, cj) in cols.iter().enumerate() {
                if ci_idx == cj_idx {
                    continue;
                }
                let d = (cj.x1 - ci.x1).abs();
                let pair = windowed_dot(ci, xi, cj, pfy.prefix(cj_idx), d);
                acc.add(pair / d as f64);
            }
        }
        Ok(self.finish(acc.total(), normalized))
    }

    /// `A x` componentwise, matrix-free.
    pub fn matvec(&self, x: &Scenery, normalized: bool) -> Result<Scenery> {
        self.check_len(x)?;
        let pfx = ColumnPrefixes::build(&self.sites, x.values());
        let cols = self.sites.columns();
        let mut out = vec![0.0; x.len()];
        for (ci_idx, ci) in cols.iter().enumerate() {
            let oi = &mut out[ci.offset..ci.offset + ci.len()];
            for (cj_idx, cj) in cols.iter().enumerate() {
                if ci_idx == cj_idx {
                    continue;
                }
                let d = (cj.x1 - ci.x1).abs();
                let w = 1.0 / d as f64;
                let p = pfx.prefix(cj_idx);
                let (base_lo, slots) = window_geometry(ci.lo, cj.lo, d, ci.step);
                let len_j = cj.len() as i64;
                if base_lo >= 0 && base_lo + (oi.len() as i64 - 1) + slots <= len_j {
                    let lo = base_lo as usize;
                    let hi = lo + slots as usize;
                    let p_lo = &p[lo..lo + oi.len()];
                    let p_hi = &p[hi..hi + oi.len()];
                    for ((o, &a), &b) in oi.iter_mut().zip(p_hi).zip(p_lo) {
                        *o += w * (a - b);
                    }
                    continue;
                }
                for (t, o) in oi.iter_mut().enumerate() {
                    let z = t as i64 + base_lo;
                    let s0 = z.clamp(0, len_j) as usize;
                    let s1 = (z + slots).clamp(0, len_j) as usize;
                    *o += w * (p[s1] - p[s0]);
                }
            }
        }
        let norm = self.normalization();
        if normalized && norm > 0.0 {
            for o in &mut out {
                *o /= norm;
            }
        }
        Ok(Scenery::new(out))
    }

    /// Power-iteration lower bound for the spectral norm, using the norm
    /// ratio `||A v||/||v||` (monotone nondecreasing over iterations for
    /// symmetric kernels). Stops once the relative change drops below
    /// 1e-6 or the iteration cap is hit.
    pub fn spectral_norm_estimate<R: Rng + ?Sized>(&self, iterations: usize, rng: &mut R) -> f64 {
        let n = self.sites.len();
        if n == 0 {
            return 0.0;
        }
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let norm0 = l2_norm(&v);
        if norm0 == 0.0 {
            return 0.0;
        }
        for x in &mut v {
            *x /= norm0;
        }
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let w = self
                .matvec(&Scenery::new(v), false)
                .expect("vector built from the same site set");
            let mut w = w.values;
            let wn = l2_norm(&w);
            if wn == 0.0 {
                return 0.0;
            }
            let prev = estimate;
            estimate = wn;
            for x in &mut w {
                *x /= wn;
            }
            v = w;
            if prev > 0.0 && (estimate - prev).abs() <= 1e-6 * estimate {
                break;
            }
        }
        estimate
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-column prefix sums of a value vector, stored flat.
struct ColumnPrefixes {
    flat: Vec<f64>,
    starts: Vec<usize>,
}

impl ColumnPrefixes {
    fn build(sites: &SiteSet, values: &[f64]) -> Self {
        let cols = sites.columns();
        let mut starts = Vec::with_capacity(cols.len());
        let mut flat = Vec::with_capacity(values.len() + cols.len());
        for c in cols {
            starts.push(flat.len());
            let mut acc = 0.0;
            flat.push(0.0);
            for &v in &values[c.offset..c.offset + c.len()] {
                acc += v;
                flat.push(acc);
            }
        }
        ColumnPrefixes { flat, starts }
    }

    fn prefix(&self, col: usize) -> &[f64] {
        let start = self.starts[col];
        let end = self.starts.get(col + 1).copied().unwrap_or(self.flat.len());
        &self.flat[start..end]
    }
}

/// Index geometry of the light-cone window: for the site at slot `t` of
/// column `i`, the partners in column `j` occupy slots
/// `[t + base_lo, t + base_lo + slots)` of column `j` (before clamping).
/// The endpoints land exactly on the partner grid because the column gap
/// fixes the parity offset.
#[inline]
fn window_geometry(lo_i: i64, lo_j: i64, d: i64, step: i64) -> (i64, i64) {
    debug_assert!(d > 0 && (lo_i - lo_j - d) % step == 0);
    ((lo_i - lo_j - d) / step, 2 * d / step + 1)
}

/// `sum_t x_i[t] * (prefix window of the partner column)` for one column
/// pair at gap `d`.
#[inline]
fn windowed_dot(ci: &crate::lattice::Column, xi: &[f64], cj: &crate::lattice::Column, p: &[f64], d: i64) -> f64 {
    let (base_lo, slots) = window_geometry(ci.lo, cj.lo, d, ci.step);
    let len_j = cj.len() as i64;
    // Full-region geometry keeps every window strictly inside the
    // partner column, so the clamps below would be no-ops; take the
    // stream loop that vectorizes.
    if base_lo >= 0 && base_lo + (xi.len() as i64 - 1) + slots <= len_j {
        let lo = base_lo as usize;
        let hi = lo + slots as usize;
        let p_lo = &p[lo..lo + xi.len()];
        let p_hi = &p[hi..hi + xi.len()];
        let mut acc = 0.0;
        for ((&xv, &a), &b) in xi.iter().zip(p_hi).zip(p_lo) {
            acc += xv * (a - b);
        }
        return acc;
    }
    // Outside [t_min, t_max) the window misses column j entirely.
    let t_min = (-(base_lo + slots) + 1).clamp(0, xi.len() as i64) as usize;
    let t_max = (len_j - base_lo).clamp(0, xi.len() as i64) as usize;
    let mut acc = 0.0;
    for (t, &xv) in xi.iter().enumerate().take(t_max).skip(t_min) {
        let z = t as i64 + base_lo;
        let s0 = z.clamp(0, len_j) as usize;
        let s1 = (z + slots).clamp(0, len_j) as usize;
        acc += xv * (p[s1] - p[s0]);
    }
    acc
}

/// Sum over integer `z` in `[z0, z1)` of `|[z, z+w) ∩ [0, l)|`: the
/// closed-form pair count behind the Frobenius norm.
fn interval_overlap_sum(z0: i64, z1: i64, w: i64, l: i64) -> i64 {
    debug_assert!(w >= 1 && l >= 1);
    // f(z) rises with slope 1 on [-w+1, m1), holds min(w, l) on
    // [m1, m2], falls on (m2, l), with m1 = min(0, l-w), m2 = max(0, l-w).
    let m1 = 0.min(l - w);
    let m2 = 0.max(l - w);
    let plateau = w.min(l);
    let mut total = 0i64;
    // Rising part: f(z) = z + w for z in [-w+1, m1).
    let (a, b) = (z0.max(-w + 1), z1.min(m1));
    if a < b {
        total += arith_series(a + w, b + w - 1);
    }
    // Plateau: z in [m1, m2].
    let (a, b) = (z0.max(m1), z1.min(m2 + 1));
    if a < b {
        total += plateau * (b - a);
    }
    // Falling part: f(z) = l - z for z in (m2, l).
    let (a, b) = (z0.max(m2 + 1), z1.min(l));
    if a < b {
        total += arith_series(l - b + 1, l - a);
    }
    total
}

/// Sum of integers from `a` through `b` inclusive.
fn arith_series(a: i64, b: i64) -> i64 {
    debug_assert!(a <= b);
    (a + b) * (b - a + 1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate_paths, Aperture, LatticeSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn region(n: usize, num: u64, den: u64) -> Arc<SiteSet> {
        let spec = LatticeSpec::new(n, Aperture::new(num, den).unwrap()).unwrap();
        Arc::new(SiteSet::from_spec(&spec).unwrap())
    }

    fn dense_frob_sq(sites: &SiteSet) -> f64 {
        let pts: Vec<Site> = sites.iter().collect();
        let mut acc = 0.0;
        for &x in &pts {
            for &y in &pts {
                let e = entry(x, y);
                acc += e * e;
            }
        }
        acc
    }

    fn dense_quadratic(sites: &SiteSet, x: &[f64]) -> f64 {
        let pts: Vec<Site> = sites.iter().collect();
        let mut acc = 0.0;
        for (p, &sp) in pts.iter().enumerate() {
            for (q, &sq) in pts.iter().enumerate() {
                if p != q {
                    acc += entry(sp, sq) * x[p] * x[q];
                }
            }
        }
        acc
    }

    #[test]
    fn entry_examples() {
        assert_eq!(entry(Site::new(0, 0), Site::new(2, 0)), 0.5);
        assert_eq!(entry(Site::new(0, 0), Site::new(1, 2)), 0.0);
        assert_eq!(entry(Site::new(5, 3), Site::new(5, 3)), 0.0);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(KernelView::new(region(2, 0, 1)).frobenius_norm_sq(), 4.0);
        assert_eq!(KernelView::new(region(1, 0, 1)).frobenius_norm_sq(), 0.0);
        assert_eq!(KernelView::new(region(2, 1, 1)).frobenius_norm_sq(), 12.0);
    }

    #[test]
    fn frobenius_matches_dense_oracle() {
        for n in 1..=12 {
            for (num, den) in [(0, 1), (1, 2)] {
                let sites = region(n, num, den);
                let view = KernelView::new(Arc::clone(&sites));
                let dense = dense_frob_sq(&sites);
                assert_relative_eq!(view.frobenius_norm_sq(), dense, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn normalization_gives_half_trace() {
        // Trace(normalized A^2) = ||A||_F^2 / (2 ||A||_F^2) = 1/2.
        for n in [2usize, 5, 16, 32] {
            let view = KernelView::new(region(n, 0, 1));
            let frob = view.frobenius_norm_sq();
            let norm = view.normalization();
            assert_relative_eq!(frob / (norm * norm), 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn quadratic_form_examples() {
        let view = KernelView::new(region(2, 0, 1));
        let zero = Scenery::zeros(3);
        assert_eq!(view.quadratic_form(&zero, false).unwrap(), 0.0);
        let ones = Scenery::constant(3, 1.0);
        assert_relative_eq!(view.quadratic_form(&ones, false).unwrap(), 4.0);
        let path = DirectedPath::new(vec![0, 1]).unwrap();
        let ind = Scenery::path_indicator(view.sites(), &path, 1.0);
        assert_relative_eq!(view.quadratic_form(&ind, false).unwrap(), 2.0);
        assert_relative_eq!(view.quadratic_form(&ind, false).unwrap(), path_energy(2));
    }

    #[test]
    fn quadratic_form_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in 1..=12 {
            for (num, den) in [(0, 1), (1, 2)] {
                let sites = region(n, num, den);
                let view = KernelView::new(Arc::clone(&sites));
                for _ in 0..30 {
                    let x: Vec<f64> = (0..sites.len()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                    let dense = dense_quadratic(&sites, &x);
                    let fast = view.quadratic_form(&Scenery::new(x), false).unwrap();
                    assert_relative_eq!(fast, dense, max_relative = 1e-10, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn scenery_mismatch_is_an_error() {
        let view = KernelView::new(region(3, 0, 1));
        let err = view.quadratic_form(&Scenery::zeros(2), false).unwrap_err();
        assert!(matches!(err, Error::SceneryMismatch { .. }));
    }

    #[test]
    fn bilinear_examples() {
        let view = KernelView::new(region(3, 0, 1));
        let n = view.sites().len();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Scenery::new((0..n).map(|_| rng.gen::<f64>() - 0.5).collect());
        assert_eq!(view.bilinear(&x, &Scenery::zeros(n), false).unwrap(), 0.0);
        // bilinear(e_u, e_v) recovers the matrix entry.
        for p in 0..n {
            for q in 0..n {
                let mut eu = Scenery::zeros(n);
                eu.values_mut()[p] = 1.0;
                let mut ev = Scenery::zeros(n);
                ev.values_mut()[q] = 1.0;
                let want = entry(view.sites().site(p), view.sites().site(q));
                assert_relative_eq!(view.bilinear(&eu, &ev, false).unwrap(), want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn bilinear_symmetry_and_diagonal() {
        let view = KernelView::new(region(7, 1, 2));
        let n = view.sites().len();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x = Scenery::new((0..n).map(|_| rng.gen::<f64>() - 0.5).collect());
            let y = Scenery::new((0..n).map(|_| rng.gen::<f64>() - 0.5).collect());
            let xy = view.bilinear(&x, &y, false).unwrap();
            let yx = view.bilinear(&y, &x, false).unwrap();
            assert_relative_eq!(xy, yx, max_relative = 1e-10, epsilon = 1e-12);
            let xx = view.bilinear(&x, &x, false).unwrap();
            let q = view.quadratic_form(&x, false).unwrap();
            assert_relative_eq!(xx, q, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn matvec_basis_example() {
        let view = KernelView::new(region(2, 0, 1));
        let mut e0 = Scenery::zeros(3);
        e0.values_mut()[0] = 1.0; // site (0,0)
        let out = view.matvec(&e0, false).unwrap();
        assert_eq!(out.values(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, num, den) in [(6, 0, 1), (5, 1, 2)] {
            let sites = region(n, num, den);
            let view = KernelView::new(Arc::clone(&sites));
            let pts: Vec<Site> = sites.iter().collect();
            let x: Vec<f64> = (0..sites.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let got = view.matvec(&Scenery::new(x.clone()), false).unwrap();
            for (p, &sp) in pts.iter().enumerate() {
                let want: f64 = pts.iter().zip(&x).map(|(&sq, &v)| entry(sp, sq) * v).sum();
                assert_relative_eq!(got.values()[p], want, max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn path_energy_examples() {
        assert_eq!(path_energy(1), 0.0);
        assert_relative_eq!(path_energy(2), 2.0);
        assert_relative_eq!(path_energy(3), 5.0);
    }

    #[test]
    fn path_energy_is_path_free() {
        for n in 1..=8 {
            let spec = LatticeSpec::known_start(n).unwrap();
            let sites = Arc::new(SiteSet::from_spec(&spec).unwrap());
            let view = KernelView::new(Arc::clone(&sites));
            let want = path_energy(n);
            for p in enumerate_paths(&spec).unwrap() {
                let ind = Scenery::path_indicator(&sites, &p, 1.0);
                let q = view.quadratic_form(&ind, false).unwrap();
                assert_relative_eq!(q, want, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn spectral_norm_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(KernelView::new(region(1, 0, 1)).spectral_norm_estimate(50, &mut rng), 0.0);
        let view = KernelView::new(region(2, 0, 1));
        let est = view.spectral_norm_estimate(200, &mut rng);
        assert_relative_eq!(est, 2f64.sqrt(), max_relative = 1e-6);
    }

    #[test]
    fn spectral_estimate_monotone_in_iterations() {
        let view = KernelView::new(region(9, 1, 2));
        let mut prev = 0.0;
        for iters in [1usize, 2, 4, 8, 16, 32] {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let est = view.spectral_norm_estimate(iters, &mut rng);
            assert!(est >= prev - 1e-12, "estimate dropped: {prev} -> {est}");
            prev = est;
        }
    }

    #[test]
    fn interval_overlap_sum_matches_loop() {
        for w in 1..=7i64 {
            for l in 1..=7i64 {
                for z0 in -10..=10i64 {
                    for z1 in z0..=10 {
                        let want: i64 = (z0..z1).map(|z| ((z + w).min(l) - z.max(0)).max(0)).sum();
                        assert_eq!(interval_overlap_sum(z0, z1, w, l), want, "z0={z0} z1={z1} w={w} l={l}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn quadratic_matches_dense_prop(n in 1usize..9, den in 1u64..3, seed in 0u64..200) {
            let sites = region(n, 1, den);
            let view = KernelView::new(Arc::clone(&sites));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..sites.len()).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let dense = dense_quadratic(&sites, &x);
            let fast = view.quadratic_form(&Scenery::new(x), false).unwrap();
            prop_assert!((fast - dense).abs() <= 1e-10 * dense.abs().max(1.0));
        }
    }
}
