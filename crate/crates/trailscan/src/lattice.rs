//! Geometry of the detection problem: the finite lattice region, its
//! hyperplanes, the light-cone equivalence relation, and directed /
//! generalized path construction and sampling.
//!
//! The ambient lattice is the set of integer points `(x1, x2)` with
//! `x1 - x2` even. The region with `n` hyperplanes and aperture `a`
//! contains site `(i, u)` iff `0 <= i < n`, `|u| <= i + floor(a*n)` and
//! `i - u` is even. Directed paths visit one site per hyperplane and take
//! diagonal steps (height changes by exactly one per column).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on how many sites a region may contain before
/// [`SiteSet::from_spec`] refuses to build it.
pub const DEFAULT_SITE_BUDGET: u128 = 50_000_000;

/// Default cap on the number of paths [`enumerate_paths`] will produce.
pub const DEFAULT_PATH_BUDGET: u128 = 4_000_000;

/// Nonnegative rational aperture parameter, kept exact so that the height
/// bound `floor(a*n)` never suffers float rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Aperture {
    num: u64,
    den: u64,
}

impl Aperture {
    pub const ZERO: Aperture = Aperture { num: 0, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Config("aperture denominator must be nonzero".into()));
        }
        let g = gcd(num.max(1), den);
        Ok(Aperture { num: num / g, den: den / g })
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `floor(a * n)`, computed exactly.
    pub fn floor_mul(&self, n: usize) -> i64 {
        ((self.num as u128 * n as u128) / self.den as u128) as i64
    }

    /// Best rational with denominator at most `max_den`; errors if no
    /// such fraction reproduces `x` to within `1e-9`.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::Config(format!("aperture must be finite and >= 0, got {x}")));
        }
        // Continued-fraction expansion.
        let max_den: u64 = 1_000_000;
        let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
        let mut frac = x;
        for _ in 0..64 {
            let whole = frac.floor();
            if whole > u64::MAX as f64 {
                break;
            }
            let a = whole as u64;
            let p2 = a.saturating_mul(p1).saturating_add(p0);
            let q2 = a.saturating_mul(q1).saturating_add(q0);
            if q2 > max_den {
                break;
            }
            p0 = p1;
            q0 = q1;
            p1 = p2;
            q1 = q2;
            if (p1 as f64 / q1 as f64 - x).abs() < 1e-12 {
                break;
            }
            let rem = frac - whole;
            if rem < 1e-12 {
                break;
            }
            frac = 1.0 / rem;
        }
        if q1 == 0 || (p1 as f64 / q1 as f64 - x).abs() > 1e-9 {
            return Err(Error::Config(format!("aperture {x} has no small exact fraction")));
        }
        Aperture::new(p1, q1)
    }
}

impl Default for Aperture {
    fn default() -> Self {
        Aperture::ZERO
    }
}

impl fmt::Display for Aperture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Aperture {
    type Err = Error;

    /// Accepts `"0"`, `"2"`, `"1/2"`, and decimal text like `"0.25"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let num: u64 = n
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad aperture numerator in {s:?}")))?;
            let den: u64 = d
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad aperture denominator in {s:?}")))?;
            return Aperture::new(num, den);
        }
        if let Some((whole, frac)) = s.split_once('.') {
            let whole: u64 = if whole.is_empty() {
                0
            } else {
                whole.parse().map_err(|_| Error::Config(format!("bad aperture {s:?}")))?
            };
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 18 {
                return Err(Error::Config(format!("bad aperture {s:?}")));
            }
            let den = 10u64.pow(frac.len() as u32);
            let num = whole
                .checked_mul(den)
                .and_then(|w| w.checked_add(frac.parse::<u64>().unwrap()))
                .ok_or_else(|| Error::Config(format!("aperture {s:?} out of range")))?;
            return Aperture::new(num, den);
        }
        let num: u64 = s.parse().map_err(|_| Error::Config(format!("bad aperture {s:?}")))?;
        Aperture::new(num, 1)
    }
}

impl Serialize for Aperture {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Aperture {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(de)? {
            Raw::Text(s) => s.parse().map_err(D::Error::custom),
            Raw::Number(x) => Aperture::from_f64(x).map_err(D::Error::custom),
        }
    }
}

/// Problem-instance geometry: `n` hyperplanes and aperture `a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n: usize,
    #[serde(default)]
    pub a: Aperture,
}

impl LatticeSpec {
    pub fn new(n: usize, a: Aperture) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        Ok(LatticeSpec { n, a })
    }

    /// Shorthand for aperture zero.
    pub fn known_start(n: usize) -> Result<Self> {
        LatticeSpec::new(n, Aperture::ZERO)
    }

    /// The extra height allowance `floor(a*n)` of every column.
    pub fn height_margin(&self) -> i64 {
        self.a.floor_mul(self.n)
    }

    /// Height bound of column `i`: sites satisfy `|u| <= i + margin`.
    pub fn column_bound(&self, i: i64) -> i64 {
        i + self.height_margin()
    }

    /// Membership test against the region, including the parity constraint.
    pub fn contains(&self, s: Site) -> bool {
        s.x1 >= 0 && s.x1 < self.n as i64 && (s.x1 - s.x2) % 2 == 0 && s.x2.abs() <= self.column_bound(s.x1)
    }
}

/// A lattice node (or a coarse-grid node when used by the renormalization
/// machinery; coarse grids drop the parity constraint).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x1: i64,
    pub x2: i64,
}

impl Site {
    pub fn new(x1: i64, x2: i64) -> Self {
        Site { x1, x2 }
    }
}

/// The light-cone relation: `x` and `y` are related iff they sit on
/// distinct hyperplanes and their height gap does not exceed their column
/// gap. The relation is symmetric and, by convention, irreflexive (the
/// kernel matrix has zero diagonal).
pub fn equivalent(x: Site, y: Site) -> bool {
    x.x1 != y.x1 && (x.x2 - y.x2).abs() <= (x.x1 - y.x1).abs()
}

/// One column of a [`SiteSet`]: heights form the arithmetic progression
/// `lo, lo+step, ..., hi`. `offset` is the rank of `(x1, lo)` in the
/// whole set's ordering.
#[derive(Clone, Copy, Debug)]
pub struct Column {
    pub x1: i64,
    pub lo: i64,
    pub hi: i64,
    pub step: i64,
    pub offset: usize,
}

impl Column {
    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1) as usize
    }

    pub fn contains_height(&self, u: i64) -> bool {
        u >= self.lo && u <= self.hi && (u - self.lo) % self.step == 0
    }

    pub fn height_index(&self, u: i64) -> Option<usize> {
        if self.contains_height(u) {
            Some(((u - self.lo) / self.step) as usize)
        } else {
            None
        }
    }
}

/// An ordered finite set of sites, sorted by `x1` then `x2`, stored
/// column-wise. Every column must be an arithmetic progression with the
/// set's canonical step (2 on parity-constrained lattices, 1 on coarse
/// grids); all region, block, and coarse-grid geometries used here have
/// that shape.
#[derive(Clone, Debug)]
pub struct SiteSet {
    columns: Vec<Column>,
    len: usize,
    parity_constrained: bool,
}

impl SiteSet {
    /// Builds the full region of a [`LatticeSpec`] with the default
    /// site budget.
    pub fn from_spec(spec: &LatticeSpec) -> Result<Self> {
        SiteSet::from_spec_with_budget(spec, DEFAULT_SITE_BUDGET)
    }

    pub fn from_spec_with_budget(spec: &LatticeSpec, budget: u128) -> Result<Self> {
        let count = region_site_count(spec);
        if count > budget {
            return Err(Error::SiteBudget { requested: count, budget });
        }
        let margin = spec.height_margin();
        let mut columns = Vec::with_capacity(spec.n);
        let mut offset = 0usize;
        for i in 0..spec.n as i64 {
            let m = i + margin;
            let shift = (m + i).rem_euclid(2);
            let (lo, hi) = (-m + shift, m - shift);
            let col = Column { x1: i, lo, hi, step: 2, offset };
            offset += col.len();
            columns.push(col);
        }
        Ok(SiteSet { columns, len: offset, parity_constrained: true })
    }

    /// Builds a set from explicit sites. Used for coarse grids, block
    /// restrictions, and JSON fixtures.
    pub fn from_sites(mut sites: Vec<Site>, parity_constrained: bool) -> Result<Self> {
        sites.sort();
        let step = if parity_constrained { 2 } else { 1 };
        let mut columns: Vec<Column> = Vec::new();
        let mut offset = 0usize;
        let mut i = 0;
        while i < sites.len() {
            let x1 = sites[i].x1;
            let lo = sites[i].x2;
            if parity_constrained && (x1 - lo).rem_euclid(2) != 0 {
                return Err(Error::IrregularSites(format!("site ({x1},{lo}) breaks the parity constraint")));
            }
            let mut hi = lo;
            let mut j = i + 1;
            while j < sites.len() && sites[j].x1 == x1 {
                if sites[j].x2 == hi {
                    return Err(Error::IrregularSites(format!("duplicate site ({x1},{hi})")));
                }
                if sites[j].x2 != hi + step {
                    return Err(Error::IrregularSites(format!(
                        "column {x1} is not an arithmetic progression with step {step}"
                    )));
                }
                hi = sites[j].x2;
                j += 1;
            }
            let col = Column { x1, lo, hi, step, offset };
            offset += col.len();
            columns.push(col);
            i = j;
        }
        Ok(SiteSet { columns, len: offset, parity_constrained })
    }

    /// Builds a set directly from column descriptions (must be sorted by
    /// `x1`, nonoverlapping, with consistent `lo..hi` progressions).
    pub(crate) fn from_columns(raw: Vec<(i64, i64, i64)>, parity_constrained: bool) -> Result<Self> {
        let step = if parity_constrained { 2 } else { 1 };
        let mut columns = Vec::with_capacity(raw.len());
        let mut offset = 0usize;
        let mut last_x1 = i64::MIN;
        for (x1, lo, hi) in raw {
            if x1 <= last_x1 {
                return Err(Error::IrregularSites("columns out of order".into()));
            }
            if hi < lo || (hi - lo) % step != 0 {
                return Err(Error::IrregularSites(format!("bad column range {lo}..={hi} step {step}")));
            }
            last_x1 = x1;
            let col = Column { x1, lo, hi, step, offset };
            offset += col.len();
            columns.push(col);
        }
        Ok(SiteSet { columns, len: offset, parity_constrained })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn parity_constrained(&self) -> bool {
        self.parity_constrained
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_for_x1(&self, x1: i64) -> Option<&Column> {
        self.columns.binary_search_by_key(&x1, |c| c.x1).ok().map(|i| &self.columns[i])
    }

    /// Ordinal of a site in the `(x1, x2)` ordering.
    pub fn index_of(&self, s: Site) -> Option<usize> {
        let col = self.column_for_x1(s.x1)?;
        col.height_index(s.x2).map(|k| col.offset + k)
    }

    pub fn contains(&self, s: Site) -> bool {
        self.index_of(s).is_some()
    }

    /// The site at a given ordinal.
    pub fn site(&self, index: usize) -> Site {
        let c = self.columns.partition_point(|c| c.offset <= index) - 1;
        let col = &self.columns[c];
        Site::new(col.x1, col.lo + col.step * (index - col.offset) as i64)
    }

    pub fn iter(&self) -> impl Iterator<Item = Site> + '_ {
        self.columns.iter().flat_map(|c| (0..c.len()).map(move |k| Site::new(c.x1, c.lo + c.step * k as i64)))
    }

    /// JSON fixture form: an array of `[x1, x2]` pairs in set order.
    pub fn to_json(&self) -> String {
        let pairs: Vec<[i64; 2]> = self.iter().map(|s| [s.x1, s.x2]).collect();
        serde_json::to_string(&pairs).expect("pairs serialize")
    }

    pub fn from_json(text: &str, parity_constrained: bool) -> Result<Self> {
        let pairs: Vec<[i64; 2]> = serde_json::from_str(text)?;
        SiteSet::from_sites(pairs.into_iter().map(|[a, b]| Site::new(a, b)).collect(), parity_constrained)
    }
}

/// Closed-form count of the region's sites, column by column.
pub fn region_site_count(spec: &LatticeSpec) -> u128 {
    let margin = spec.height_margin();
    (0..spec.n as i64)
        .map(|i| {
            let m = i + margin;
            let shift = (m + i).rem_euclid(2);
            ((m - shift) - (-m + shift)) as u128 / 2 + 1
        })
        .sum()
}

/// A directed left-to-right crossing: site `i` is `(i, heights[i])` and
/// consecutive heights differ by exactly one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirectedPath {
    heights: Vec<i64>,
}

impl DirectedPath {
    pub fn new(heights: Vec<i64>) -> Result<Self> {
        if heights.is_empty() {
            return Err(Error::Config("a path must visit at least one hyperplane".into()));
        }
        for w in heights.windows(2) {
            if (w[1] - w[0]).abs() != 1 {
                return Err(Error::Config(format!("non-diagonal step {} -> {}", w[0], w[1])));
            }
        }
        Ok(DirectedPath { heights })
    }

    /// The deterministic reference path: lowest legal start, then
    /// alternating up/down steps.
    pub fn zigzag(spec: &LatticeSpec) -> Self {
        let start = start_heights(spec)[0];
        let heights = (0..spec.n as i64).map(|i| start + i.rem_euclid(2)).collect();
        DirectedPath { heights }
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    pub fn site(&self, i: usize) -> Site {
        Site::new(i as i64, self.heights[i])
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.heights.iter().enumerate().map(|(i, &h)| Site::new(i as i64, h))
    }

    /// Checks that every visited site lies in `sites` and that the path
    /// spans all of its hyperplanes.
    pub fn is_valid_in(&self, sites: &SiteSet) -> bool {
        self.heights.len() == sites.columns().len()
            && self.sites().all(|s| sites.contains(s))
    }
}

/// Strategies for drawing a single path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Alternates `h0, h0+1, h0, h0+1, ...`.
    Zigzag,
    /// Increases height every step, reflecting at the region boundary.
    MaxDrift,
    /// I.i.d. up/down steps; a step that would exit the region is
    /// replaced by the opposite step.
    UniformReflected,
}

fn start_heights(spec: &LatticeSpec) -> Vec<i64> {
    let m = spec.height_margin();
    let shift = m.rem_euclid(2); // column 0 parity is even
    ((-m + shift)..=(m - shift)).step_by(2).collect()
}

/// Draws a path of the requested kind. The start height is forced for
/// `a = 0` and uniform over the legal column-0 heights otherwise.
pub fn sample_path<R: Rng + ?Sized>(spec: &LatticeSpec, kind: PathKind, rng: &mut R) -> DirectedPath {
    let starts = start_heights(spec);
    let start = if starts.len() == 1 { starts[0] } else { starts[rng.gen_range(0..starts.len())] };
    let n = spec.n as i64;
    let mut heights = Vec::with_capacity(spec.n);
    heights.push(start);
    let mut h = start;
    for i in 1..n {
        let step = match kind {
            PathKind::Zigzag => {
                if i % 2 == 1 {
                    1
                } else {
                    -1
                }
            }
            PathKind::MaxDrift => 1,
            PathKind::UniformReflected => {
                if rng.gen::<bool>() {
                    1
                } else {
                    -1
                }
            }
        };
        let bound = spec.column_bound(i);
        h = if (h + step).abs() <= bound { h + step } else { h - step };
        heights.push(h);
    }
    DirectedPath { heights }
}

/// Every directed crossing of the region, each exactly once, in
/// depth-first order (start heights ascending, down-step before up-step).
pub fn enumerate_paths(spec: &LatticeSpec) -> Result<Vec<DirectedPath>> {
    enumerate_paths_with_budget(spec, DEFAULT_PATH_BUDGET)
}

pub fn enumerate_paths_with_budget(spec: &LatticeSpec, budget: u128) -> Result<Vec<DirectedPath>> {
    let starts = start_heights(spec);
    // Either forward step stays inside the region (the bound grows with
    // the column index), so the count is exact, not just an upper bound.
    let requested = (starts.len() as u128)
        .checked_mul(1u128.checked_shl(spec.n as u32 - 1).unwrap_or(u128::MAX))
        .unwrap_or(u128::MAX);
    if requested > budget {
        return Err(Error::PathBudget { requested, budget });
    }
    let mut out = Vec::with_capacity(requested as usize);
    let mut prefix = Vec::with_capacity(spec.n);
    for &s in &starts {
        prefix.push(s);
        extend_all(spec, &mut prefix, &mut out);
        prefix.pop();
    }
    Ok(out)
}

fn extend_all(spec: &LatticeSpec, prefix: &mut Vec<i64>, out: &mut Vec<DirectedPath>) {
    if prefix.len() == spec.n {
        out.push(DirectedPath { heights: prefix.clone() });
        return;
    }
    let i = prefix.len() as i64;
    let h = *prefix.last().unwrap();
    let bound = spec.column_bound(i);
    for step in [-1i64, 1] {
        if (h + step).abs() <= bound {
            prefix.push(h + step);
            extend_all(spec, prefix, out);
            prefix.pop();
        }
    }
}

/// Which grid a generalized path's cells refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellGrid {
    /// Parity-constrained lattice: doubleton gap 2, neighbor gap 1.
    Lattice,
    /// Coarse block grid: doubleton gap 1, neighbor gap at most 1.
    Coarse,
}

/// A per-hyperplane cell of 0, 1, or 2 heights; the image of a genuine
/// path under coarse-graining, or a hand-built anomaly support.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralizedPath {
    pub cells: Vec<Vec<i64>>,
    pub grid: CellGrid,
}

impl GeneralizedPath {
    pub fn new(cells: Vec<Vec<i64>>, grid: CellGrid) -> Self {
        GeneralizedPath { cells, grid }
    }

    /// Cells must have at most two vertically adjacent heights, and
    /// consecutive nonempty cells must contain a neighboring pair.
    pub fn is_valid(&self) -> bool {
        let (pair_gap, neigh): (i64, fn(i64) -> bool) = match self.grid {
            CellGrid::Lattice => (2, |d| d == 1),
            CellGrid::Coarse => (1, |d| d <= 1),
        };
        for cell in &self.cells {
            match cell.as_slice() {
                [] | [_] => {}
                [a, b] => {
                    if (a - b).abs() != pair_gap {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        for w in self.cells.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            if prev.is_empty() || cur.is_empty() {
                continue;
            }
            let ok = prev.iter().any(|&a| cur.iter().any(|&b| neigh((a - b).abs())));
            if !ok {
                return false;
            }
        }
        true
    }

    pub fn max_cell_width(&self) -> usize {
        self.cells.iter().map(|c| c.len()).max().unwrap_or(0)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}
