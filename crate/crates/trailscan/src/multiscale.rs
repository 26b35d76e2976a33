//! Renormalization machinery: the scale schedule, the hierarchical block
//! partition, coarse-grained grids, the recursive quadratic statistic,
//! path projection, good-block labeling, and the exact signal recursion.
//!
//! A schedule fixes block sides `n_0 > n_1 > ... > n_K`. Level-K blocks
//! carry raw lattice sites; every shallower block carries the coarse grid
//! of its children. The recursive statistic evaluates the normalized
//! kernel quadratic form bottom-up, treating each level's block values as
//! the scenery of the next coarser grid.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{entry, KernelView, Neumaier, Scenery};
use crate::lattice::{CellGrid, DirectedPath, GeneralizedPath, LatticeSpec, Site, SiteSet};

/// Minimum block side the automatic schedule will accept.
pub const MIN_AUTO_BLOCK_SIDE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConstants {
    pub c: f64,
    pub c1: f64,
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        // The analysis never pins these; thresholds are calibrated
        // empirically anyway, so unit/zero defaults are used.
        ScheduleConstants { c: 1.0, c1: 0.0 }
    }
}

/// The coarse-graining depth `K`, the exponents `eps_1..eps_K`, and the
/// resulting block sides `n_0 > n_1 > ... > n_K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub k: usize,
    pub eps: Vec<f64>,
    pub block_sides: Vec<usize>,
    pub constants: ScheduleConstants,
}

impl ScaleSchedule {
    /// The exponent sequence that maximizes the signal product at depth
    /// `k`: `1 - eps_s = 1/(2^(k-s+2) - 1)`.
    pub fn eps_closed_form(k: usize) -> Vec<f64> {
        (1..=k).map(|s| 1.0 - 1.0 / (2f64.powi((k - s + 2) as i32) - 1.0)).collect()
    }

    /// Solves `2^(K+1) (ln(c mu sqrt(ln n)) - C1) = ln ln n` and rounds.
    /// Returns 0 when the log factor is nonpositive.
    pub fn depth_from_equation(ln_ln_n: f64, log_term: f64) -> usize {
        if log_term <= 0.0 || ln_ln_n <= 0.0 {
            return 0;
        }
        let k = (ln_ln_n / log_term).log2() - 1.0;
        k.round().max(0.0) as usize
    }

    /// Automatic schedule for signal strength `mu`: depth from the
    /// closed-form equation, exponents from `eps_closed_form`, block
    /// sides by iterated round-half-up, then the depth is truncated until
    /// the sides are strictly decreasing with `n_K >= 8`.
    pub fn auto(n: usize, mu: f64, constants: ScheduleConstants) -> Result<Self> {
        if n < MIN_AUTO_BLOCK_SIDE {
            return Err(Error::Schedule(format!("n = {n} is below the minimum block side")));
        }
        if !(mu > 0.0) {
            return Err(Error::Schedule(format!("mu must be positive, got {mu}")));
        }
        if !(constants.c > 0.0) {
            return Err(Error::Schedule(format!("constant c must be positive, got {}", constants.c)));
        }
        let ln_n = (n as f64).ln();
        let log_term = (constants.c * mu * ln_n.sqrt()).ln() - constants.c1;
        let mut k = Self::depth_from_equation(ln_n.ln(), log_term).min(60);
        loop {
            let eps = Self::eps_closed_form(k);
            match Self::sides_from_eps(n, &eps) {
                Some(sides) if *sides.last().unwrap() >= MIN_AUTO_BLOCK_SIDE => {
                    return Ok(ScaleSchedule { k, eps, block_sides: sides, constants });
                }
                _ if k == 0 => unreachable!("k = 0 always yields the trivial schedule"),
                _ => k -= 1,
            }
        }
    }

    /// Explicit block sides, bypassing the closed form (needed at desk
    /// scale where the equation yields depth 0). `block_sides[0]` must be
    /// `n` and the sides must be strictly decreasing.
    pub fn manual(block_sides: Vec<usize>) -> Result<Self> {
        if block_sides.is_empty() {
            return Err(Error::Schedule("block_sides must contain at least n itself".into()));
        }
        for w in block_sides.windows(2) {
            if w[1] >= w[0] || w[1] == 0 {
                return Err(Error::Schedule(format!("block sides must strictly decrease, got {block_sides:?}")));
            }
        }
        let eps = block_sides
            .windows(2)
            .map(|w| (w[1] as f64).ln() / (w[0] as f64).ln())
            .collect::<Vec<_>>();
        Ok(ScaleSchedule {
            k: block_sides.len() - 1,
            eps,
            block_sides,
            constants: ScheduleConstants::default(),
        })
    }

    fn sides_from_eps(n: usize, eps: &[f64]) -> Option<Vec<usize>> {
        let mut sides = vec![n];
        for &e in eps {
            let prev = *sides.last().unwrap();
            let next = ((prev as f64).powf(e) + 0.5).floor() as usize;
            if next == 0 || next >= prev {
                return None;
            }
            sides.push(next);
        }
        Some(sides)
    }

    pub fn n(&self) -> usize {
        self.block_sides[0]
    }

    /// Side of level-`k` blocks.
    pub fn side(&self, k: usize) -> usize {
        self.block_sides[k]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockGeometry {
    Square,
    BoundaryTruncated,
}

/// One block of the hierarchy. Level-K blocks carry their lattice sites
/// (plus gather ranges into the global scenery); shallower blocks carry
/// the coarse grid of their children.
#[derive(Clone, Debug)]
pub struct Block {
    pub level: usize,
    pub parent: Option<usize>,
    /// Children indices into the next level, sorted by grid coordinate;
    /// the order matches the coarse kernel's site order.
    pub children: Vec<usize>,
    /// Coordinate of this block in its parent's coarse grid (level 1 uses
    /// the global grid anchored at the origin, so rows may be negative).
    pub grid: (i64, i64),
    /// Absolute lattice column range `[lo, hi)`.
    pub cols: (i64, i64),
    /// Absolute lattice height range `[lo, hi)`.
    pub rows: (i64, i64),
    pub geometry: BlockGeometry,
    pub kernel: KernelView,
    /// Level-K only: per block column, the scenery gather range
    /// `(global_start, len)`.
    gather: Vec<(usize, usize)>,
}

impl Block {
    pub fn col_width(&self) -> i64 {
        self.cols.1 - self.cols.0
    }

    fn contains_site(&self, s: Site) -> bool {
        s.x1 >= self.cols.0 && s.x1 < self.cols.1 && s.x2 >= self.rows.0 && s.x2 < self.rows.1
    }

    fn restricted(&self, x: &Scenery) -> Scenery {
        let mut out = Vec::with_capacity(self.kernel.sites().len());
        for &(start, len) in &self.gather {
            out.extend_from_slice(&x.values()[start..start + len]);
        }
        Scenery::new(out)
    }
}

/// Per-block signal value and path labels for one path instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalNode {
    pub nu: f64,
    pub good: bool,
    pub touched: bool,
}

/// Signal values and good/touched flags for every block of a tree.
#[derive(Clone, Debug)]
pub struct SignalTree {
    pub levels: Vec<Vec<SignalNode>>,
}

impl SignalTree {
    pub fn root(&self) -> &SignalNode {
        &self.levels[0][0]
    }

    pub fn node(&self, level: usize, index: usize) -> &SignalNode {
        &self.levels[level][index]
    }
}

/// The hierarchical partition of a region under a schedule.
#[derive(Clone, Debug)]
pub struct PartitionTree {
    spec: LatticeSpec,
    schedule: ScaleSchedule,
    lattice: Arc<SiteSet>,
    /// `levels[k]` holds the level-k blocks; level 0 is the root.
    levels: Vec<Vec<Block>>,
}

impl PartitionTree {
    pub fn build(spec: &LatticeSpec, schedule: &ScaleSchedule) -> Result<Self> {
        let lattice = Arc::new(SiteSet::from_spec(spec)?);
        Self::build_on(spec, schedule, lattice)
    }

    /// Builds against an existing site set for the same spec.
    pub fn build_on(spec: &LatticeSpec, schedule: &ScaleSchedule, lattice: Arc<SiteSet>) -> Result<Self> {
        if schedule.n() != spec.n {
            return Err(Error::Schedule(format!(
                "schedule is for n = {} but the region has n = {}",
                schedule.n(),
                spec.n
            )));
        }
        let depth = schedule.k;
        let margin = spec.height_margin();
        let top = (spec.n as i64 - 1) + margin;

        if depth == 0 {
            let root = leaf_block(spec, &lattice, None, (0, 0), (0, spec.n as i64), (-top, top + 1), 0)
                .expect("the full region is nonempty");
            return Ok(PartitionTree {
                spec: *spec,
                schedule: schedule.clone(),
                lattice,
                levels: vec![vec![root]],
            });
        }

        let mut levels: Vec<Vec<Block>> = Vec::with_capacity(depth + 1);
        // Root placeholder; its coarse kernel is attached after level 1.
        levels.push(Vec::new());

        // Level 1 lives on the global grid: block (u1, u2) covers columns
        // [u1*n1, u1*n1 + n1) and heights [u2*n1, u2*n1 + n1).
        let m1 = schedule.side(1) as i64;
        let mut level1: Vec<Block> = Vec::new();
        let u1_max = (spec.n as i64 + m1 - 1) / m1;
        for u1 in 0..u1_max {
            let c_lo = u1 * m1;
            let c_hi = (c_lo + m1).min(spec.n as i64);
            let h_top = (c_hi - 1) + margin;
            for u2 in (-h_top).div_euclid(m1)..=h_top.div_euclid(m1) {
                let r_lo = u2 * m1;
                let r_hi = r_lo + m1;
                if let Some(block) =
                    make_block(spec, schedule, &lattice, 0, (u1, u2), (c_lo, c_hi), (r_lo, r_hi), 1, depth)
                {
                    level1.push(block);
                }
            }
        }
        let root = coarse_block(None, (0, 0), (0, spec.n as i64), (-top, top + 1), 0, &level1);
        levels[0].push(root);
        levels.push(level1);

        // Deeper levels subdivide each parent, anchored at the parent's
        // own corner; the last block column/row in a parent may be
        // truncated when the child side does not divide the parent side.
        for k in 1..depth {
            let m = schedule.side(k + 1) as i64;
            let mut next: Vec<Block> = Vec::new();
            let parents = std::mem::take(&mut levels[k]);
            let mut rebuilt_parents = Vec::with_capacity(parents.len());
            for (pi, parent) in parents.into_iter().enumerate() {
                let mut parent = parent;
                let mut child_blocks: Vec<Block> = Vec::new();
                let w_cols = parent.cols.1 - parent.cols.0;
                let w_rows = parent.rows.1 - parent.rows.0;
                for u1 in 0..(w_cols + m - 1) / m {
                    let c_lo = parent.cols.0 + u1 * m;
                    let c_hi = (c_lo + m).min(parent.cols.1);
                    for u2 in 0..(w_rows + m - 1) / m {
                        let r_lo = parent.rows.0 + u2 * m;
                        let r_hi = (r_lo + m).min(parent.rows.1);
                        if let Some(block) =
                            make_block(spec, schedule, &lattice, pi, (u1, u2), (c_lo, c_hi), (r_lo, r_hi), k + 1, depth)
                        {
                            child_blocks.push(block);
                        }
                    }
                }
                // Attach the parent's coarse grid and record child indices.
                let coarse = coarse_block(
                    parent.parent,
                    parent.grid,
                    parent.cols,
                    parent.rows,
                    parent.level,
                    &child_blocks,
                );
                parent.kernel = coarse.kernel;
                parent.children = coarse.children.iter().map(|&ci| ci + next.len()).collect();
                for mut b in child_blocks {
                    b.parent = Some(pi);
                    next.push(b);
                }
                rebuilt_parents.push(parent);
            }
            levels[k] = rebuilt_parents;
            levels.push(next);
        }

        Ok(PartitionTree { spec: *spec, schedule: schedule.clone(), lattice, levels })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn schedule(&self) -> &ScaleSchedule {
        &self.schedule
    }

    pub fn lattice(&self) -> &Arc<SiteSet> {
        &self.lattice
    }

    pub fn depth(&self) -> usize {
        self.schedule.k
    }

    pub fn level(&self, k: usize) -> &[Block] {
        &self.levels[k]
    }

    /// Bottom-up evaluation of the nested normalized quadratic form.
    pub fn recursive_statistic(&self, x: &Scenery) -> Result<f64> {
        if x.len() != self.lattice.len() {
            return Err(Error::SceneryMismatch { got: x.len(), want: self.lattice.len() });
        }
        let depth = self.depth();
        let mut q: Vec<f64> = self.levels[depth]
            .iter()
            .map(|b| b.kernel.quadratic_form(&b.restricted(x), true))
            .collect::<Result<_>>()?;
        for k in (0..depth).rev() {
            q = self.levels[k]
                .iter()
                .map(|b| {
                    let coarse = Scenery::new(b.children.iter().map(|&c| q[c]).collect());
                    b.kernel.quadratic_form(&coarse, true)
                })
                .collect::<Result<_>>()?;
        }
        Ok(q[0])
    }

    /// Projects a path onto level `k`: per level-k slab (a vertical band
    /// of `n_k` consecutive columns), the set of block rows the path
    /// visits. The guarantee checked by the slab facts is that each cell
    /// has one or two rows, doubletons vertically adjacent.
    pub fn project_path(&self, path: &DirectedPath, k: usize) -> Result<GeneralizedPath> {
        if k == 0 || k > self.depth() {
            return Err(Error::Config(format!("projection level {k} out of range 1..={}", self.depth())));
        }
        if path.len() != self.spec.n {
            return Err(Error::Config(format!("path has {} columns, region has {}", path.len(), self.spec.n)));
        }
        let side = self.schedule.side(k) as i64;
        let slabs = self.slabs(k);
        let mut cells = Vec::with_capacity(slabs.len());
        for (range, blocks) in slabs {
            let mut rows: Vec<i64> = Vec::new();
            for c in range.0..range.1 {
                let h = path.heights()[c as usize];
                let bi = blocks
                    .iter()
                    .copied()
                    .find(|&bi| self.levels[k][bi].contains_site(Site::new(c, h)))
                    .expect("a path site always lies in some block of its slab");
                let row = self.levels[k][bi].rows.0.div_euclid(side);
                if !rows.contains(&row) {
                    rows.push(row);
                }
            }
            rows.sort_unstable();
            cells.push(rows);
        }
        Ok(GeneralizedPath::new(cells, CellGrid::Coarse))
    }

    /// Level-k blocks grouped by their (shared) column range, in column
    /// order: the slabs of level k.
    fn slabs(&self, k: usize) -> Vec<((i64, i64), Vec<usize>)> {
        let mut by_range: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (bi, b) in self.levels[k].iter().enumerate() {
            by_range.entry(b.cols).or_default().push(bi);
        }
        by_range.into_iter().collect()
    }

    /// Good/touched labels only (all signal values zero).
    pub fn label_good(&self, path: &DirectedPath) -> Result<SignalTree> {
        let mut tree = self.signal_skeleton(path)?;
        for level in &mut tree.levels {
            for node in level {
                node.nu = 0.0;
            }
        }
        Ok(tree)
    }

    /// Exact signal recursion for a planted path of strength `mu`:
    /// level-K blocks carry `mu^2` times the normalized restricted
    /// indicator form; every shallower block carries the normalized
    /// coarse form of its touched children's signals.
    pub fn signal_recursion(&self, path: &DirectedPath, mu: f64) -> Result<SignalTree> {
        if !(mu >= 0.0) {
            return Err(Error::Config(format!("mu must be nonnegative, got {mu}")));
        }
        let mut tree = self.signal_skeleton(path)?;
        let depth = self.depth();
        // Leaf signals: direct pair sums over the path's sites in the
        // block, independent of the sliding-window evaluator.
        let path_sites: Vec<Site> = path.sites().collect();
        for (bi, b) in self.levels[depth].iter().enumerate() {
            if !tree.levels[depth][bi].touched {
                continue;
            }
            let inside: Vec<Site> = path_sites.iter().copied().filter(|&s| b.contains_site(s)).collect();
            let mut raw = Neumaier::new();
            for (p, &sp) in inside.iter().enumerate() {
                for (q, &sq) in inside.iter().enumerate() {
                    if p != q {
                        raw.add(entry(sp, sq));
                    }
                }
            }
            let norm = b.kernel.normalization();
            tree.levels[depth][bi].nu = if norm > 0.0 { mu * mu * raw.total() / norm } else { 0.0 };
        }
        for k in (0..depth).rev() {
            for (bi, b) in self.levels[k].iter().enumerate() {
                if !tree.levels[k][bi].touched {
                    continue;
                }
                let touched: Vec<(Site, f64)> = b
                    .children
                    .iter()
                    .filter(|&&c| tree.levels[k + 1][c].touched)
                    .map(|&c| {
                        let g = self.levels[k + 1][c].grid;
                        (Site::new(g.0, g.1), tree.levels[k + 1][c].nu)
                    })
                    .collect();
                let mut raw = Neumaier::new();
                for (p, &(sp, np)) in touched.iter().enumerate() {
                    for (q, &(sq, nq)) in touched.iter().enumerate() {
                        if p != q {
                            raw.add(np * nq * entry(sp, sq));
                        }
                    }
                }
                let norm = b.kernel.normalization();
                tree.levels[k][bi].nu = if norm > 0.0 { raw.total() / norm } else { 0.0 };
            }
        }
        Ok(tree)
    }

    /// Touched/good flags for every block; `nu` left at zero.
    fn signal_skeleton(&self, path: &DirectedPath) -> Result<SignalTree> {
        if path.len() != self.spec.n {
            return Err(Error::Config(format!("path has {} columns, region has {}", path.len(), self.spec.n)));
        }
        let depth = self.depth();
        let mut levels: Vec<Vec<SignalNode>> = self
            .levels
            .iter()
            .map(|l| vec![SignalNode { nu: 0.0, good: false, touched: false }; l.len()])
            .collect();

        // Level K: visits are the block columns whose path site lies in
        // the block; good needs at least half the block's column span.
        for (bi, b) in self.levels[depth].iter().enumerate() {
            let visits = (b.cols.0..b.cols.1)
                .filter(|&c| {
                    let h = path.heights()[c as usize];
                    h >= b.rows.0 && h < b.rows.1
                })
                .count() as i64;
            levels[depth][bi].touched = visits > 0;
            levels[depth][bi].good = 2 * visits >= b.col_width();
        }

        // Shallower levels: good needs good children in at least half of
        // the child slabs (distinct child column indices).
        for k in (0..depth).rev() {
            let child_side = self.schedule.side(k + 1) as i64;
            for (bi, b) in self.levels[k].iter().enumerate() {
                let mut touched = false;
                let mut good_slabs: Vec<i64> = Vec::new();
                for &c in &b.children {
                    let node = levels[k + 1][c];
                    touched |= node.touched;
                    if node.good {
                        let u1 = self.levels[k + 1][c].grid.0;
                        if !good_slabs.contains(&u1) {
                            good_slabs.push(u1);
                        }
                    }
                }
                let n_slabs = (b.col_width() + child_side - 1) / child_side;
                levels[k][bi].touched = touched;
                levels[k][bi].good = 2 * good_slabs.len() as i64 >= n_slabs;
            }
        }
        Ok(SignalTree { levels })
    }

    /// Checks that every lattice site lies in exactly one level-K block.
    pub fn partition_is_exact(&self) -> bool {
        let depth = self.depth();
        let mut seen = vec![0u32; self.lattice.len()];
        for b in &self.levels[depth] {
            for &(start, len) in &b.gather {
                for s in seen[start..start + len].iter_mut() {
                    *s += 1;
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }
}

fn block_sites(spec: &LatticeSpec, cols: (i64, i64), rows: (i64, i64)) -> Option<Vec<(i64, i64, i64)>> {
    let mut out = Vec::new();
    for c in cols.0..cols.1.min(spec.n as i64) {
        if c < 0 {
            continue;
        }
        let bound = spec.column_bound(c);
        let lo_region = -bound;
        let hi_region = bound;
        let lo = lo_region.max(rows.0);
        let hi = hi_region.min(rows.1 - 1);
        // Snap to the column's parity grid.
        let lo = lo + (lo - c).rem_euclid(2);
        let hi = hi - (hi - c).rem_euclid(2);
        if lo <= hi {
            out.push((c, lo, hi));
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

fn geometry_of(spec: &LatticeSpec, cols: (i64, i64), rows: (i64, i64), side: i64) -> BlockGeometry {
    let full = cols.1 - cols.0 == side && rows.1 - rows.0 == side;
    let bound = spec.column_bound(cols.0);
    let inside = rows.0 >= -bound && rows.1 <= bound + 1;
    if full && inside {
        BlockGeometry::Square
    } else {
        BlockGeometry::BoundaryTruncated
    }
}

fn leaf_block(
    spec: &LatticeSpec,
    lattice: &Arc<SiteSet>,
    parent: Option<usize>,
    grid: (i64, i64),
    cols: (i64, i64),
    rows: (i64, i64),
    level: usize,
) -> Option<Block> {
    let col_ranges = block_sites(spec, cols, rows)?;
    let mut gather = Vec::with_capacity(col_ranges.len());
    for &(c, lo, hi) in &col_ranges {
        let col = lattice.column_for_x1(c).expect("region column exists");
        let start = col.offset + col.height_index(lo).expect("height on the region grid");
        gather.push((start, ((hi - lo) / 2 + 1) as usize));
    }
    let sites = SiteSet::from_columns(col_ranges, true).expect("block columns are parity progressions");
    let side = (cols.1 - cols.0).max(rows.1 - rows.0);
    Some(Block {
        level,
        parent,
        children: Vec::new(),
        grid,
        cols,
        rows,
        geometry: geometry_of(spec, cols, rows, side),
        kernel: KernelView::from_sites(sites),
        gather,
    })
}

fn make_block(
    spec: &LatticeSpec,
    schedule: &ScaleSchedule,
    lattice: &Arc<SiteSet>,
    parent: usize,
    grid: (i64, i64),
    cols: (i64, i64),
    rows: (i64, i64),
    level: usize,
    depth: usize,
) -> Option<Block> {
    let side = schedule.side(level) as i64;
    if level == depth {
        let mut b = leaf_block(spec, lattice, Some(parent), grid, cols, rows, level)?;
        b.geometry = geometry_of(spec, cols, rows, side);
        Some(b)
    } else {
        // Intermediate block: keep only if its rectangle meets the region;
        // the coarse kernel is attached once its children exist.
        block_sites(spec, cols, rows)?;
        Some(Block {
            level,
            parent: Some(parent),
            children: Vec::new(),
            grid,
            cols,
            rows,
            geometry: geometry_of(spec, cols, rows, side),
            kernel: KernelView::from_sites(SiteSet::from_sites(Vec::new(), false).expect("empty set")),
            gather: Vec::new(),
        })
    }
}

/// Builds an internal block whose kernel is the coarse grid of the given
/// children; `children` indices are positions within `child_blocks`.
fn coarse_block(
    parent: Option<usize>,
    grid: (i64, i64),
    cols: (i64, i64),
    rows: (i64, i64),
    level: usize,
    child_blocks: &[Block],
) -> Block {
    let mut order: Vec<usize> = (0..child_blocks.len()).collect();
    order.sort_by_key(|&i| child_blocks[i].grid);
    let coords: Vec<Site> = order.iter().map(|&i| Site::new(child_blocks[i].grid.0, child_blocks[i].grid.1)).collect();
    let coarse = SiteSet::from_sites(coords, false).expect("coarse grid columns are contiguous");
    Block {
        level,
        parent,
        children: order,
        grid,
        cols,
        rows,
        geometry: BlockGeometry::BoundaryTruncated,
        kernel: KernelView::from_sites(coarse),
        gather: Vec::new(),
    }
}
