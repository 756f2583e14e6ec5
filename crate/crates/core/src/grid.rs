//! Adaptive one-dimensional posterior mesh.
//!
//! The posterior over `omega` is stored as a sorted, contiguous list of cells.
//! Each cell carries the probability mass of its interval and is evaluated at
//! its centroid (midpoint rule). After every Bayes update the mesh is adapted:
//!
//! * cells whose midpoint-rule error density `|f''| l^2` (with `f = omega * w`)
//!   exceeds `e_th` are split in half ([`refine`]);
//! * runs of adjacent cells whose masses are all below `w_th` are fused
//!   ([`merge`]).
//!
//! All operations are value-in/value-out.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One mesh element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub left: f64,
    pub centroid: f64,
    pub right: f64,
    pub weight: f64,
}

impl GridCell {
    pub fn new(left: f64, right: f64, weight: f64) -> Self {
        Self {
            left,
            centroid: 0.5 * (left + right),
            right,
            weight,
        }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    /// Splits the cell at its centroid. Returns `None` when the halves would
    /// not be representable as distinct intervals at double precision.
    fn split(&self) -> Option<(GridCell, GridCell)> {
        let (l, c, r) = (self.left, self.centroid, self.right);
        let lo = 0.5 * (l + c);
        let hi = 0.5 * (c + r);
        if !(l < lo && lo < c && c < hi && hi < r) {
            return None;
        }
        let half = 0.5 * self.weight;
        Some((
            GridCell { left: l, centroid: lo, right: c, weight: half },
            GridCell { left: c, centroid: hi, right: r, weight: half },
        ))
    }
}

/// Ordered, contiguous mesh over `[domain_lo, domain_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveGrid {
    cells: Vec<GridCell>,
    pub domain_lo: f64,
    pub domain_hi: f64,
}

/// Per-cell midpoint-rule error density.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDensity(pub Vec<f64>);

impl ErrorDensity {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `n` equal-width cells on `[lo, hi]`, each with mass `1/n`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<AdaptiveGrid> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("grid bounds must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    if n < 3 {
        return Err(invalid(format!("a grid needs at least 3 cells, got {n}")));
    }
    let span = hi - lo;
    let edge = |k: usize| if k == n { hi } else { lo + span * k as f64 / n as f64 };
    let w = 1.0 / n as f64;
    let cells = (0..n).map(|k| GridCell::new(edge(k), edge(k + 1), w)).collect();
    Ok(AdaptiveGrid {
        cells,
        domain_lo: lo,
        domain_hi: hi,
    })
}

impl AdaptiveGrid {
    /// Builds a grid from explicit cells, checking ordering and contiguity.
    pub fn from_cells(cells: Vec<GridCell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(invalid("grid must contain at least one cell"));
        }
        for c in &cells {
            if !(c.left < c.right) {
                return Err(invalid(format!("cell [{}, {}] is empty", c.left, c.right)));
            }
            if !(c.weight >= 0.0) {
                return Err(invalid(format!("cell weight {} is negative", c.weight)));
            }
        }
        for pair in cells.windows(2) {
            if pair[0].right != pair[1].left {
                return Err(invalid(format!(
                    "cells are not contiguous at {} / {}",
                    pair[0].right, pair[1].left
                )));
            }
        }
        let domain_lo = cells[0].left;
        let domain_hi = cells[cells.len() - 1].right;
        Ok(Self {
            cells,
            domain_lo,
            domain_hi,
        })
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn centroids(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().map(|c| c.centroid)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().map(|c| c.weight)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights().sum()
    }

    /// `sum_i omega_i w_i`.
    pub fn mean(&self) -> f64 {
        self.cells.iter().map(|c| c.centroid * c.weight).sum()
    }

    /// Variance of the piecewise-uniform density the mesh represents: spread
    /// of the centroids plus the within-cell term `l^2 / 12`.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.cells
            .iter()
            .map(|c| {
                let d = c.centroid - mean;
                c.weight * (d * d + c.width() * c.width() / 12.0)
            })
            .sum()
    }

    /// Multiplies every cell mass by `f(centroid)` without renormalising.
    pub fn reweight(&self, mut f: impl FnMut(f64) -> f64) -> AdaptiveGrid {
        let cells = self
            .cells
            .iter()
            .map(|c| GridCell { weight: c.weight * f(c.centroid), ..*c })
            .collect();
        AdaptiveGrid { cells, ..*self }
    }

    /// Replaces the cell masses. `weights.len()` must equal the cell count.
    pub fn with_weights(&self, weights: &[f64]) -> Result<AdaptiveGrid> {
        if weights.len() != self.cells.len() {
            return Err(invalid(format!(
                "expected {} weights, got {}",
                self.cells.len(),
                weights.len()
            )));
        }
        let cells = self
            .cells
            .iter()
            .zip(weights)
            .map(|(c, &weight)| GridCell { weight, ..*c })
            .collect();
        Ok(AdaptiveGrid { cells, ..*self })
    }

    /// Checks sortedness, exact contiguity, positive widths and non-negative mass.
    pub fn check_invariants(&self) -> Result<()> {
        AdaptiveGrid::from_cells(self.cells.clone()).map(|_| ())?;
        for c in &self.cells {
            let tol = 1e-12 * c.width();
            if (c.centroid - 0.5 * (c.left + c.right)).abs() > tol.max(f64::EPSILON * c.centroid.abs()) {
                return Err(invalid(format!("cell centroid {} is off-center", c.centroid)));
            }
        }
        Ok(())
    }
}

/// Derivative at `at` of the quadratic through three points.
fn quadratic_slope(xs: [f64; 3], fs: [f64; 3], at: f64) -> f64 {
    let [x0, x1, x2] = xs;
    let d0 = ((at - x1) + (at - x2)) / ((x0 - x1) * (x0 - x2));
    let d1 = ((at - x0) + (at - x2)) / ((x1 - x0) * (x1 - x2));
    let d2 = ((at - x0) + (at - x1)) / ((x2 - x0) * (x2 - x1));
    fs[0] * d0 + fs[1] * d1 + fs[2] * d2
}

/// Second-order derivative estimate on non-uniform nodes: central three-point
/// stencils in the interior, one-sided three-point stencils at both ends.
fn gradient(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    debug_assert!(n >= 3 && fs.len() == n);
    (0..n)
        .map(|i| {
            let s = i.saturating_sub(1).min(n - 3);
            quadratic_slope(
                [xs[s], xs[s + 1], xs[s + 2]],
                [fs[s], fs[s + 1], fs[s + 2]],
                xs[i],
            )
        })
        .collect()
}

/// Error density `e_i = |f''_i| l_i^2` with `f_i = omega_i w_i`.
pub fn error_density(grid: &AdaptiveGrid) -> Result<ErrorDensity> {
    if grid.len() < 3 {
        return Err(invalid(format!(
            "error density needs at least 3 cells, got {}",
            grid.len()
        )));
    }
    let xs: Vec<f64> = grid.centroids().collect();
    let fs: Vec<f64> = grid.cells.iter().map(|c| c.centroid * c.weight).collect();
    let first = gradient(&xs, &fs);
    let second = gradient(&xs, &first);
    Ok(ErrorDensity(
        grid.cells
            .iter()
            .zip(second)
            .map(|(c, f2)| f2.abs() * c.width() * c.width())
            .collect(),
    ))
}

/// Single refinement pass: each cell with error density above `e_th` is
/// halved once, the children sharing the parent's mass equally.
///
/// Grids with fewer than three cells have no curvature estimate and are
/// returned unchanged.
pub fn refine(grid: &AdaptiveGrid, e_th: f64) -> AdaptiveGrid {
    refine_with_parents(grid, e_th).0
}

/// [`refine`], also returning the index of the input cell each output cell
/// came from.
pub fn refine_with_parents(grid: &AdaptiveGrid, e_th: f64) -> (AdaptiveGrid, Vec<usize>) {
    let Ok(density) = error_density(grid) else {
        return (grid.clone(), (0..grid.len()).collect());
    };
    let mut cells = Vec::with_capacity(grid.len() + grid.len() / 2);
    let mut parents = Vec::with_capacity(cells.capacity());
    for (i, (cell, &e)) in grid.cells.iter().zip(density.values()).enumerate() {
        match (e > e_th).then(|| cell.split()).flatten() {
            Some((a, b)) => {
                cells.extend([a, b]);
                parents.extend([i, i]);
            }
            None => {
                cells.push(*cell);
                parents.push(i);
            }
        }
    }
    (AdaptiveGrid { cells, ..*grid }, parents)
}

/// Repeats [`refine`] until no cell is flagged or `max_passes` is reached.
pub fn refine_multi_pass(grid: &AdaptiveGrid, e_th: f64, max_passes: usize) -> AdaptiveGrid {
    let mut current = grid.clone();
    for _ in 0..max_passes {
        let next = refine(&current, e_th);
        if next.len() == current.len() {
            return next;
        }
        current = next;
    }
    current
}

/// Left-to-right merge sweep. A pair of neighbours whose masses are both below
/// `w_th` becomes one cell spanning both; the result can absorb further
/// neighbours in the same sweep while its mass stays below `w_th`.
pub fn merge(grid: &AdaptiveGrid, w_th: f64) -> AdaptiveGrid {
    merge_with_groups(grid, w_th).0
}

/// [`merge`], also returning the range of input cells fused into each output cell.
pub fn merge_with_groups(grid: &AdaptiveGrid, w_th: f64) -> (AdaptiveGrid, Vec<Range<usize>>) {
    let mut iter = grid.cells.iter().copied().enumerate();
    let Some((_, mut current)) = iter.next() else {
        return (grid.clone(), Vec::new());
    };
    let mut start = 0;
    let mut cells = Vec::with_capacity(grid.len());
    let mut groups = Vec::with_capacity(grid.len());
    for (i, next) in iter {
        if current.weight.max(next.weight) < w_th {
            current = GridCell::new(current.left, next.right, current.weight + next.weight);
        } else {
            cells.push(current);
            groups.push(start..i);
            current = next;
            start = i;
        }
    }
    cells.push(current);
    groups.push(start..grid.len());
    (AdaptiveGrid { cells, ..*grid }, groups)
}

/// Rescales masses to sum to one.
pub fn normalize(grid: &AdaptiveGrid) -> Result<AdaptiveGrid> {
    let total = grid.total_weight();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let cells = grid
        .cells
        .iter()
        .map(|c| GridCell { weight: c.weight / total, ..*c })
        .collect();
    Ok(AdaptiveGrid { cells, ..*grid })
}

/// Composite midpoint rule with `n` equal panels on `[lo, hi]`.
pub fn midpoint_integral(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(n >= 1, "midpoint rule needs at least one panel");
    let h = (hi - lo) / n as f64;
    let sum: f64 = (1..=n)
        .map(|k| f(lo + (2 * k - 1) as f64 * (hi - lo) / (2 * n) as f64))
        .sum();
    h * sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub experiment_index: usize,
    pub cell_left: f64,
    pub cell_centroid: f64,
    pub cell_right: f64,
    pub weight: f64,
}

/// Writes one CSV row per cell, with a header row.
pub fn write_snapshot_csv<W: Write>(writer: W, experiment_index: usize, grid: &AdaptiveGrid) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for c in grid.cells() {
        out.serialize(SnapshotRecord {
            experiment_index,
            cell_left: c.left,
            cell_centroid: c.centroid,
            cell_right: c.right,
            weight: c.weight,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot_csv`].
pub fn read_snapshot_csv<R: std::io::Read>(reader: R) -> Result<(usize, AdaptiveGrid)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut index = None;
    let mut cells = Vec::new();
    for rec in rdr.deserialize() {
        let rec: SnapshotRecord = rec?;
        index.get_or_insert(rec.experiment_index);
        cells.push(GridCell {
            left: rec.cell_left,
            centroid: rec.cell_centroid,
            right: rec.cell_right,
            weight: rec.weight,
        });
    }
    let index = index.ok_or_else(|| invalid("snapshot has no cells"))?;
    Ok((index, AdaptiveGrid::from_cells(cells)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cells_grid(edges: &[f64], weights: &[f64]) -> AdaptiveGrid {
        let cells = edges
            .windows(2)
            .zip(weights)
            .map(|(e, &w)| GridCell::new(e[0], e[1], w))
            .collect();
        AdaptiveGrid::from_cells(cells).unwrap()
    }

    fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> AdaptiveGrid {
        let mut edges = vec![rng.random_range(-2.0..0.0)];
        for _ in 0..n {
            let last = *edges.last().unwrap();
            edges.push(last + rng.random_range(1e-3..0.5));
        }
        let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        normalize(&cells_grid(&edges, &weights)).unwrap()
    }

    #[test]
    fn uniform_examples() {
        let g = uniform_grid(0.0, 1.0, 4).unwrap();
        let c: Vec<f64> = g.centroids().collect();
        assert_eq!(c, vec![0.125, 0.375, 0.625, 0.875]);
        assert!(g.weights().all(|w| w == 0.25));

        assert!(uniform_grid(-1.0, 1.0, 2).is_err());
        assert!(uniform_grid(1.0, 1.0, 5).is_err());

        let g = uniform_grid(0.0, 1.0, 100).unwrap();
        assert!((g.total_weight() - 1.0).abs() < 1e-15);
        assert!(g.cells().iter().all(|c| (c.width() - 0.01).abs() < 1e-15));
        assert_eq!(g.cells()[99].right, 1.0);
        g.check_invariants().unwrap();
    }

    #[test]
    fn error_density_linear_is_zero() {
        let g = uniform_grid(0.0, 1.0, 20).unwrap();
        let e = error_density(&g).unwrap();
        assert_eq!(e.len(), 20);
        assert!(e.values().iter().all(|&v| v < 1e-10));
    }

    #[test]
    fn error_density_quadratic_matches_analytic() {
        // w_i = c * omega_i gives f = c * omega^2 and f'' = 2c everywhere.
        let g = uniform_grid(0.0, 2.0, 16).unwrap();
        let c = 0.3;
        let g = g.reweight(|x| c * x * 16.0);
        let e = error_density(&g).unwrap();
        for (cell, &v) in g.cells().iter().zip(e.values()) {
            let expected = 2.0 * c * cell.width() * cell.width();
            assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        }
    }

    #[test]
    fn error_density_quadratic_nonuniform() {
        let edges = [0.0, 0.1, 0.15, 0.4, 0.45, 0.9, 1.0];
        let g = cells_grid(&edges, &[1.0; 6]);
        let g = g.reweight(|x| 5.0 * x - 1.0); // f = 5 x^2 - x
        let e = error_density(&g).unwrap();
        for (cell, &v) in g.cells().iter().zip(e.values()) {
            let expected = 10.0 * cell.width() * cell.width();
            assert!((v - expected).abs() < 1e-10, "{v} vs {expected}");
        }
    }

    #[test]
    fn error_density_minimal_and_too_small() {
        let g = cells_grid(&[0.0, 0.2, 0.5, 1.0], &[0.2, 0.5, 0.3]);
        let e = error_density(&g).unwrap();
        assert_eq!(e.len(), 3);
        assert!(e.values().iter().all(|v| v.is_finite()));
        let g2 = cells_grid(&[0.0, 0.5, 1.0], &[0.5, 0.5]);
        assert!(error_density(&g2).is_err());
    }

    #[test]
    fn refine_splits_flagged_cell() {
        let g = cells_grid(&[-1.0, 0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        let r = refine(&g, 1e-10);
        let mid: Vec<&GridCell> = r.cells().iter().filter(|c| c.left >= 0.0 && c.right <= 1.0).collect();
        assert_eq!(mid.len(), 2);
        assert_eq!(mid[0].centroid, 0.25);
        assert_eq!(mid[1].centroid, 0.75);
        assert_eq!(mid[0].weight, 0.5);
        assert_eq!(mid[1].weight, 0.5);
        r.check_invariants().unwrap();
    }

    #[test]
    fn refine_noop_below_threshold() {
        let g = uniform_grid(0.0, 1.0, 10).unwrap();
        assert_eq!(refine(&g, 1e-10), g);
        assert_eq!(refine_multi_pass(&g, 1e-10, 10), g);
    }

    #[test]
    fn refine_conserves_mass_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_grid(&mut rng, 50);
        let before: f64 = g.total_weight();
        let r = refine(&g, 1e-4);
        assert!(r.len() > g.len());
        let after: f64 = r.total_weight();
        assert!((before - after).abs() < 1e-14);
        assert!((g.mean() - r.mean()).abs() < 1e-12);
        r.check_invariants().unwrap();
    }

    #[test]
    fn refine_stops_at_precision_floor() {
        let x = 0.5f64;
        let next = f64::from_bits(x.to_bits() + 1);
        let g = cells_grid(&[0.0, x, next, 1.0], &[0.0, 1.0, 0.0]);
        let r = refine(&g, 0.0);
        assert!(r.cells().contains(&g.cells()[1]));
        r.check_invariants().unwrap();
    }

    #[test]
    fn multi_pass_refines_further() {
        let g = cells_grid(&[-1.0, 0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        let one = refine(&g, 1e-3);
        let many = refine_multi_pass(&g, 1e-3, 4);
        assert!(many.len() > one.len());
        assert!((many.total_weight() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn merge_pair() {
        let g = cells_grid(&[0.0, 0.5, 0.75, 1.0], &[1.0, 1e-6, 2e-6]);
        let m = merge(&g, 1e-5);
        assert_eq!(m.len(), 2);
        let c = m.cells()[1];
        assert_eq!(c.left, 0.5);
        assert_eq!(c.right, 1.0);
        assert_eq!(c.centroid, 0.75);
        assert!((c.weight - 3e-6).abs() < 1e-20);
    }

    #[test]
    fn parent_and_group_maps() {
        let g = cells_grid(&[-1.0, 0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 0.0]);
        let (r, parents) = refine_with_parents(&g, 1e-10);
        assert_eq!(r.len(), parents.len());
        for (c, &p) in r.cells().iter().zip(&parents) {
            assert!(c.left >= g.cells()[p].left && c.right <= g.cells()[p].right);
        }
        let (m, groups) = merge_with_groups(&r, 0.1);
        assert_eq!(m.len(), groups.len());
        assert_eq!(groups.first().unwrap().start, 0);
        assert_eq!(groups.last().unwrap().end, r.len());
        for (c, grp) in m.cells().iter().zip(&groups) {
            let w: f64 = r.cells()[grp.clone()].iter().map(|c| c.weight).sum();
            assert_eq!(c.weight, w);
            assert_eq!(c.left, r.cells()[grp.start].left);
        }
    }

    #[test]
    fn merge_noop_when_heavy() {
        let g = uniform_grid(0.0, 1.0, 10).unwrap();
        assert_eq!(merge(&g, 0.1), g);
    }

    /// Straight re-statement of the sweep with explicit index bookkeeping.
    fn merge_reference(cells: &[GridCell], w_th: f64) -> Vec<GridCell> {
        let mut out: Vec<GridCell> = Vec::new();
        let mut i = 0;
        while i < cells.len() {
            let left = cells[i].left;
            let mut right = cells[i].right;
            let mut w = cells[i].weight;
            let mut j = i + 1;
            while j < cells.len() && w < w_th && cells[j].weight < w_th {
                right = cells[j].right;
                w += cells[j].weight;
                j += 1;
            }
            if j == i + 1 {
                out.push(cells[i]);
            } else {
                out.push(GridCell { left, centroid: (left + right) / 2.0, right, weight: w });
            }
            i = j;
        }
        out
    }

    #[test]
    fn merge_chain_collapses_in_one_sweep() {
        let w = [0.5, 1e-4, 2e-4, 3e-4, 1e-4, 2e-4, 0.5];
        let edges: Vec<f64> = (0..=7).map(|k| k as f64).collect();
        let g = cells_grid(&edges, &w);
        let m = merge(&g, 1e-2);
        assert_eq!(m.len(), 3);
        let mid = m.cells()[1];
        assert_eq!((mid.left, mid.right, mid.centroid), (1.0, 6.0, 3.5));
        assert!((mid.weight - 9e-4).abs() < 1e-18);
        assert_eq!(m.cells(), merge_reference(g.cells(), 1e-2).as_slice());
    }

    #[test]
    fn merge_matches_reference_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(3..40);
            let g = random_grid(&mut rng, n);
            let w_th = rng.random_range(0.0..0.2);
            let m = merge(&g, w_th);
            assert_eq!(m.cells(), merge_reference(g.cells(), w_th).as_slice());
            m.check_invariants().unwrap();
        }
    }

    #[test]
    fn normalize_examples() {
        let g = cells_grid(&[0.0, 1.0, 2.0], &[2.0, 2.0]);
        assert_eq!(normalize(&g).unwrap().weights().collect::<Vec<_>>(), vec![0.5, 0.5]);
        let g = cells_grid(&[0.0, 1.0, 2.0], &[0.0, 3.0]);
        assert_eq!(normalize(&g).unwrap().weights().collect::<Vec<_>>(), vec![0.0, 1.0]);
        let g = cells_grid(&[0.0, 1.0, 2.0], &[0.0, 0.0]);
        assert!(matches!(normalize(&g), Err(Error::DegeneratePosterior)));
    }

    #[test]
    fn midpoint_examples() {
        let m = midpoint_integral(|x| x * x, 0.0, 1.0, 1);
        assert_eq!(m, 0.25);
        // K2 = 2: bound 2 / 24 = 1/12 is attained.
        assert!(((1.0 / 3.0 - m) - 1.0 / 12.0).abs() < 1e-15);

        for n in [1, 3, 10] {
            assert!((midpoint_integral(|_| 2.5, -1.0, 3.0, n) - 10.0).abs() < 1e-14);
        }

        let mut prev = f64::INFINITY;
        for n in [1, 2, 4, 8] {
            let err = (midpoint_integral(f64::sin, 0.0, std::f64::consts::PI, n) - 2.0).abs();
            assert!(prev / err >= 3.9, "ratio {} at n={n}", prev / err);
            prev = err;
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_grid(&mut rng, 12);
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, 7, &g).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("experiment_index,cell_left,cell_centroid,cell_right,weight\n"));
        let (k, back) = read_snapshot_csv(buf.as_slice()).unwrap();
        assert_eq!(k, 7);
        assert_eq!(back.cells(), g.cells());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_grid() -> impl Strategy<Value = AdaptiveGrid> {
            (3usize..40)
                .prop_flat_map(|n| {
                    (
                        -1.0..1.0f64,
                        prop::collection::vec(1e-4..1.0f64, n),
                        prop::collection::vec(0.0..1.0f64, n),
                    )
                })
                .prop_filter_map("zero mass", |(start, widths, weights)| {
                    let mut edges = vec![start];
                    for w in widths {
                        let last = *edges.last().unwrap();
                        edges.push(last + w);
                    }
                    normalize(&cells_grid(&edges, &weights)).ok()
                })
        }

        proptest! {
            #[test]
            fn refine_merge_conserve(g in arb_grid(), e_th in 1e-8..1e-1f64, w_th in 0.0..0.3f64) {
                let r = refine(&g, e_th);
                prop_assert!((r.total_weight() - g.total_weight()).abs() < 1e-14);
                prop_assert!((r.mean() - g.mean()).abs() < 1e-12);
                r.check_invariants().unwrap();
                let m = merge(&r, w_th);
                prop_assert!((m.total_weight() - 1.0).abs() < 1e-12);
                m.check_invariants().unwrap();
                prop_assert_eq!(m.domain_lo, g.domain_lo);
                prop_assert_eq!(m.cells().last().unwrap().right, g.cells().last().unwrap().right);
            }

            #[test]
            fn refine_idempotent_when_quiet(g in arb_grid()) {
                let e = error_density(&g).unwrap();
                let max = e.values().iter().cloned().fold(0.0, f64::max);
                prop_assert_eq!(refine(&g, max), g);
            }
        }
    }
}
