//! Dynamic time warping over sequences of feature elements.
//!
//! Steps are restricted to `(1,0)`, `(0,1)` and `(1,1)` with no window or
//! slope weighting. The full accumulated-cost table is kept because prefix
//! values are needed when backtracking hierarchical paths.

use crate::error::{Error, Result};
use crate::matrix::euclidean;

/// Accumulated DTW costs: `cost(i, j)` is the DTW distance between the
/// prefixes `a[..=i]` and `b[..=j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwTable {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
}

impl DtwTable {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.cols + j]
    }

    pub fn distance(&self) -> f64 {
        self.costs[self.costs.len() - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }

    /// Build a table from a local-cost callback.
    pub(crate) fn fill(rows: usize, cols: usize, local: impl Fn(usize, usize) -> f64) -> Self {
        let mut costs = vec![0.0; rows * cols];
        accumulate(rows, cols, local, &mut costs);
        DtwTable { rows, cols, costs }
    }

    /// Optimal warping path as 0-based `(i, j)` pairs from `(0, 0)` to
    /// `(rows-1, cols-1)`.
    pub fn path(&self) -> Vec<(usize, usize)> {
        backtrack(self.rows, self.cols, |i, j| self.cost(i, j))
    }
}

/// Fill `out` (row-major `rows x cols`) with accumulated costs.
#[inline]
pub(crate) fn accumulate(
    rows: usize,
    cols: usize,
    local: impl Fn(usize, usize) -> f64,
    out: &mut [f64],
) {
    debug_assert!(out.len() >= rows * cols);
    out[0] = local(0, 0);
    for j in 1..cols {
        out[j] = out[j - 1] + local(0, j);
    }
    for i in 1..rows {
        let (prev, cur) = out[(i - 1) * cols..(i + 1) * cols].split_at_mut(cols);
        cur[0] = prev[0] + local(i, 0);
        for j in 1..cols {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = best + local(i, j);
        }
    }
}

/// Backtrack through an accumulated table. Edge cells step straight along
/// the boundary; interior cells pick the cheapest predecessor, preferring the
/// diagonal, then `(i-1, j)`, then `(i, j-1)` on ties.
pub(crate) fn backtrack(
    rows: usize,
    cols: usize,
    acc: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, usize)> {
    let (mut i, mut j) = (rows - 1, cols - 1);
    let mut path = Vec::with_capacity(rows + cols - 1);
    path.push((i, j));
    while (i, j) != (0, 0) {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let mut best = (i - 1, j - 1);
            let mut best_cost = acc(i - 1, j - 1);
            for cand in [(i - 1, j), (i, j - 1)] {
                let c = acc(cand.0, cand.1);
                if c < best_cost {
                    best = cand;
                    best_cost = c;
                }
            }
            best
        };
        path.push((i, j));
    }
    path.reverse();
    path
}

fn check_rows<A: AsRef<[f64]>>(a: &[A], b: &[A]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("DTW needs nonempty sequences".into()));
    }
    let c = a[0].as_ref().len();
    if a.iter().chain(b).any(|e| e.as_ref().len() != c) {
        return Err(Error::Dimension("DTW sequences have differing channel counts".into()));
    }
    Ok(c)
}

/// DTW distance between two element sequences, with the full table.
pub fn dtw<A: AsRef<[f64]>>(a: &[A], b: &[A]) -> Result<(f64, DtwTable)> {
    check_rows(a, b)?;
    let table = DtwTable::fill(a.len(), b.len(), |i, j| euclidean(a[i].as_ref(), b[j].as_ref()));
    Ok((table.distance(), table))
}

/// Optimal warping path of a table produced by [`dtw`].
pub fn dtw_path(table: &DtwTable) -> Vec<(usize, usize)> {
    table.path()
}

/// Split a flat row of `channels`-sized elements into element slices.
pub fn row_elements(row: &[f64], channels: usize) -> Vec<&[f64]> {
    row.chunks_exact(channels).collect()
}
