//! Dynamic position warping: an order-preserving 2D alignment of feature
//! matrices.
//!
//! A hierarchical warping path ([`HiPa`]) first pairs rows of `S` with rows
//! of `E` along a monotone unit-step lattice path, then pairs elements inside
//! each matched row pair the same way. The DPW distance is the cheapest total
//! element distance over all such paths. It is computed by running DTW on
//! every row pair and then DTW-style accumulation over the resulting
//! `Hs x He` matrix of row costs.
//!
//! Indices in [`HiPa`] are 1-based. Everything else in this module is
//! 0-based.

use std::fmt;

use crate::dtw::{self, DtwTable};
use crate::error::{Error, Result};
use crate::matrix::{euclidean, FeatureMatrix};

/// One first-level node: row `hs` of `S` matched to row `he` of `E`, with the
/// element-level path inside that row pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMatch {
    pub hs: usize,
    pub he: usize,
    /// Second-level nodes `(ws, we)`.
    pub cols: Vec<(usize, usize)>,
}

/// Hierarchical warping path, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HiPa {
    pub rows: Vec<RowMatch>,
}

impl HiPa {
    /// Every aligned element pair as `((hs, ws), (he, we))`, 1-based, in
    /// path order.
    pub fn aligned_pairs(&self) -> impl Iterator<Item = ((usize, usize), (usize, usize))> + '_ {
        self.rows.iter().flat_map(|r| {
            r.cols
                .iter()
                .map(move |&(ws, we)| ((r.hs, ws), (r.he, we)))
        })
    }

    pub fn pair_count(&self) -> usize {
        self.rows.iter().map(|r| r.cols.len()).sum()
    }

    /// The path that walks both matrices' diagonals; only valid when the
    /// two matrices have the same shape.
    pub fn diagonal(rows: usize, cols: usize) -> HiPa {
        HiPa {
            rows: (1..=rows)
                .map(|h| RowMatch {
                    hs: h,
                    he: h,
                    cols: (1..=cols).map(|w| (w, w)).collect(),
                })
                .collect(),
        }
    }
}

/// `(rows, cols)` of a matrix, as seen by path validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

impl From<&FeatureMatrix> for GridDims {
    fn from(m: &FeatureMatrix) -> Self {
        GridDims {
            rows: m.rows(),
            cols: m.cols(),
        }
    }
}

impl From<(usize, usize)> for GridDims {
    fn from((rows, cols): (usize, usize)) -> Self {
        GridDims { rows, cols }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Index outside the matrix.
    Range,
    /// Hierarchical boundary condition.
    Hbc,
    /// Hierarchical monotonicity condition.
    Hmc,
    /// Hierarchical step size condition.
    Hsc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub condition: Condition,
    /// 1-based first-level node index.
    pub row_node: usize,
    /// 1-based second-level node index, `None` for first-level violations.
    pub col_node: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.condition {
            Condition::Range => "range",
            Condition::Hbc => "HBC",
            Condition::Hmc => "HMC",
            Condition::Hsc => "HSC",
        };
        match self.col_node {
            None => write!(f, "{name} at first-level node {}: {}", self.row_node, self.detail),
            Some(k) => write!(
                f,
                "{name} at second-level node {k} of first-level node {}: {}",
                self.row_node, self.detail
            ),
        }
    }
}

/// Check `nodes` as a lattice path from `(1,1)` to `end`.
fn check_level(
    nodes: &[(usize, usize)],
    end: (usize, usize),
    row_node: Option<usize>,
    out: &mut Vec<Violation>,
) {
    let push = |out: &mut Vec<Violation>, condition, idx: usize, detail: String| {
        let (row_node, col_node) = match row_node {
            None => (idx, None),
            Some(l) => (l, Some(idx)),
        };
        out.push(Violation {
            condition,
            row_node,
            col_node,
            detail,
        });
    };
    if nodes.is_empty() {
        push(out, Condition::Hbc, 1, "no path nodes".into());
        return;
    }
    for (i, &(a, b)) in nodes.iter().enumerate() {
        if a < 1 || b < 1 || a > end.0 || b > end.1 {
            push(
                out,
                Condition::Range,
                i + 1,
                format!("({a},{b}) outside [1:{}]x[1:{}]", end.0, end.1),
            );
        }
    }
    if nodes[0] != (1, 1) {
        push(out, Condition::Hbc, 1, format!("starts at {:?}, not (1,1)", nodes[0]));
    }
    let last = *nodes.last().unwrap();
    if last != end {
        push(
            out,
            Condition::Hbc,
            nodes.len(),
            format!("ends at {last:?}, not {end:?}"),
        );
    }
    for (i, w) in nodes.windows(2).enumerate() {
        let (p, q) = (w[0], w[1]);
        if q.0 < p.0 || q.1 < p.1 {
            push(out, Condition::Hmc, i + 2, format!("{p:?} -> {q:?} is not monotone"));
        } else {
            let step = (q.0 - p.0, q.1 - p.1);
            if !matches!(step, (1, 0) | (0, 1) | (1, 1)) {
                push(out, Condition::Hsc, i + 2, format!("step {step:?} from {p:?}"));
            }
        }
    }
}

/// Report every violated condition of `p` for matrices of the given shapes.
pub fn validate_hipa(
    p: &HiPa,
    dims_s: impl Into<GridDims>,
    dims_e: impl Into<GridDims>,
) -> std::result::Result<(), Vec<Violation>> {
    let (s, e) = (dims_s.into(), dims_e.into());
    let mut out = Vec::new();
    let first: Vec<(usize, usize)> = p.rows.iter().map(|r| (r.hs, r.he)).collect();
    check_level(&first, (s.rows, e.rows), None, &mut out);
    for (l, r) in p.rows.iter().enumerate() {
        check_level(&r.cols, (s.cols, e.cols), Some(l + 1), &mut out);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Matching distance along `p`: the sum of element distances over all
/// aligned pairs.
pub fn path_cost(s: &FeatureMatrix, e: &FeatureMatrix, p: &HiPa) -> Result<f64> {
    check_pair(s, e)?;
    validate_hipa(p, s, e).map_err(Error::InvalidHipa)?;
    Ok(p
        .rows
        .iter()
        .map(|r| {
            r.cols
                .iter()
                .map(|&(ws, we)| euclidean(s.element(r.hs - 1, ws - 1), e.element(r.he - 1, we - 1)))
                .sum::<f64>()
        })
        .sum())
}

/// Where second-level backtracking gets its DTW prefix values from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableMode {
    /// Keep every row-pair DTW table (memory `Hs*He*Ws*We` values).
    #[default]
    Eager,
    /// Keep only row-pair DTW distances; rebuild the tables on the path
    /// while backtracking.
    Recompute,
}

/// Intermediate results of a DPW computation.
#[derive(Debug, Clone)]
pub struct DpwTables {
    s_rows: usize,
    e_rows: usize,
    s_cols: usize,
    e_cols: usize,
    hier_acc: Vec<f64>,
    row_costs: Vec<f64>,
    dtw_tables: Option<Vec<DtwTable>>,
}

impl DpwTables {
    pub fn distance(&self) -> f64 {
        self.hier_acc[self.hier_acc.len() - 1]
    }

    /// Hierarchical accumulated distance at 0-based `(hs, he)`.
    pub fn hier_acc(&self, hs: usize, he: usize) -> f64 {
        self.hier_acc[hs * self.e_rows + he]
    }

    /// DTW distance between row `hs` of `S` and row `he` of `E`, 0-based.
    pub fn row_cost(&self, hs: usize, he: usize) -> f64 {
        self.row_costs[hs * self.e_rows + he]
    }

    pub fn dtw_table(&self, hs: usize, he: usize) -> Option<&DtwTable> {
        self.dtw_tables.as_ref().map(|t| &t[hs * self.e_rows + he])
    }

    pub fn mode(&self) -> TableMode {
        if self.dtw_tables.is_some() {
            TableMode::Eager
        } else {
            TableMode::Recompute
        }
    }
}

fn check_pair(s: &FeatureMatrix, e: &FeatureMatrix) -> Result<()> {
    if s.channels() != e.channels() {
        return Err(Error::Dimension(format!(
            "channel mismatch: S has C={}, E has C={}",
            s.channels(),
            e.channels()
        )));
    }
    Ok(())
}

fn row_table(s: &FeatureMatrix, e: &FeatureMatrix, hs: usize, he: usize) -> DtwTable {
    DtwTable::fill(s.cols(), e.cols(), |i, j| euclidean(s.element(hs, i), e.element(he, j)))
}

/// DPW distance with all intermediate tables retained.
pub fn dpw(s: &FeatureMatrix, e: &FeatureMatrix) -> Result<(f64, DpwTables)> {
    dpw_with_mode(s, e, TableMode::Eager)
}

pub fn dpw_with_mode(
    s: &FeatureMatrix,
    e: &FeatureMatrix,
    mode: TableMode,
) -> Result<(f64, DpwTables)> {
    check_pair(s, e)?;
    let (hs_n, he_n) = (s.rows(), e.rows());
    let mut row_costs = Vec::with_capacity(hs_n * he_n);
    let mut tables = match mode {
        TableMode::Eager => Some(Vec::with_capacity(hs_n * he_n)),
        TableMode::Recompute => None,
    };
    let mut scratch = vec![0.0; s.cols() * e.cols()];
    for hs in 0..hs_n {
        for he in 0..he_n {
            match tables.as_mut() {
                Some(t) => {
                    let table = row_table(s, e, hs, he);
                    row_costs.push(table.distance());
                    t.push(table);
                }
                None => row_costs.push(row_dtw(s, e, hs, he, &mut scratch)),
            }
        }
    }
    let mut hier_acc = vec![0.0; hs_n * he_n];
    dtw::accumulate(hs_n, he_n, |i, j| row_costs[i * he_n + j], &mut hier_acc);
    let tables = DpwTables {
        s_rows: hs_n,
        e_rows: he_n,
        s_cols: s.cols(),
        e_cols: e.cols(),
        hier_acc,
        row_costs,
        dtw_tables: tables,
    };
    Ok((tables.distance(), tables))
}

#[inline]
fn row_dtw(s: &FeatureMatrix, e: &FeatureMatrix, hs: usize, he: usize, scratch: &mut [f64]) -> f64 {
    let (ws, we) = (s.cols(), e.cols());
    dtw::accumulate(ws, we, |i, j| euclidean(s.element(hs, i), e.element(he, j)), scratch);
    scratch[ws * we - 1]
}

/// DPW distance only. Runs in `O(Hs*He*Ws*We*C)` time with `O(Hs*He + Ws*We)`
/// extra memory.
pub fn dpw_distance(s: &FeatureMatrix, e: &FeatureMatrix) -> Result<f64> {
    check_pair(s, e)?;
    let (hs_n, he_n) = (s.rows(), e.rows());
    let mut scratch = vec![0.0; s.cols() * e.cols()];
    let mut row_costs = vec![0.0; hs_n * he_n];
    for hs in 0..hs_n {
        for he in 0..he_n {
            row_costs[hs * he_n + he] = row_dtw(s, e, hs, he, &mut scratch);
        }
    }
    let mut acc = vec![0.0; hs_n * he_n];
    dtw::accumulate(hs_n, he_n, |i, j| row_costs[i * he_n + j], &mut acc);
    Ok(acc[hs_n * he_n - 1])
}

/// Recover the optimal HiPa from the tables of `dpw(s, e)`.
///
/// First-level predecessors are chosen by comparing accumulated distances of
/// the candidate cells; second-level predecessors by comparing stored DTW
/// prefix values. Ties prefer the diagonal, then the `S`-decrement, then the
/// `E`-decrement.
pub fn optimal_hipa(s: &FeatureMatrix, e: &FeatureMatrix, tables: &DpwTables) -> Result<HiPa> {
    check_pair(s, e)?;
    if (tables.s_rows, tables.e_rows, tables.s_cols, tables.e_cols)
        != (s.rows(), e.rows(), s.cols(), e.cols())
    {
        return Err(Error::Dimension("DPW tables were built for different matrices".into()));
    }
    let first = dtw::backtrack(tables.s_rows, tables.e_rows, |i, j| tables.hier_acc(i, j));
    let rows = first
        .into_iter()
        .map(|(hs, he)| {
            let cols = match tables.dtw_table(hs, he) {
                Some(t) => t.path(),
                None => row_table(s, e, hs, he).path(),
            };
            RowMatch {
                hs: hs + 1,
                he: he + 1,
                cols: cols.into_iter().map(|(a, b)| (a + 1, b + 1)).collect(),
            }
        })
        .collect();
    Ok(HiPa { rows })
}

/// Convenience: distance and optimal path in one call.
pub fn align(s: &FeatureMatrix, e: &FeatureMatrix) -> Result<(f64, HiPa)> {
    let (d, tables) = dpw(s, e)?;
    Ok((d, optimal_hipa(s, e, &tables)?))
}

/// Text dump of an alignment: one `hs,ws,he,we,cost` line per aligned
/// element pair, 1-based.
pub fn alignment_dump(s: &FeatureMatrix, e: &FeatureMatrix, p: &HiPa) -> Result<String> {
    check_pair(s, e)?;
    validate_hipa(p, s, e).map_err(Error::InvalidHipa)?;
    let mut out = String::with_capacity(p.pair_count() * 16);
    for ((hs, ws), (he, we)) in p.aligned_pairs() {
        let d = euclidean(s.element(hs - 1, ws - 1), e.element(he - 1, we - 1));
        out.push_str(&format!("{hs},{ws},{he},{we},{d}\n"));
    }
    Ok(out)
}

/// Upper bound on the first-level and second-level grid sizes accepted by
/// [`enumerate_hipas`].
pub const ENUMERATION_LIMIT: usize = 9;

/// All monotone unit-step lattice paths from `(1,1)` to `(n,m)`.
fn lattice_paths(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(n: usize, m: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        let (i, j) = *cur.last().unwrap();
        if (i, j) == (n, m) {
            out.push(cur.clone());
            return;
        }
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            if i + di <= n && j + dj <= m {
                cur.push((i + di, j + dj));
                go(n, m, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(n, m, &mut vec![(1, 1)], &mut out);
    out
}

/// Every HiPa between matrices of the given shapes, each exactly once.
///
/// Guarded to `Hs*He <= 9` and `Ws*We <= 9`; the count grows as
/// `sum over first-level paths of (#second-level paths)^L`.
pub fn enumerate_hipas(
    dims_s: impl Into<GridDims>,
    dims_e: impl Into<GridDims>,
) -> Result<HipaEnumerator> {
    let (s, e) = (dims_s.into(), dims_e.into());
    if [s.rows, s.cols, e.rows, e.cols].contains(&0) {
        return Err(Error::Invalid("matrix dims must be positive".into()));
    }
    if s.rows * e.rows > ENUMERATION_LIMIT || s.cols * e.cols > ENUMERATION_LIMIT {
        return Err(Error::Invalid(format!(
            "enumeration guard: Hs*He={} and Ws*We={} must both be <= {ENUMERATION_LIMIT}",
            s.rows * e.rows,
            s.cols * e.cols
        )));
    }
    let first = lattice_paths(s.rows, e.rows);
    let second = lattice_paths(s.cols, e.cols);
    let digits = vec![0; first[0].len()];
    Ok(HipaEnumerator {
        first,
        second,
        current: 0,
        digits,
        done: false,
    })
}

/// Iterator returned by [`enumerate_hipas`]: walks first-level paths and,
/// for each, a mixed-radix counter selecting one second-level path per row
/// pair.
#[derive(Debug, Clone)]
pub struct HipaEnumerator {
    first: Vec<Vec<(usize, usize)>>,
    second: Vec<Vec<(usize, usize)>>,
    current: usize,
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for HipaEnumerator {
    type Item = HiPa;

    fn next(&mut self) -> Option<HiPa> {
        if self.done {
            return None;
        }
        let rows = self.first[self.current]
            .iter()
            .zip(&self.digits)
            .map(|(&(hs, he), &d)| RowMatch {
                hs,
                he,
                cols: self.second[d].clone(),
            })
            .collect();
        // advance the counter
        let radix = self.second.len();
        let mut carry = true;
        for d in self.digits.iter_mut() {
            *d += 1;
            if *d < radix {
                carry = false;
                break;
            }
            *d = 0;
        }
        if carry {
            self.current += 1;
            match self.first.get(self.current) {
                Some(p) => self.digits = vec![0; p.len()],
                None => self.done = true,
            }
        }
        Some(HiPa { rows })
    }
}
