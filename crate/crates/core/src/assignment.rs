//! Minimum-cost bipartite assignment (Hungarian method with row potentials)
//! for rectangular cost matrices.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::scalar::Real;

/// Entry type of a cost matrix. Integers give exact arithmetic.
pub trait Cost: Copy + PartialOrd + Num + Signed + FromPrimitive + Debug {}

impl<C> Cost for C where C: Copy + PartialOrd + Num + Signed + FromPrimitive + Debug {}

/// Dense row-major cost matrix with finite, non-negative entries.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix<C> {
    rows: usize,
    cols: usize,
    data: Vec<C>,
}

impl<C: Cost> CostMatrix<C> {
    pub fn new(rows: usize, cols: usize, data: Vec<C>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(
                "cost_matrix",
                format!("{} entries for a {rows}×{cols} matrix", data.len()),
            ));
        }
        for (k, &c) in data.iter().enumerate() {
            // `c - c` is NaN for NaN and ±∞
            #[allow(clippy::eq_op)]
            let finite = c - c == C::zero();
            if !finite || c < C::zero() {
                return Err(Error::validation(
                    format!("cost[{}][{}]", k / cols.max(1), k % cols.max(1)),
                    format!("must be finite and non-negative, got {c:?}"),
                ));
            }
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("cost_matrix", "ragged rows"));
        }
        CostMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C {
        self.data[r * self.cols + c]
    }

    fn max_entry(&self) -> C {
        self.data
            .iter()
            .copied()
            .fold(C::zero(), |m, c| if c > m { c } else { m })
    }
}

/// Result of an assignment: matched `(row, col)` pairs sorted by row, plus the
/// leftover indices of each side in ascending order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Matching {
    pub fn total_cost<C: Cost>(&self, costs: &CostMatrix<C>) -> C {
        self.pairs
            .iter()
            .fold(C::zero(), |acc, &(r, c)| acc + costs.get(r, c))
    }
}

/// Euclidean distance in pixels between rectangle centers.
pub fn build_cost_matrix<T: Real>(rects_from_3d: &[Rect<T>], rects_2d: &[Rect<T>]) -> CostMatrix<T> {
    let mut data = Vec::with_capacity(rects_from_3d.len() * rects_2d.len());
    for a in rects_from_3d {
        let ca = a.center();
        for b in rects_2d {
            let cb = b.center();
            data.push((ca[0] - cb[0]).hypot(ca[1] - cb[1]));
        }
    }
    CostMatrix {
        rows: rects_from_3d.len(),
        cols: rects_2d.len(),
        data,
    }
}

/// Optimal assignment. The matrix is padded to square with a sentinel
/// `10·max + 1` so every real pair beats a dummy one; dummy pairs are reported
/// as unmatched. With `gate` set, pairs whose cost exceeds it are demoted to
/// unmatched after solving.
pub fn solve_assignment<C: Cost>(costs: &CostMatrix<C>, gate: Option<C>) -> Matching {
    let (rows, cols) = (costs.rows, costs.cols);
    if rows == 0 || cols == 0 {
        return Matching {
            pairs: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        };
    }
    let n = rows.max(cols);
    let ten = C::from_u8(10).expect("10 representable");
    let sentinel = ten * costs.max_entry() + C::one();
    let cost = |r: usize, c: usize| {
        if r < rows && c < cols {
            costs.get(r, c)
        } else {
            sentinel
        }
    };

    let row_to_col = hungarian_square(n, cost);

    let mut pairs = Vec::new();
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for (r, &c) in row_to_col.iter().enumerate().take(rows) {
        if c >= cols {
            continue;
        }
        if let Some(g) = gate {
            if costs.get(r, c) > g {
                continue;
            }
        }
        pairs.push((r, c));
        row_used[r] = true;
        col_used[c] = true;
    }
    Matching {
        pairs,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Shortest-augmenting-path Hungarian method on an `n × n` matrix. Returns
/// the column assigned to each row. Columns are scanned in ascending order and
/// only a strictly smaller reduced cost displaces the current candidate, which
/// makes tie resolution deterministic.
fn hungarian_square<C: Cost>(n: usize, cost: impl Fn(usize, usize) -> C) -> Vec<usize> {
    // 1-based; index 0 is the virtual root column
    let mut u = vec![C::zero(); n + 1];
    let mut v = vec![C::zero(); n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<C>> = vec![None; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta: Option<C> = None;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if minv[j].is_none_or(|m| reduced < m) {
                    minv[j] = Some(reduced);
                    way[j] = j0;
                }
                let mj = minv[j].expect("set above");
                if delta.is_none_or(|d| mj < d) {
                    delta = Some(mj);
                    j1 = j;
                }
            }
            let delta = delta.expect("an unused column remains while augmenting");
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] = u[col_owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else if let Some(m) = minv[j] {
                    minv[j] = Some(m - delta);
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}
