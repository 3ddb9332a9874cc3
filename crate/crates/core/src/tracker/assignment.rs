//! Minimum-cost rectangular assignment (Hungarian method, shortest
//! augmenting path formulation with row/column potentials).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> CostMatrix<T> {
    pub fn new(rows: usize, cols: usize, fill: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![fill; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sum of the selected entries, accumulated in the given order.
    pub fn total(&self, pairs: &[(usize, usize)]) -> T {
        pairs.iter().map(|&(r, c)| self.get(r, c)).sum()
    }
}

/// Returns `min(rows, cols)` `(row, col)` pairs minimizing the summed cost,
/// sorted by row.
///
/// Rectangular inputs are solved directly; the shorter side is fully
/// assigned. Entries must be finite.
pub fn hungarian_assign<T: Scalar>(cost: &CostMatrix<T>) -> Result<Vec<(usize, usize)>> {
    if cost.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assignment cost matrix"));
    }
    if cost.rows == 0 || cost.cols == 0 {
        return Ok(Vec::new());
    }
    if cost.rows <= cost.cols {
        Ok(solve(cost.rows, cost.cols, |r, c| cost.get(r, c)))
    } else {
        let mut pairs: Vec<_> = solve(cost.cols, cost.rows, |r, c| cost.get(c, r))
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        Ok(pairs)
    }
}

/// Core solver for `n <= m`. Indices inside are 1-based with 0 as the
/// virtual source column.
fn solve<T: Scalar>(n: usize, m: usize, a: impl Fn(usize, usize) -> T) -> Vec<(usize, usize)> {
    debug_assert!(n <= m);
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    // p[j]: row assigned to column j (0 = none)
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}
