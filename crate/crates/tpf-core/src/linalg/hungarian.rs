//! Exact minimum-cost assignment (Hungarian method, shortest-augmenting-path
//! form) with a lexicographic tie-break.
//!
//! Among all cost-minimal assignments the returned permutation is the
//! lexicographically smallest, resolved on the zero-reduced-cost graph left
//! behind by the optimal dual potentials. For generic float costs ties are
//! empty and the refinement is a no-op scan.

use super::Matrix;
use crate::error::{Error, Result};

/// Returns `perm` with `perm[row] = col` minimizing the total cost exactly.
pub fn min_cost_assignment(cost: &Matrix) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(Error::NonSquare {
            rows: cost.rows(),
            cols: cost.cols(),
        });
    }
    if cost.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assignment cost entry".into()));
    }
    let n = cost.rows();
    if n == 0 {
        return Ok(Vec::new());
    }

    // Shortest augmenting path with dual potentials u (rows) and v (cols);
    // 1-based with a virtual column 0, the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_row = vec![0usize; n + 1]; // col -> assigned row (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            let row = cost.row(i0 - 1);
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![usize::MAX; n];
    for j in 1..=n {
        perm[col_row[j] - 1] = j - 1;
    }
    lexicographic_refine(cost, &u[1..], &v[1..], perm)
}

/// Restrict to edges with zero reduced cost (complementary slackness: every
/// optimal assignment lives on them) and greedily pick, row by row, the
/// smallest column that still allows completing a perfect matching.
fn lexicographic_refine(
    cost: &Matrix,
    u: &[f64],
    v: &[f64],
    initial: Vec<usize>,
) -> Result<Vec<usize>> {
    let n = cost.rows();
    let scale = cost.max_abs().max(1.0);
    let tol = 1e-9 * scale;

    let mut adj: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let row = cost.row(i);
        let cols: Vec<usize> = (0..n)
            .filter(|&j| (row[j] - u[i] - v[j]).abs() <= tol)
            .collect();
        adj.push(cols);
    }

    // Current matching, mutated as rows get pinned.
    let mut row_col = initial;
    let mut col_row = vec![usize::MAX; n];
    for (i, &j) in row_col.iter().enumerate() {
        col_row[j] = i;
    }

    for i in 0..n {
        let candidates = adj[i].clone();
        for &j in &candidates {
            if j >= row_col[i] {
                break; // current assignment is already the smallest feasible
            }
            let displaced = col_row[j];
            if displaced <= i {
                continue; // column owned by an already-pinned row
            }
            // Steal column j for row i and reroute the displaced row through
            // the admissible graph; only rows after i may re-match.
            let freed = row_col[i];
            // tentatively pin (i, j)
            col_row[freed] = usize::MAX;
            row_col[i] = j;
            col_row[j] = i;
            row_col[displaced] = usize::MAX;
            let mut visited = vec![false; n];
            if augment(&adj, &mut row_col, &mut col_row, &mut visited, i, displaced) {
                break; // pinned successfully
            }
            // revert
            row_col[displaced] = j;
            col_row[j] = displaced;
            row_col[i] = freed;
            col_row[freed] = i;
        }
    }
    Ok(row_col)
}

/// Kuhn augmenting search for `row` over admissible edges, never touching
/// rows before `pinned_before` (their assignment is final).
fn augment(
    adj: &[Vec<usize>],
    row_col: &mut [usize],
    col_row: &mut [usize],
    visited: &mut [bool],
    pinned_before: usize,
    row: usize,
) -> bool {
    for &j in &adj[row] {
        if visited[j] {
            continue;
        }
        visited[j] = true;
        let owner = col_row[j];
        if owner == usize::MAX {
            row_col[row] = j;
            col_row[j] = row;
            return true;
        }
        if owner <= pinned_before {
            continue;
        }
        if augment(adj, row_col, col_row, visited, pinned_before, owner) {
            row_col[row] = j;
            col_row[j] = row;
            return true;
        }
    }
    false
}
