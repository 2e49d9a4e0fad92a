//! Dense linear solves by LU with partial pivoting.

use super::Matrix;
use crate::error::{Error, Result};

struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

fn factor(a: &Matrix) -> Result<Lu> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = lu[(col, col)].abs();
        for r in (col + 1)..n {
            let v = lu[(r, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val <= 1e-300 || pivot_val < 1e-14 * scale * 1e-2 {
            return Err(Error::SingularSystem(format!(
                "pivot {pivot_val:e} at column {col}"
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = lu[(col, j)];
                lu[(col, j)] = lu[(pivot_row, j)];
                lu[(pivot_row, j)] = tmp;
            }
            perm.swap(col, pivot_row);
            sign = -sign;
        }
        let inv_pivot = 1.0 / lu[(col, col)];
        for r in (col + 1)..n {
            let f = lu[(r, col)] * inv_pivot;
            lu[(r, col)] = f;
            for j in (col + 1)..n {
                let v = lu[(col, j)];
                lu[(r, j)] -= f * v;
            }
        }
    }
    Ok(Lu { lu, perm, sign })
}

fn lu_solve(f: &Lu, b: &[f64]) -> Vec<f64> {
    let n = f.lu.rows();
    let mut x: Vec<f64> = f.perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for j in 0..i {
            x[i] -= f.lu[(i, j)] * x[j];
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            x[i] -= f.lu[(i, j)] * x[j];
        }
        x[i] /= f.lu[(i, i)];
    }
    x
}

/// Solve a x = b.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimMismatch(format!(
            "rhs length {} vs matrix rows {}",
            b.len(),
            a.rows()
        )));
    }
    let f = factor(a)?;
    Ok(lu_solve(&f, b))
}

/// Solve a X = B column-by-column.
pub fn solve_many(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows() != a.rows() {
        return Err(Error::DimMismatch("solve_many shape".into()));
    }
    let f = factor(a)?;
    let mut out = Matrix::zeros(b.rows(), b.cols());
    let mut col = vec![0.0; b.rows()];
    for j in 0..b.cols() {
        for i in 0..b.rows() {
            col[i] = b[(i, j)];
        }
        let x = lu_solve(&f, &col);
        for i in 0..b.rows() {
            out[(i, j)] = x[i];
        }
    }
    Ok(out)
}

pub fn invert(a: &Matrix) -> Result<Matrix> {
    solve_many(a, &Matrix::identity(a.rows()))
}

pub fn determinant(a: &Matrix) -> f64 {
    match factor(a) {
        Ok(f) => {
            let mut det = f.sign;
            for i in 0..f.lu.rows() {
                det *= f.lu[(i, i)];
            }
            det
        }
        Err(_) => 0.0,
    }
}
