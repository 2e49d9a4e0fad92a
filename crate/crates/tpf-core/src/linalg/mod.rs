//! Dense linear algebra shared by every other module: row-major `Matrix`,
//! validated SPD wrapper, symmetric eigendecomposition, linear solves, the
//! square-root Sylvester equation, exact minimum-cost assignment, and the
//! seeded RNG.
//!
//! Everything here targets small dense problems (tens of rows, not
//! thousands); correctness and reproducibility win over asymptotics.

mod eigen;
mod hungarian;
mod rng;
mod solve;
mod sylvester;

pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use hungarian::min_cost_assignment;
pub use rng::{sample_standard_normal, SeededRng, RNG_ALGORITHM_ID};
pub use solve::{determinant, invert, solve_linear, solve_many};
pub use sylvester::{solve_lyapunov, solve_sqrt_sylvester};

use crate::error::{Error, Result};

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            out[i] = acc;
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Largest asymmetry |a_ij - a_ji| relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// 0.5 * (A + A^T).
    pub fn symmetrize(&self) -> Matrix {
        assert!(self.is_square());
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self[(i, j)] + self[(j, i)])
        })
    }

    /// Spectral norm (largest singular value) via eigenvalues of A^T A.
    pub fn spectral_norm(&self) -> f64 {
        let gram = self.transpose().matmul(self);
        let eig = symmetric_eigen(&gram);
        eig.values
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.max(0.0)))
            .sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Symmetric positive-definite matrix, validated on construction.
///
/// Symmetry tolerance is 1e-12 relative to the largest entry and the smallest
/// eigenvalue must exceed 1e-12 times the trace.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    m: Matrix,
}

pub const SPD_SYMMETRY_TOL: f64 = 1e-12;
pub const SPD_EIGENVALUE_TOL: f64 = 1e-12;

impl SpdMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NonSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let asym = m.relative_asymmetry();
        if asym > SPD_SYMMETRY_TOL {
            return Err(Error::NotSpd(format!(
                "relative asymmetry {asym:e} exceeds {SPD_SYMMETRY_TOL:e}"
            )));
        }
        let sym = m.symmetrize();
        let eig = symmetric_eigen(&sym);
        let min_eig = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let floor = SPD_EIGENVALUE_TOL * sym.trace().abs();
        if !(min_eig > floor) {
            return Err(Error::NotSpd(format!(
                "smallest eigenvalue {min_eig:e} not above {floor:e}"
            )));
        }
        Ok(Self { m: sym })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn into_matrix(self) -> Matrix {
        self.m
    }
}

/// Symmetric PSD square root of an SPD matrix via eigendecomposition.
pub fn spd_sqrt(m: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = symmetric_eigen(m.matrix());
    let n = m.dim();
    // m = V diag(lambda) V^T  =>  sqrt(m) = V diag(sqrt(lambda)) V^T
    let mut root = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                let lam = eig.values[k].max(0.0);
                acc += eig.vectors[(i, k)] * lam.sqrt() * eig.vectors[(j, k)];
            }
            root[(i, j)] = acc;
        }
    }
    SpdMatrix::new(root.symmetrize())
}
