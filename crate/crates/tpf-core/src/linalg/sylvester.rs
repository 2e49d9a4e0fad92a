//! Sylvester-type matrix equations solved by vectorization.
//!
//! The dimensions involved are tiny (the covariance paths live in d <= 32),
//! so building the n^2 x n^2 system and solving it densely is the most
//! transparent correct approach.

use super::{solve_linear, spd_sqrt, Matrix, SpdMatrix};
use crate::error::{Error, Result};

/// Solve `U M + sqrt(M) U sqrt(M) = rhs` for U.
///
/// This is the equation the physics-time matrix of a Gaussian marginal path
/// satisfies, with `rhs` the time derivative of the interpolated covariance.
pub fn solve_sqrt_sylvester(m: &SpdMatrix, rhs: &Matrix) -> Result<Matrix> {
    let n = m.dim();
    if rhs.rows() != n || rhs.cols() != n {
        return Err(Error::DimMismatch(format!(
            "rhs is {}x{}, expected {}x{}",
            rhs.rows(),
            rhs.cols(),
            n,
            n
        )));
    }
    let root = spd_sqrt(m)?;
    solve_general_sylvester(m.matrix(), root.matrix(), root.matrix(), rhs)
}

/// Solve the Lyapunov equation `S A + A S = rhs` for S (A symmetric).
///
/// Used to build the symmetric admissible linear field that produces a given
/// covariance derivative, the minimum-kinetic-energy comparator.
pub fn solve_lyapunov(a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    solve_general_sylvester(a, a, &Matrix::identity(a.rows()), rhs)
}

/// Solve `U A + B U C = rhs` by vectorizing to an n^2 linear system.
fn solve_general_sylvester(a: &Matrix, b: &Matrix, c: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    // Unknown vector stacks U column-major: v[j*n + i] = U[i, j].
    let mut k = Matrix::zeros(n * n, n * n);
    // (U A)[i, j] = sum_p U[i, p] A[p, j]
    for i in 0..n {
        for j in 0..n {
            let r = j * n + i;
            for p in 0..n {
                k[(r, p * n + i)] += a[(p, j)];
            }
        }
    }
    // (B U C)[i, j] = sum_{p,q} B[i, p] U[p, q] C[q, j]
    for i in 0..n {
        for j in 0..n {
            let r = j * n + i;
            for p in 0..n {
                let bip = b[(i, p)];
                if bip == 0.0 {
                    continue;
                }
                for q in 0..n {
                    k[(r, q * n + p)] += bip * c[(q, j)];
                }
            }
        }
    }
    let mut vec_rhs = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            vec_rhs[j * n + i] = rhs[(i, j)];
        }
    }
    let sol = solve_linear(&k, &vec_rhs)?;
    Ok(Matrix::from_fn(n, n, |i, j| sol[j * n + i]))
}
