//! Wasserstein-2 between equal-weight point clouds: exact assignment for
//! small clouds, debiased entropic (Sinkhorn) for larger ones.

use crate::error::{Error, Result};
use crate::linalg::{min_cost_assignment, Matrix};
use crate::regression::pairwise_sq_cost;

/// Exact W2 via minimum-cost assignment on squared Euclidean costs:
/// sqrt(min over pairings of the mean squared pair distance).
pub fn w2_exact(cloud_a: &Matrix, cloud_b: &Matrix) -> Result<f64> {
    if cloud_a.rows() != cloud_b.rows() || cloud_a.cols() != cloud_b.cols() {
        return Err(Error::SizeMismatch(format!(
            "{}x{} vs {}x{}",
            cloud_a.rows(),
            cloud_a.cols(),
            cloud_b.rows(),
            cloud_b.cols()
        )));
    }
    let n = cloud_a.rows();
    if n > 4096 {
        return Err(Error::SizeMismatch(format!(
            "exact assignment limited to 4096 points, got {n}"
        )));
    }
    let cost = pairwise_sq_cost(cloud_a, cloud_b);
    let perm = min_cost_assignment(&cost)?;
    let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok((total / n as f64).sqrt())
}

/// Entropic transport cost <P, C> between uniform clouds by log-domain
/// Sinkhorn sweeps. Errors if the unmatched marginal still deviates by more
/// than 1e-6 in max norm after the iteration budget.
fn sinkhorn_sharp_cost(a: &Matrix, b: &Matrix, epsilon: f64, iters: usize) -> Result<f64> {
    let n = a.rows();
    let m = b.rows();
    let cost = pairwise_sq_cost(a, b);
    let log_an = -(n as f64).ln();
    let log_bm = -(m as f64).ln();
    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let lse = |terms: &mut dyn Iterator<Item = f64>| -> f64 {
        let vals: Vec<f64> = terms.collect();
        let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !mx.is_finite() {
            return mx;
        }
        mx + vals.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
    };
    let sweep = |eps: f64, f: &mut Vec<f64>, g: &mut Vec<f64>| {
        for j in 0..m {
            let mut it = (0..n).map(|i| (f[i] - cost[(i, j)]) / eps + log_an);
            g[j] = -eps * lse(&mut it);
        }
        for i in 0..n {
            let mut it = (0..m).map(|j| (g[j] - cost[(i, j)]) / eps + log_bm);
            f[i] = -eps * lse(&mut it);
        }
    };
    // After an f-sweep the row marginals are exact; the max-norm error of
    // the column marginal measures convergence.
    let col_violation = |eps: f64, f: &[f64], g: &[f64]| -> f64 {
        let mut worst = 0.0f64;
        for j in 0..m {
            let mut col_mass = 0.0;
            for i in 0..n {
                col_mass += ((f[i] + g[j] - cost[(i, j)]) / eps + log_an + log_bm).exp();
            }
            worst = worst.max((col_mass - 1.0 / m as f64).abs());
        }
        worst
    };

    let mut used = 0usize;
    let mut violation = f64::INFINITY;
    while used < iters {
        sweep(epsilon, &mut f, &mut g);
        used += 1;
        if used % 5 == 0 || used == iters {
            violation = col_violation(epsilon, &f, &g);
            if violation <= 1e-8 {
                break;
            }
        }
    }
    if violation > 1e-6 {
        return Err(Error::NoConvergence(format!(
            "sinkhorn marginal violation {violation:e} after {used} iterations"
        )));
    }
    let mut value = 0.0;
    for j in 0..m {
        for i in 0..n {
            let p = ((f[i] + g[j] - cost[(i, j)]) / epsilon + log_an + log_bm).exp();
            value += p * cost[(i, j)];
        }
    }
    Ok(value)
}

/// Debiased entropic W2 estimate:
/// sqrt(max(0, OT_eps(a,b) - OT_eps(a,a)/2 - OT_eps(b,b)/2)).
pub fn w2_entropic(cloud_a: &Matrix, cloud_b: &Matrix, epsilon: f64, iters: usize) -> Result<f64> {
    if epsilon <= 0.0 {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    if cloud_a.cols() != cloud_b.cols() {
        return Err(Error::SizeMismatch("cloud dimensions differ".into()));
    }
    let ab = sinkhorn_sharp_cost(cloud_a, cloud_b, epsilon, iters)?;
    let aa = sinkhorn_sharp_cost(cloud_a, cloud_a, epsilon, iters)?;
    let bb = sinkhorn_sharp_cost(cloud_b, cloud_b, epsilon, iters)?;
    Ok((ab - 0.5 * aa - 0.5 * bb).max(0.0).sqrt())
}
