//! Closed-form two-parameter flow for Gaussian marginal paths.
//!
//! For marginals N(0, Sigma(t)) and an interpolant schedule, everything is
//! explicit: the interpolated covariance M(t, s) = alpha^2 I + beta^2 Sigma,
//! the sampling-time velocity (a linear field), the flow map M^{1/2}, and the
//! physics-time matrix U(t, s) from a square-root Sylvester equation. These
//! closed forms are the ground truth behind the quantitative tests.

use crate::error::{Error, Result};
use crate::flow::VelocityField;
use crate::interpolant::Schedule;
use crate::linalg::{
    invert, solve_lyapunov, solve_sqrt_sylvester, spd_sqrt, Matrix, SeededRng, SpdMatrix,
};

/// Analytic covariance curve Sigma(t).
#[derive(Debug, Clone)]
pub enum GaussianPath {
    /// Sigma(t) = (1 + sigma^2 t) I, the law of a pure random walk.
    IsotropicLinear { dim: usize, sigma: f64 },
    /// Sigma(t) = diag(base_i + rate_i t); principal axes never rotate.
    Diagonal { base: Vec<f64>, rate: Vec<f64> },
    /// Sigma(t) = R(theta t) diag(d1, d2) R(theta t)^T in two dimensions.
    Rotating { d: (f64, f64), theta: f64 },
}

impl GaussianPath {
    pub fn default_rotating() -> Self {
        GaussianPath::Rotating {
            d: (1.0, 4.0),
            theta: 0.3,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GaussianPath::IsotropicLinear { dim, .. } => *dim,
            GaussianPath::Diagonal { base, .. } => base.len(),
            GaussianPath::Rotating { .. } => 2,
        }
    }

    pub fn covariance(&self, t: f64) -> Result<SpdMatrix> {
        let m = match self {
            GaussianPath::IsotropicLinear { dim, sigma } => {
                Matrix::identity(*dim).scale(1.0 + sigma * sigma * t)
            }
            GaussianPath::Diagonal { base, rate } => {
                let entries: Vec<f64> = base
                    .iter()
                    .zip(rate)
                    .map(|(b, r)| b + r * t)
                    .collect();
                Matrix::diag(&entries)
            }
            GaussianPath::Rotating { d, theta } => {
                let r = rotation(theta * t);
                r.matmul(&Matrix::diag(&[d.0, d.1])).matmul(&r.transpose())
            }
        };
        SpdMatrix::new(m)
    }

    /// d Sigma / dt, analytic.
    pub fn covariance_rate(&self, t: f64) -> Matrix {
        match self {
            GaussianPath::IsotropicLinear { dim, sigma } => {
                Matrix::identity(*dim).scale(sigma * sigma)
            }
            GaussianPath::Diagonal { rate, .. } => Matrix::diag(rate),
            GaussianPath::Rotating { d, theta } => {
                // d/dt R D R^T = theta (J Sigma - Sigma J) with J the rotation
                // generator.
                let sigma = {
                    let r = rotation(theta * t);
                    r.matmul(&Matrix::diag(&[d.0, d.1])).matmul(&r.transpose())
                };
                let j = Matrix::new(2, 2, vec![0.0, -1.0, 1.0, 0.0]).unwrap();
                j.matmul(&sigma).sub(&sigma.matmul(&j)).scale(*theta)
            }
        }
    }
}

fn rotation(phi: f64) -> Matrix {
    let (s, c) = (libm::sin(phi), libm::cos(phi));
    Matrix::new(2, 2, vec![c, -s, s, c]).unwrap()
}

/// Covariance of the interpolated density: M(t, s) = alpha^2 I + beta^2 Sigma(t).
pub fn interp_covariance(
    path: &GaussianPath,
    sch: Schedule,
    t: f64,
    s: f64,
) -> Result<SpdMatrix> {
    let (al, be) = (sch.alpha(s), sch.beta(s));
    let sigma = path.covariance(t)?;
    let m = Matrix::identity(path.dim())
        .scale(al * al)
        .add(&sigma.matrix().scale(be * be));
    SpdMatrix::new(m)
}

/// d M / ds = 2 alpha alpha' I + 2 beta beta' Sigma(t).
pub fn interp_covariance_ds(path: &GaussianPath, sch: Schedule, t: f64, s: f64) -> Result<Matrix> {
    let sigma = path.covariance(t)?;
    Ok(Matrix::identity(path.dim())
        .scale(2.0 * sch.alpha(s) * sch.dalpha(s))
        .add(&sigma.matrix().scale(2.0 * sch.beta(s) * sch.dbeta(s))))
}

/// d M / dt = beta^2 dSigma/dt.
pub fn interp_covariance_dt(path: &GaussianPath, sch: Schedule, t: f64, s: f64) -> Matrix {
    let be = sch.beta(s);
    path.covariance_rate(t).scale(be * be)
}

/// Slope matrix of the sampling-time velocity: v(x, t, s) = B_v(t, s) x with
/// B_v = (dM/ds) M^{-1} / 2.
pub fn oracle_v_matrix(path: &GaussianPath, sch: Schedule, t: f64, s: f64) -> Result<Matrix> {
    let m = interp_covariance(path, sch, t, s)?;
    let m_inv = invert(m.matrix())?;
    Ok(interp_covariance_ds(path, sch, t, s)?.matmul(&m_inv).scale(0.5))
}

/// Sampling-time oracle velocity at a point.
pub fn oracle_v(path: &GaussianPath, sch: Schedule, x: &[f64], t: f64, s: f64) -> Result<Vec<f64>> {
    if x.len() != path.dim() {
        return Err(Error::DimMismatch("oracle_v input".into()));
    }
    Ok(oracle_v_matrix(path, sch, t, s)?.matvec(x))
}

/// Analytic time derivative of the velocity slope:
/// dB_v/dt = [ (d^2M/dt ds) M^{-1} - (dM/ds) M^{-1} (dM/dt) M^{-1} ] / 2.
pub fn oracle_v_matrix_dt(path: &GaussianPath, sch: Schedule, t: f64, s: f64) -> Result<Matrix> {
    let m = interp_covariance(path, sch, t, s)?;
    let m_inv = invert(m.matrix())?;
    let ds_m = interp_covariance_ds(path, sch, t, s)?;
    let dt_m = interp_covariance_dt(path, sch, t, s);
    // d/dt (dM/ds) = 2 beta beta' dSigma/dt.
    let dtds_m = path
        .covariance_rate(t)
        .scale(2.0 * sch.beta(s) * sch.dbeta(s));
    let first = dtds_m.matmul(&m_inv);
    let second = ds_m.matmul(&m_inv).matmul(&dt_m).matmul(&m_inv);
    Ok(first.sub(&second).scale(0.5))
}

/// Physics-time matrix U(t, s) via the square-root Sylvester equation
/// U M + M^{1/2} U M^{1/2} = beta^2 dSigma/dt.
pub fn oracle_u(path: &GaussianPath, sch: Schedule, t: f64, s: f64) -> Result<Matrix> {
    let m = interp_covariance(path, sch, t, s)?;
    let rhs = interp_covariance_dt(path, sch, t, s);
    solve_sqrt_sylvester(&m, &rhs)
}

/// Finite-difference route for U: (d/dt M^{1/2}) M^{-1/2}, central step `h`.
pub fn oracle_u_fd(path: &GaussianPath, sch: Schedule, t: f64, s: f64, h: f64) -> Result<Matrix> {
    let root_p = spd_sqrt(&interp_covariance(path, sch, t + h, s)?)?;
    let root_m = spd_sqrt(&interp_covariance(path, sch, t - h, s)?)?;
    let droot = root_p.matrix().sub(root_m.matrix()).scale(1.0 / (2.0 * h));
    let root = spd_sqrt(&interp_covariance(path, sch, t, s)?)?;
    let root_inv = invert(root.matrix())?;
    Ok(droot.matmul(&root_inv))
}

/// Flow matrix of the Gaussian case: x_{t,s} = M(t, s)^{1/2} a.
pub fn oracle_flow_matrix(path: &GaussianPath, sch: Schedule, t: f64, s: f64) -> Result<SpdMatrix> {
    spd_sqrt(&interp_covariance(path, sch, t, s)?)
}

/// Commutator norm ||Sigma dSigma - dSigma Sigma||_F and the symmetry flag it
/// implies for U (threshold 1e-10).
pub fn symmetry_criterion(path: &GaussianPath, t: f64) -> Result<(f64, bool)> {
    let sigma = path.covariance(t)?;
    let rate = path.covariance_rate(t);
    let comm = sigma
        .matrix()
        .matmul(&rate)
        .sub(&rate.matmul(sigma.matrix()));
    let norm = comm.frobenius_norm();
    Ok((norm, norm < 1e-10))
}

/// H^1(rho) norm of a linear field B x under N(0, Sigma):
/// sqrt(tr(B Sigma B^T) + ||B||_F^2).
fn h1_norm_linear(b: &Matrix, sigma: &Matrix) -> f64 {
    let quad = b.matmul(sigma).matmul(&b.transpose()).trace();
    (quad + b.frobenius_norm().powi(2)).sqrt()
}

/// Check the physics-velocity regularity bound at one (path, t).
///
/// Returns (lhs, rhs): lhs is the H^1 norm of the linear physics-time field
/// at s = 1 under the marginal; rhs is the Gronwall-type bound
/// integral_0^1 ||dv/dt||_{H^1}(t, s) exp(integral_s^1 2 ||grad v||_op) ds
/// by 200-point midpoint quadrature (grad^2 v vanishes for linear fields).
pub fn h1_bound_check(path: &GaussianPath, sch: Schedule, t: f64) -> Result<(f64, f64)> {
    let u = oracle_u(path, sch, t, 1.0)?;
    let sigma = path.covariance(t)?;
    let lhs = h1_norm_linear(&u, sigma.matrix());

    const NQ: usize = 200;
    let ds = 1.0 / NQ as f64;
    // Midpoint grid: both integrals on the same nodes, cumulative from s to 1.
    let mut grad_norms = vec![0.0; NQ];
    let mut integrands = vec![0.0; NQ];
    for i in 0..NQ {
        let s = (i as f64 + 0.5) * ds;
        let bv = oracle_v_matrix(path, sch, t, s)?;
        grad_norms[i] = 2.0 * bv.spectral_norm();
        let dbv = oracle_v_matrix_dt(path, sch, t, s)?;
        let m = interp_covariance(path, sch, t, s)?;
        integrands[i] = h1_norm_linear(&dbv, m.matrix());
    }
    let mut rhs = 0.0;
    let mut tail = 0.0; // integral from s to 1 of the gradient-norm term
    for i in (0..NQ).rev() {
        // exponent uses the tail beyond this node plus half of this node.
        let expo = tail + 0.5 * grad_norms[i] * ds;
        rhs += integrands[i] * libm::exp(expo) * ds;
        tail += grad_norms[i] * ds;
    }
    Ok((lhs, rhs))
}

/// Kinetic energy of the linear field U x under N(0, Sigma):
/// tr(U Sigma U^T) / 2.
pub fn kinetic_energy_linear_field(u: &Matrix, sigma: &SpdMatrix) -> Result<f64> {
    if u.rows() != sigma.dim() || u.cols() != sigma.dim() {
        return Err(Error::DimMismatch("kinetic energy shapes".into()));
    }
    Ok(0.5 * u.matmul(sigma.matrix()).matmul(&u.transpose()).trace())
}

/// Symmetric admissible linear field with the same covariance derivative:
/// solves S Sigma + Sigma S = dSigma/dt. This is the minimum-kinetic-energy
/// comparator for the oracle U at s = 1.
pub fn symmetric_admissible_field(path: &GaussianPath, t: f64) -> Result<Matrix> {
    let sigma = path.covariance(t)?;
    solve_lyapunov(sigma.matrix(), &path.covariance_rate(t))
}

/// Sample n points from the marginal N(0, Sigma(t)).
pub fn sample_cloud(
    path: &GaussianPath,
    t: f64,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    let d = path.dim();
    let root = spd_sqrt(&path.covariance(t)?)?;
    let mut cloud = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.normal();
        }
        let x = root.matrix().matvec(&z);
        cloud.row_mut(i).copy_from_slice(&x);
    }
    Ok(cloud)
}

/// Marginal clouds sampled from the path at the given times.
pub fn sample_dataset(
    path: &GaussianPath,
    times: &[f64],
    samples: usize,
    rng: &mut SeededRng,
) -> Result<crate::dataset::MarginalDataset> {
    let clouds = times
        .iter()
        .map(|&t| sample_cloud(path, t, samples, rng))
        .collect::<Result<Vec<_>>>()?;
    crate::dataset::MarginalDataset::new(times.to_vec(), clouds, None)
}

/// The oracle sampling-time velocity as a flow-integrable field with analytic
/// derivatives.
pub struct GaussianVelocityField {
    pub path: GaussianPath,
    pub schedule: Schedule,
}

impl VelocityField for GaussianVelocityField {
    fn dim(&self) -> usize {
        self.path.dim()
    }

    fn eval(&self, x: &[f64], t: f64, s: f64) -> Vec<f64> {
        oracle_v_matrix(&self.path, self.schedule, t, s)
            .expect("gaussian path degenerate at queried (t, s)")
            .matvec(x)
    }

    fn jacobian(&self, _x: &[f64], t: f64, s: f64) -> Matrix {
        oracle_v_matrix(&self.path, self.schedule, t, s)
            .expect("gaussian path degenerate at queried (t, s)")
    }

    fn dt(&self, x: &[f64], t: f64, s: f64) -> Vec<f64> {
        oracle_v_matrix_dt(&self.path, self.schedule, t, s)
            .expect("gaussian path degenerate at queried (t, s)")
            .matvec(x)
    }
}

/// The induced physics-time oracle velocity u(x, t, s) = U(t, s) x as a
/// field (s defaults to the caller-supplied sampling time).
pub struct GaussianUField {
    pub path: GaussianPath,
    pub schedule: Schedule,
}

impl VelocityField for GaussianUField {
    fn dim(&self) -> usize {
        self.path.dim()
    }

    fn eval(&self, x: &[f64], t: f64, s: f64) -> Vec<f64> {
        oracle_u(&self.path, self.schedule, t, s)
            .expect("gaussian path degenerate at queried (t, s)")
            .matvec(x)
    }
}
