//! PDE-level consistency checks between sampling-time and physics-time
//! velocity fields.

use crate::dataset::MarginalDataset;
use crate::error::{Error, Result};
use crate::flow::{analytic_u, flow_with_jacobian, OdeConfig, VelocityField};
use crate::linalg::{solve_many, Matrix};

/// One evaluation point of a residual check.
#[derive(Debug, Clone)]
pub struct Probe {
    pub x: Vec<f64>,
    pub t: f64,
    pub s: f64,
}

/// Residual norms at each probe plus summary statistics.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub probes: Vec<Probe>,
    pub residual_norms: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

/// Pointwise residual of the velocity-consistency identity
/// du/ds + (v . grad) u - (u . grad) v - dv/dt at the given probes.
///
/// Both fields are evaluated through their trait derivatives (analytic where
/// available, scaled central differences otherwise).
pub fn compatibility_residual(
    v: &dyn VelocityField,
    u: &dyn VelocityField,
    probes: &[Probe],
) -> Result<ResidualReport> {
    let d = v.dim();
    if u.dim() != d {
        return Err(Error::DimMismatch("field dimensions differ".into()));
    }
    let mut norms = Vec::with_capacity(probes.len());
    for p in probes {
        if p.x.len() != d {
            return Err(Error::DimMismatch("probe dimension".into()));
        }
        let du_ds = u.ds(&p.x, p.t, p.s);
        let v_val = v.eval(&p.x, p.t, p.s);
        let u_val = u.eval(&p.x, p.t, p.s);
        let grad_u = u.jacobian(&p.x, p.t, p.s);
        let grad_v = v.jacobian(&p.x, p.t, p.s);
        let adv_u = grad_u.matvec(&v_val); // (v . grad) u
        let adv_v = grad_v.matvec(&u_val); // (u . grad) v
        let dv_dt = v.dt(&p.x, p.t, p.s);
        let mut sq = 0.0;
        for i in 0..d {
            let r = du_ds[i] + adv_u[i] - adv_v[i] - dv_dt[i];
            if !r.is_finite() {
                return Err(Error::NonFinite("compatibility residual".into()));
            }
            sq += r * r;
        }
        norms.push(sq.sqrt());
    }
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let mean = if norms.is_empty() {
        0.0
    } else {
        norms.iter().sum::<f64>() / norms.len() as f64
    };
    Ok(ResidualReport {
        probes: probes.to_vec(),
        residual_norms: norms,
        max,
        mean,
    })
}

/// Polynomial test functions for the weak continuity-equation check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    /// phi = x_j
    X(usize),
    /// phi = x_j x_l
    XX(usize, usize),
}

impl Moment {
    pub fn label(&self) -> String {
        match self {
            Moment::X(j) => format!("x{j}"),
            Moment::XX(j, l) => format!("x{j}*x{l}"),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Moment::X(j) => x[j],
            Moment::XX(j, l) => x[j] * x[l],
        }
    }

    fn grad_dot(&self, x: &[f64], u: &[f64]) -> f64 {
        match *self {
            Moment::X(j) => u[j],
            Moment::XX(j, l) => u[j] * x[l] + u[l] * x[j],
        }
    }
}

/// One row of the moment check: d/dt of an empirical moment against the
/// transport term, evaluated on one marginal interval.
#[derive(Debug, Clone)]
pub struct MomentRow {
    pub moment: Moment,
    pub t: f64,
    /// Finite-difference time derivative of the empirical moment.
    pub lhs: f64,
    /// Empirical mean of u . grad(phi), trapezoidal over the interval.
    pub rhs: f64,
}

/// Weak-form continuity check: for each test moment and each marginal
/// interval, compare the finite-difference derivative of the empirical
/// moment with the empirical mean of u . grad(phi).
pub fn continuity_moment_check(
    u: &dyn VelocityField,
    ds: &MarginalDataset,
    moments: &[Moment],
) -> Result<Vec<MomentRow>> {
    let times = ds.times();
    let d = ds.dim();
    for m in moments {
        let max_idx = match *m {
            Moment::X(j) => j,
            Moment::XX(j, l) => j.max(l),
        };
        if max_idx >= d {
            return Err(Error::DimMismatch(format!(
                "moment {} out of dimension {d}",
                m.label()
            )));
        }
    }
    let mean_phi = |k: usize, m: &Moment| -> f64 {
        let cloud = ds.cloud(k);
        (0..cloud.rows()).map(|i| m.eval(cloud.row(i))).sum::<f64>() / cloud.rows() as f64
    };
    let mean_transport = |k: usize, m: &Moment| -> f64 {
        let cloud = ds.cloud(k);
        let mut acc = 0.0;
        for i in 0..cloud.rows() {
            let x = cloud.row(i);
            let vel = u.eval(x, times[k], 1.0);
            acc += m.grad_dot(x, &vel);
        }
        acc / cloud.rows() as f64
    };
    let mut rows = Vec::new();
    for m in moments {
        for k in 0..times.len() - 1 {
            let dt = times[k + 1] - times[k];
            if dt == 0.0 {
                return Err(Error::DegenerateGrid(format!("repeated time {}", times[k])));
            }
            let lhs = (mean_phi(k + 1, m) - mean_phi(k, m)) / dt;
            let rhs = 0.5 * (mean_transport(k, m) + mean_transport(k + 1, m));
            rows.push(MomentRow {
                moment: *m,
                t: 0.5 * (times[k] + times[k + 1]),
                lhs,
                rhs,
            });
        }
    }
    Ok(rows)
}

/// Maximum |div u| of the induced physics-time velocity over base-space
/// probes, for a sampling-time field with (analytically) zero divergence.
///
/// The spatial Jacobian of u at the flow point is assembled by chain rule:
/// finite differences of u with respect to the base point, multiplied by the
/// inverse flow Jacobian.
pub fn divergence_preservation_check(
    v: &dyn VelocityField,
    probes: &[(Vec<f64>, f64)],
    s: f64,
    ode: &OdeConfig,
) -> Result<f64> {
    let d = v.dim();
    let mut worst = 0.0f64;
    for (a, t) in probes {
        if a.len() != d {
            return Err(Error::DimMismatch("probe dimension".into()));
        }
        let (_, dphi) = flow_with_jacobian(v, a, *t, s, ode)?;
        // d u / d a by central differences over the base point.
        let mut du_da = Matrix::zeros(d, d);
        let mut ap = a.clone();
        for j in 0..d {
            let h = 1e-4 * (1.0 + a[j].abs());
            ap[j] = a[j] + h;
            let (_, up) = analytic_u(v, &ap, *t, s, ode)?;
            ap[j] = a[j] - h;
            let (_, um) = analytic_u(v, &ap, *t, s, ode)?;
            ap[j] = a[j];
            for i in 0..d {
                du_da[(i, j)] = (up[i] - um[i]) / (2.0 * h);
            }
        }
        // Du = (du/da) (DPhi)^{-1}; its trace is the divergence.
        let du = solve_many(&dphi.transpose(), &du_da.transpose())?.transpose();
        let div = du.trace();
        if !div.is_finite() {
            return Err(Error::NonFinite("divergence estimate".into()));
        }
        worst = worst.max(div.abs());
    }
    Ok(worst)
}
