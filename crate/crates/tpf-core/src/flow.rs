//! Numerical realization of the two-parameter flow: sampling-time ODE
//! integration, joint variational (Jacobian) integration, inverse maps,
//! marginal-to-marginal transfer, coherent-trajectory synthesis, and the
//! quadrature that turns a sampling-time velocity into the induced
//! physics-time velocity.

use crate::error::{Error, Result};
use crate::linalg::{determinant, sample_standard_normal, solve_linear, Matrix, SeededRng};
use crate::nn::{net_forward, NetParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        }
    }

    pub fn from_name(name: &str) -> Result<Scheme> {
        match name {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(Error::Config(format!("unknown ode scheme '{other}'"))),
        }
    }
}

/// Sampling-time integrator configuration.
#[derive(Debug, Clone, Copy)]
pub struct OdeConfig {
    pub steps: usize,
    pub scheme: Scheme,
}

impl OdeConfig {
    pub fn rk4(steps: usize) -> Self {
        Self {
            steps,
            scheme: Scheme::Rk4,
        }
    }

    pub fn euler(steps: usize) -> Self {
        Self {
            steps,
            scheme: Scheme::Euler,
        }
    }
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig::rk4(100)
    }
}

/// A sampling-time velocity field v(x, t, s), evaluable anywhere in its
/// domain. Spatial Jacobians and physics-time derivatives default to central
/// finite differences; analytic fields override them.
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], t: f64, s: f64) -> Vec<f64>;

    /// Spatial Jacobian dv_i/dx_j. Central differences with a coordinate-
    /// scaled step h = 1e-5 (1 + |x_j|) unless overridden.
    fn jacobian(&self, x: &[f64], t: f64, s: f64) -> Matrix {
        let d = self.dim();
        let mut jac = Matrix::zeros(d, d);
        let mut xp = x.to_vec();
        for j in 0..d {
            let h = 1e-5 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            let fp = self.eval(&xp, t, s);
            xp[j] = x[j] - h;
            let fm = self.eval(&xp, t, s);
            xp[j] = x[j];
            for i in 0..d {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// Physics-time derivative dv/dt. Central differences with
    /// h = 1e-4 (1 + |t|) unless overridden.
    fn dt(&self, x: &[f64], t: f64, s: f64) -> Vec<f64> {
        let h = 1e-4 * (1.0 + t.abs());
        let fp = self.eval(x, t + h, s);
        let fm = self.eval(x, t - h, s);
        fp.iter().zip(&fm).map(|(p, m)| (p - m) / (2.0 * h)).collect()
    }

    /// Sampling-time derivative dv/ds by central differences (h = 1e-4).
    /// Fields without s-dependence return zero automatically.
    fn ds(&self, x: &[f64], t: f64, s: f64) -> Vec<f64> {
        let h = 1e-4;
        let fp = self.eval(x, t, s + h);
        let fm = self.eval(x, t, s - h);
        fp.iter().zip(&fm).map(|(p, m)| (p - m) / (2.0 * h)).collect()
    }
}

/// Network-backed sampling-time field v_theta(x, t, s[, mu]).
pub struct NetField<'a> {
    params: &'a NetParams,
    mu: Option<f64>,
}

impl<'a> NetField<'a> {
    pub fn new(params: &'a NetParams, mu: Option<f64>) -> Result<Self> {
        if params.spec.input_dim != params.spec.output_dim {
            return Err(Error::DimMismatch(
                "velocity network must map the state space to itself".into(),
            ));
        }
        if params.spec.time_embed_dim > 0 && params.spec.mu_conditioned != mu.is_some() {
            return Err(Error::DimMismatch(
                "mu must be supplied iff the network conditions on it".into(),
            ));
        }
        Ok(Self { params, mu })
    }
}

impl VelocityField for NetField<'_> {
    fn dim(&self) -> usize {
        self.params.spec.input_dim
    }

    fn eval(&self, x: &[f64], t: f64, s: f64) -> Vec<f64> {
        net_forward(self.params, x, t, s, self.mu).expect("NetField validated at construction")
    }
}

/// Network-backed physics-time field u_theta(x, t[, mu]); the sampling-time
/// argument is pinned to s = 1 internally.
pub struct NetUField<'a> {
    params: &'a NetParams,
    mu: Option<f64>,
}

impl<'a> NetUField<'a> {
    pub fn new(params: &'a NetParams, mu: Option<f64>) -> Result<Self> {
        if params.spec.input_dim != params.spec.output_dim {
            return Err(Error::DimMismatch(
                "velocity network must map the state space to itself".into(),
            ));
        }
        if params.spec.time_embed_dim > 0 && params.spec.mu_conditioned != mu.is_some() {
            return Err(Error::DimMismatch(
                "mu must be supplied iff the network conditions on it".into(),
            ));
        }
        Ok(Self { params, mu })
    }
}

impl VelocityField for NetUField<'_> {
    fn dim(&self) -> usize {
        self.params.spec.input_dim
    }

    fn eval(&self, x: &[f64], t: f64, _s: f64) -> Vec<f64> {
        net_forward(self.params, x, t, 1.0, self.mu).expect("NetUField validated at construction")
    }
}

/// The physics-time velocity induced by a sampling-time field, evaluable at
/// arbitrary (x, t, s): the state is pulled back to its base point along the
/// s-dynamics and the quadrature of [`analytic_u`] is run forward again.
pub struct InducedUField<'a, V: VelocityField + ?Sized> {
    pub v: &'a V,
    pub ode: OdeConfig,
}

impl<V: VelocityField + ?Sized> VelocityField for InducedUField<'_, V> {
    fn dim(&self) -> usize {
        self.v.dim()
    }

    fn eval(&self, x: &[f64], t: f64, s: f64) -> Vec<f64> {
        let a = integrate(self.v, x, t, s, 0.0, &self.ode)
            .expect("induced-u pullback blew up");
        let (_, u) = analytic_u(self.v, &a, t, s, &self.ode)
            .expect("induced-u quadrature failed");
        u
    }
}

/// Closure-backed analytic field, mainly for tests and synthetic cases.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, f64) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], t: f64, s: f64) -> Vec<f64> {
        (self.f)(x, t, s)
    }
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} blew up mid-integration")));
    }
    Ok(())
}

/// Integrate dx/ds = v(x, t, s) from (a, s=0) to `s_target` (which may be
/// negative-direction when called through the inverse map).
fn integrate<V: VelocityField + ?Sized>(
    v: &V,
    a: &[f64],
    t: f64,
    s_from: f64,
    s_to: f64,
    ode: &OdeConfig,
) -> Result<Vec<f64>> {
    let mut x = a.to_vec();
    if s_from == s_to {
        return Ok(x);
    }
    check_finite(&x, "initial state")?;
    let steps = ode.steps.max(1);
    let ds = (s_to - s_from) / steps as f64;
    let mut s = s_from;
    for _ in 0..steps {
        match ode.scheme {
            Scheme::Euler => {
                let k1 = v.eval(&x, t, s);
                for (xi, ki) in x.iter_mut().zip(&k1) {
                    *xi += ds * ki;
                }
            }
            Scheme::Rk4 => {
                let d = x.len();
                let k1 = v.eval(&x, t, s);
                let mut tmp = vec![0.0; d];
                for i in 0..d {
                    tmp[i] = x[i] + 0.5 * ds * k1[i];
                }
                let k2 = v.eval(&tmp, t, s + 0.5 * ds);
                for i in 0..d {
                    tmp[i] = x[i] + 0.5 * ds * k2[i];
                }
                let k3 = v.eval(&tmp, t, s + 0.5 * ds);
                for i in 0..d {
                    tmp[i] = x[i] + ds * k3[i];
                }
                let k4 = v.eval(&tmp, t, s + ds);
                for i in 0..d {
                    x[i] += ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        s += ds;
        check_finite(&x, "flow state")?;
    }
    Ok(x)
}

/// Transport a base sample to sampling time `s` at physics time `t`.
pub fn flow_to<V: VelocityField + ?Sized>(
    v: &V,
    a: &[f64],
    t: f64,
    s: f64,
    ode: &OdeConfig,
) -> Result<Vec<f64>> {
    integrate(v, a, t, 0.0, s, ode)
}

/// Full transport onto the marginal at physics time `t` (s = 1).
pub fn flow_forward<V: VelocityField + ?Sized>(
    v: &V,
    a: &[f64],
    t: f64,
    ode: &OdeConfig,
) -> Result<Vec<f64>> {
    integrate(v, a, t, 0.0, 1.0, ode)
}

/// Map a marginal sample back to its base-noise preimage (s = 1 down to 0).
pub fn flow_inverse<V: VelocityField + ?Sized>(
    v: &V,
    x: &[f64],
    t: f64,
    ode: &OdeConfig,
) -> Result<Vec<f64>> {
    integrate(v, x, t, 1.0, 0.0, ode)
}

/// Push a sample of the marginal at `t` onto the marginal at `t_prime` by
/// composing the inverse map with the forward map.
pub fn marginal_transfer<V: VelocityField + ?Sized>(
    v: &V,
    x: &[f64],
    t: f64,
    t_prime: f64,
    ode: &OdeConfig,
) -> Result<Vec<f64>> {
    let a = flow_inverse(v, x, t, ode)?;
    flow_forward(v, &a, t_prime, ode)
}

/// Integrate the state jointly with the variational equation
/// dJ/ds = Dv(x, t, s) J, J(0) = I.
pub fn flow_with_jacobian<V: VelocityField + ?Sized>(
    v: &V,
    a: &[f64],
    t: f64,
    s: f64,
    ode: &OdeConfig,
) -> Result<(Vec<f64>, Matrix)> {
    let d = v.dim();
    let mut x = a.to_vec();
    let mut jac = Matrix::identity(d);
    if s != 0.0 {
        let steps = ode.steps.max(1);
        let ds = s / steps as f64;
        let mut sc = 0.0;
        for _ in 0..steps {
            step_joint(v, t, &mut x, &mut jac, None, sc, ds, ode.scheme)?;
            sc += ds;
            check_finite(&x, "flow state")?;
        }
    }
    let det = determinant(&jac);
    if det.abs() < 1e-12 {
        return Err(Error::SingularJacobian(det.abs()));
    }
    Ok((x, jac))
}

/// Evaluate the induced physics-time velocity at the flow point:
/// u(x_{t,s}, t, s) = J(s) * integral_0^s J(sigma)^{-1} dv/dt(x_sigma) dsigma.
///
/// Returns the flow point and u there. At s = 0 the result is exactly zero.
pub fn analytic_u<V: VelocityField + ?Sized>(
    v: &V,
    a: &[f64],
    t: f64,
    s: f64,
    ode: &OdeConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = v.dim();
    let mut x = a.to_vec();
    if s == 0.0 {
        return Ok((x, vec![0.0; d]));
    }
    let mut jac = Matrix::identity(d);
    let mut acc = vec![0.0; d];
    let steps = ode.steps.max(1);
    let ds = s / steps as f64;
    let mut sc = 0.0;
    for _ in 0..steps {
        step_joint(v, t, &mut x, &mut jac, Some(&mut acc), sc, ds, ode.scheme)?;
        sc += ds;
        check_finite(&x, "flow state")?;
        check_finite(&acc, "quadrature accumulator")?;
    }
    let u = jac.matvec(&acc);
    Ok((x, u))
}

/// One integration step of the joint system (x, J[, accumulator]).
#[allow(clippy::too_many_arguments)]
fn step_joint<V: VelocityField + ?Sized>(
    v: &V,
    t: f64,
    x: &mut Vec<f64>,
    jac: &mut Matrix,
    mut acc: Option<&mut Vec<f64>>,
    s: f64,
    ds: f64,
    scheme: Scheme,
) -> Result<()> {
    let d = x.len();
    // RHS of the joint system at a stage point.
    let rhs = |xs: &[f64], js: &Matrix, ss: f64| -> Result<(Vec<f64>, Matrix, Option<Vec<f64>>)> {
        let dx = v.eval(xs, t, ss);
        let dj = v.jacobian(xs, t, ss).matmul(js);
        let da = if acc.is_some() {
            let dtv = v.dt(xs, t, ss);
            // J^{-1} dv/dt by linear solve; a singular stage Jacobian means
            // the flow lost invertibility.
            let w = solve_linear(js, &dtv).map_err(|_| {
                Error::SingularJacobian(determinant(js).abs())
            })?;
            Some(w)
        } else {
            None
        };
        Ok((dx, dj, da))
    };

    match scheme {
        Scheme::Euler => {
            let (dx, dj, da) = rhs(x, jac, s)?;
            for i in 0..d {
                x[i] += ds * dx[i];
            }
            *jac = jac.add(&dj.scale(ds));
            if let (Some(acc), Some(da)) = (acc.as_deref_mut(), da) {
                for i in 0..d {
                    acc[i] += ds * da[i];
                }
            }
        }
        Scheme::Rk4 => {
            let (dx1, dj1, da1) = rhs(x, jac, s)?;
            let x2: Vec<f64> = (0..d).map(|i| x[i] + 0.5 * ds * dx1[i]).collect();
            let j2 = jac.add(&dj1.scale(0.5 * ds));
            let (dx2, dj2, da2) = rhs(&x2, &j2, s + 0.5 * ds)?;
            let x3: Vec<f64> = (0..d).map(|i| x[i] + 0.5 * ds * dx2[i]).collect();
            let j3 = jac.add(&dj2.scale(0.5 * ds));
            let (dx3, dj3, da3) = rhs(&x3, &j3, s + 0.5 * ds)?;
            let x4: Vec<f64> = (0..d).map(|i| x[i] + ds * dx3[i]).collect();
            let j4 = jac.add(&dj3.scale(ds));
            let (dx4, dj4, da4) = rhs(&x4, &j4, s + ds)?;
            for i in 0..d {
                x[i] += ds / 6.0 * (dx1[i] + 2.0 * dx2[i] + 2.0 * dx3[i] + dx4[i]);
            }
            *jac = jac.add(
                &dj1.add(&dj2.scale(2.0))
                    .add(&dj3.scale(2.0))
                    .add(&dj4)
                    .scale(ds / 6.0),
            );
            if let Some(acc) = acc.as_deref_mut() {
                let (da1, da2, da3, da4) = (
                    da1.unwrap(),
                    da2.unwrap(),
                    da3.unwrap(),
                    da4.unwrap(),
                );
                for i in 0..d {
                    acc[i] += ds / 6.0 * (da1[i] + 2.0 * da2[i] + 2.0 * da3[i] + da4[i]);
                }
            }
        }
    }
    Ok(())
}

/// Noise-coupled synthetic trajectories: every row shares one base draw
/// across all physics times.
#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    base: Matrix,
    times: Vec<f64>,
    /// Flat [trajectory][time][coordinate].
    states: Vec<f64>,
    mu: Option<f64>,
}

impl TrajectoryBundle {
    pub fn from_parts(
        base: Matrix,
        times: Vec<f64>,
        states: Vec<f64>,
        mu: Option<f64>,
    ) -> Result<Self> {
        let (m, d) = (base.rows(), base.cols());
        if states.len() != m * times.len() * d {
            return Err(Error::DimMismatch(format!(
                "states length {} vs {} trajectories x {} times x {} dims",
                states.len(),
                m,
                times.len(),
                d
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory state".into()));
        }
        Ok(Self {
            base,
            times,
            states,
            mu,
        })
    }

    pub fn n_trajectories(&self) -> usize {
        self.base.rows()
    }

    pub fn dim(&self) -> usize {
        self.base.cols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn state(&self, traj: usize, k: usize) -> &[f64] {
        let d = self.dim();
        let off = (traj * self.times.len() + k) * d;
        &self.states[off..off + d]
    }

    /// Snapshot of all trajectories at time index `k` as an n x d cloud.
    pub fn cloud_at(&self, k: usize) -> Matrix {
        let d = self.dim();
        Matrix::from_fn(self.n_trajectories(), d, |i, j| self.state(i, k)[j])
    }
}

/// Generate `m` coherent trajectories by pushing shared base draws onto every
/// requested physics time. Work parallelizes over trajectories into disjoint
/// output slots, so the result is independent of the thread count.
pub fn synthesize_bundle<V: VelocityField + ?Sized>(
    v: &V,
    rng: &mut SeededRng,
    m: usize,
    times: &[f64],
    ode: &OdeConfig,
    mu: Option<f64>,
    threads: usize,
) -> Result<TrajectoryBundle> {
    let (bundle, dropped) = synthesize_bundle_lossy(v, rng, m, times, ode, mu, threads)?;
    if dropped > 0 {
        return Err(Error::NonFinite(format!(
            "{dropped} of {m} trajectories blew up during synthesis"
        )));
    }
    Ok(bundle)
}

/// Like [`synthesize_bundle`] but drops trajectories that blow up instead of
/// failing, returning how many were dropped. The regression stage uses this
/// and logs the count.
pub fn synthesize_bundle_lossy<V: VelocityField + ?Sized>(
    v: &V,
    rng: &mut SeededRng,
    m: usize,
    times: &[f64],
    ode: &OdeConfig,
    mu: Option<f64>,
    threads: usize,
) -> Result<(TrajectoryBundle, usize)> {
    if m == 0 {
        return Err(Error::DimMismatch("bundle needs at least one trajectory".into()));
    }
    if times.is_empty() {
        return Err(Error::DegenerateGrid("empty time grid".into()));
    }
    let d = v.dim();
    let base = sample_standard_normal(rng, m, d);
    let k1 = times.len();
    let mut states = vec![f64::NAN; m * k1 * d];
    let threads = threads.max(1).min(m);
    let chunk = m.div_ceil(threads);

    let ok: Vec<bool> = {
        let mut flags = vec![true; m];
        let state_chunks: Vec<&mut [f64]> = states.chunks_mut(chunk * k1 * d).collect();
        let flag_chunks: Vec<&mut [bool]> = flags.chunks_mut(chunk).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (ci, (slot, flag)) in state_chunks.into_iter().zip(flag_chunks).enumerate() {
                let base = &base;
                handles.push(scope.spawn(move || {
                    let lo = ci * chunk;
                    for (li, traj_ok) in flag.iter_mut().enumerate() {
                        let i = lo + li;
                        if i >= m {
                            break;
                        }
                        for (k, &t) in times.iter().enumerate() {
                            match flow_forward(v, base.row(i), t, ode) {
                                Ok(x) => {
                                    let off = (li * k1 + k) * d;
                                    slot[off..off + d].copy_from_slice(&x);
                                }
                                Err(Error::NonFinite(_)) => {
                                    *traj_ok = false;
                                    break;
                                }
                                Err(e) => return Err(e),
                            }
                        }
                    }
                    Ok(())
                }));
            }
            for h in handles {
                h.join().expect("synthesis worker panicked")?;
            }
            Ok::<(), Error>(())
        })?;
        flags
    };

    let kept: Vec<usize> = (0..m).filter(|&i| ok[i]).collect();
    let dropped = m - kept.len();
    if kept.is_empty() {
        return Err(Error::NonFinite("every trajectory blew up".into()));
    }
    if dropped == 0 {
        let bundle = TrajectoryBundle::from_parts(base, times.to_vec(), states, mu)?;
        return Ok((bundle, 0));
    }
    let mut kept_states = Vec::with_capacity(kept.len() * k1 * d);
    for &i in &kept {
        kept_states.extend_from_slice(&states[i * k1 * d..(i + 1) * k1 * d]);
    }
    let kept_base = Matrix::from_fn(kept.len(), d, |r, c| base[(kept[r], c)]);
    let bundle = TrajectoryBundle::from_parts(kept_base, times.to_vec(), kept_states, mu)?;
    Ok((bundle, dropped))
}
