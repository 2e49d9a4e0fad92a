//! Physics-time velocity extraction: finite-difference targets from coherent
//! trajectories, the regression training loop, explicit-Euler rollouts, and
//! the two baselines (pointwise MSE trajectory fitting, chained optimal
//! transport).

use crate::cfm::{lr_at, LossTrace, TailAverager};
use crate::dataset::MarginalDataset;
use crate::error::{Error, Result};
use crate::flow::TrajectoryBundle;
use crate::linalg::{min_cost_assignment, Matrix, SeededRng};
use crate::nn::{adamw_step, batch_loss_grad, net_init, AdamWState, Batch, MlpSpec, NetParams};

#[derive(Debug, Clone)]
pub struct RegressionConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub threads: usize,
    /// Finite-difference flavor for the regression targets.
    pub fd: FdKind,
    /// Fraction of final steps whose weights are averaged into the result.
    pub tail_average: f64,
}

impl RegressionConfig {
    pub fn new(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            lr,
            seed,
            threads: 1,
            fd: FdKind::Forward,
            tail_average: 0.25,
        }
    }
}

/// Finite-difference flavor for regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdKind {
    /// (x_{k+1} - x_k) / (t_{k+1} - t_k), anchored at (x_k, t_k).
    #[default]
    Forward,
    /// (x_{k+1} - x_{k-1}) / (t_{k+1} - t_{k-1}) on interior nodes.
    Central,
    /// (x_{k+1} - x_k) / (t_{k+1} - t_k) anchored at the interval midpoint
    /// (state and time both averaged): second-order accurate.
    Midpoint,
}

/// Flattened (state, time, velocity-target) triples of one bundle.
#[derive(Debug, Clone)]
pub struct TargetSet {
    pub x: Matrix,
    pub t: Vec<f64>,
    pub target: Matrix,
    pub mu: Option<f64>,
}

impl TargetSet {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Velocity targets by finite differences along each trajectory.
pub fn fd_targets(bundle: &TrajectoryBundle, kind: FdKind) -> Result<TargetSet> {
    let times = bundle.times();
    if times.len() < 2 {
        return Err(Error::DegenerateGrid("need at least two times".into()));
    }
    for w in times.windows(2) {
        if w[1] - w[0] == 0.0 {
            return Err(Error::DegenerateGrid(format!(
                "repeated time {}",
                w[0]
            )));
        }
    }
    let d = bundle.dim();
    let m = bundle.n_trajectories();
    let anchors: Vec<usize> = match kind {
        FdKind::Forward | FdKind::Midpoint => (0..times.len() - 1).collect(),
        FdKind::Central => (1..times.len() - 1).collect(),
    };
    if anchors.is_empty() {
        return Err(Error::DegenerateGrid(
            "central differences need at least three times".into(),
        ));
    }
    let rows = m * anchors.len();
    let mut x = Matrix::zeros(rows, d);
    let mut target = Matrix::zeros(rows, d);
    let mut t = Vec::with_capacity(rows);
    let mut r = 0;
    for i in 0..m {
        for &k in &anchors {
            let xk = bundle.state(i, k);
            x.row_mut(r).copy_from_slice(xk);
            t.push(times[k]);
            match kind {
                FdKind::Forward => {
                    let dt = times[k + 1] - times[k];
                    let xn = bundle.state(i, k + 1);
                    for j in 0..d {
                        target[(r, j)] = (xn[j] - xk[j]) / dt;
                    }
                }
                FdKind::Midpoint => {
                    let dt = times[k + 1] - times[k];
                    let xn = bundle.state(i, k + 1);
                    for j in 0..d {
                        target[(r, j)] = (xn[j] - xk[j]) / dt;
                        x[(r, j)] = 0.5 * (xk[j] + xn[j]);
                    }
                    *t.last_mut().unwrap() = 0.5 * (times[k] + times[k + 1]);
                }
                FdKind::Central => {
                    let dt = times[k + 1] - times[k - 1];
                    let xp = bundle.state(i, k + 1);
                    let xm = bundle.state(i, k - 1);
                    for j in 0..d {
                        target[(r, j)] = (xp[j] - xm[j]) / dt;
                    }
                }
            }
            r += 1;
        }
    }
    Ok(TargetSet {
        x,
        t,
        target,
        mu: bundle.mu(),
    })
}

fn draw_batch(sets: &[TargetSet], batch: usize, with_mu: bool, rng: &mut SeededRng) -> Batch {
    let d = sets[0].x.cols();
    let totals: Vec<usize> = sets.iter().map(|s| s.len()).collect();
    let grand: usize = totals.iter().sum();
    let mut x = Matrix::zeros(batch, d);
    let mut target = Matrix::zeros(batch, d);
    let mut t = Vec::with_capacity(batch);
    let mut mu = if with_mu {
        Some(Vec::with_capacity(batch))
    } else {
        None
    };
    for r in 0..batch {
        let mut pick = rng.below(grand);
        let mut si = 0;
        while pick >= totals[si] {
            pick -= totals[si];
            si += 1;
        }
        let set = &sets[si];
        x.row_mut(r).copy_from_slice(set.x.row(pick));
        target.row_mut(r).copy_from_slice(set.target.row(pick));
        t.push(set.t[pick]);
        if let Some(m) = mu.as_mut() {
            m.push(set.mu.unwrap_or(0.0));
        }
    }
    Batch {
        x,
        t,
        s: vec![1.0; batch],
        mu,
        target,
    }
}

/// Fit the physics-time velocity to finite-difference targets of coherent
/// trajectory bundles (one bundle per physics parameter when conditioning).
pub fn train_u(
    bundles: &[TrajectoryBundle],
    cfg: &RegressionConfig,
    spec: &MlpSpec,
) -> Result<(NetParams, LossTrace)> {
    train_on_targets(
        &bundles
            .iter()
            .map(|b| fd_targets(b, cfg.fd))
            .collect::<Result<Vec<_>>>()?,
        cfg,
        spec,
    )
}

/// Pointwise MSE baseline: identical machinery, but the bundle is expected to
/// hold physically simulated (sample-coupled) trajectories.
pub fn train_mse_baseline(
    real_trajectories: &TrajectoryBundle,
    cfg: &RegressionConfig,
    spec: &MlpSpec,
) -> Result<(NetParams, LossTrace)> {
    train_u(std::slice::from_ref(real_trajectories), cfg, spec)
}

/// Shared regression loop over prebuilt target sets.
pub fn train_on_targets(
    sets: &[TargetSet],
    cfg: &RegressionConfig,
    spec: &MlpSpec,
) -> Result<(NetParams, LossTrace)> {
    if sets.is_empty() || sets.iter().any(|s| s.is_empty()) {
        return Err(Error::DimMismatch("empty regression target set".into()));
    }
    let d = sets[0].x.cols();
    let with_mu = sets[0].mu.is_some();
    for s in sets {
        if s.x.cols() != d {
            return Err(Error::DimMismatch("target sets disagree on dimension".into()));
        }
        if s.mu.is_some() != with_mu {
            return Err(Error::DimMismatch(
                "mu must be present on all target sets or none".into(),
            ));
        }
    }
    if spec.input_dim != d || spec.output_dim != d {
        return Err(Error::DimMismatch(format!(
            "network is {}->{} but data dimension is {d}",
            spec.input_dim, spec.output_dim
        )));
    }
    if spec.time_embed_dim > 0 && spec.mu_conditioned != with_mu {
        return Err(Error::DimMismatch(
            "spec mu conditioning must match target sets".into(),
        ));
    }

    let total: usize = sets.iter().map(|s| s.len()).sum();
    let steps_per_epoch = total.div_ceil(cfg.batch_size).max(1);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut rng = SeededRng::from_seed(cfg.seed);
    let mut params = net_init(spec, &mut rng)?;
    let mut opt = AdamWState::new(params.param_count(), cfg.lr, 0.0);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut averager = TailAverager::new(cfg.tail_average, total_steps, params.weights.len());
    let mut step = 0usize;
    let use_mu = spec.time_embed_dim > 0 && spec.mu_conditioned;
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            let batch = draw_batch(sets, cfg.batch_size.min(total).max(1), use_mu, &mut rng);
            let (loss, grad) = batch_loss_grad(&params, &batch, cfg.threads)?;
            opt.lr = lr_at(cfg.lr, step, total_steps);
            adamw_step(&mut opt, &mut params, &grad)?;
            averager.observe(step, &params.weights);
            epoch_loss += loss;
            step += 1;
        }
        trace.push((epoch, epoch_loss / steps_per_epoch as f64));
    }
    averager.apply(&mut params.weights);
    Ok((params, trace))
}

/// Explicit-Euler rollout states plus timing.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub times: Vec<f64>,
    /// Flat [sample][time][coordinate].
    pub states: Vec<f64>,
    pub n_samples: usize,
    pub dim: usize,
    pub mu: Option<f64>,
    /// Wall-clock seconds spent on network evaluations.
    pub wall_seconds: f64,
}

impl RolloutResult {
    pub fn state(&self, i: usize, k: usize) -> &[f64] {
        let off = (i * self.times.len() + k) * self.dim;
        &self.states[off..off + self.dim]
    }

    pub fn cloud_at(&self, k: usize) -> Matrix {
        Matrix::from_fn(self.n_samples, self.dim, |i, j| self.state(i, k)[j])
    }

    pub fn into_bundle(self) -> Result<TrajectoryBundle> {
        let base = self.cloud_at(0);
        TrajectoryBundle::from_parts(base, self.times, self.states, self.mu)
    }
}

/// Roll initial samples forward along the time grid with explicit Euler: one
/// network evaluation per sample per step.
pub fn rollout(
    u: &NetParams,
    x0: &Matrix,
    times: &[f64],
    mu: Option<f64>,
) -> Result<RolloutResult> {
    if times.len() < 2 {
        return Err(Error::DegenerateGrid("rollout needs at least two times".into()));
    }
    if x0.cols() != u.spec.input_dim {
        return Err(Error::DimMismatch("rollout initial condition width".into()));
    }
    let field = crate::flow::NetUField::new(u, mu)?;
    rollout_field(&field, x0, times, mu)
}

/// Euler rollout of an arbitrary physics-time field (used by oracle tests).
pub fn rollout_field<V: crate::flow::VelocityField + ?Sized>(
    u: &V,
    x0: &Matrix,
    times: &[f64],
    mu: Option<f64>,
) -> Result<RolloutResult> {
    let n = x0.rows();
    let d = x0.cols();
    let k1 = times.len();
    let mut states = vec![0.0; n * k1 * d];
    let start = std::time::Instant::now();
    for i in 0..n {
        let mut x = x0.row(i).to_vec();
        states[i * k1 * d..i * k1 * d + d].copy_from_slice(&x);
        for k in 0..k1 - 1 {
            let dt = times[k + 1] - times[k];
            let vel = u.eval(&x, times[k], 1.0);
            for j in 0..d {
                x[j] += dt * vel[j];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("rollout sample {i} at step {k}")));
            }
            let off = (i * k1 + k + 1) * d;
            states[off..off + d].copy_from_slice(&x);
        }
    }
    Ok(RolloutResult {
        times: times.to_vec(),
        states,
        n_samples: n,
        dim: d,
        mu,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Baseline trajectories from chained exact optimal-transport couplings
/// between consecutive clouds (squared Euclidean cost).
///
/// Clouds of unequal sizes are subsampled uniformly without replacement to
/// the smallest cloud size using `seed`.
pub fn ot_coupling_trajectories(ds: &MarginalDataset, seed: u64) -> Result<TrajectoryBundle> {
    let k1 = ds.n_marginals();
    let n_min = ds.clouds().iter().map(|c| c.rows()).min().unwrap();
    let mut rng = SeededRng::from_seed(seed);
    let clouds: Vec<Matrix> = ds
        .clouds()
        .iter()
        .map(|c| {
            if c.rows() == n_min {
                c.clone()
            } else {
                subsample_rows(c, n_min, &mut rng)
            }
        })
        .collect();

    let d = ds.dim();
    let mut index: Vec<usize> = (0..n_min).collect();
    let mut states = vec![0.0; n_min * k1 * d];
    for i in 0..n_min {
        states[i * k1 * d..i * k1 * d + d].copy_from_slice(clouds[0].row(i));
    }
    for k in 0..k1 - 1 {
        let cost = pairwise_sq_cost(&clouds[k], &clouds[k + 1]);
        let perm = min_cost_assignment(&cost)?;
        for i in 0..n_min {
            index[i] = perm[index[i]];
            let off = (i * k1 + k + 1) * d;
            states[off..off + d].copy_from_slice(clouds[k + 1].row(index[i]));
        }
    }
    TrajectoryBundle::from_parts(clouds[0].clone(), ds.times().to_vec(), states, ds.mu())
}

pub(crate) fn pairwise_sq_cost(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols(), b.cols());
    Matrix::from_fn(a.rows(), b.rows(), |i, j| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(p, q)| (p - q) * (p - q))
            .sum()
    })
}

pub fn subsample_rows(m: &Matrix, n: usize, rng: &mut SeededRng) -> Matrix {
    // Partial Fisher-Yates: first n entries of a random permutation.
    let mut idx: Vec<usize> = (0..m.rows()).collect();
    for i in 0..n {
        let j = i + rng.below(m.rows() - i);
        idx.swap(i, j);
    }
    Matrix::from_fn(n, m.cols(), |i, j| m[(idx[i], j)])
}

#[cfg(test)]
mod tests;
