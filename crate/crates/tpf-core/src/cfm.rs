//! Conditional flow matching: sampling-time velocity training across all
//! physics-time marginals (and physics parameters, when present).

use crate::dataset::MarginalDataset;
use crate::error::{Error, Result};
use crate::interpolant::{interpolant_point, Schedule};
use crate::linalg::{Matrix, SeededRng};
use crate::nn::{adamw_step, batch_loss, batch_loss_grad, net_init, AdamWState, Batch, MlpSpec, NetParams};

/// Training configuration for the sampling-time velocity.
#[derive(Debug, Clone)]
pub struct CfmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub schedule: Schedule,
    /// Gradient shards; results are deterministic per thread count.
    pub threads: usize,
    /// Fraction of final steps whose weights are averaged into the returned
    /// parameters (0 disables). Damps optimizer oscillation around the
    /// optimum, which otherwise leaks into time derivatives of the field.
    pub tail_average: f64,
}

impl CfmTrainConfig {
    pub fn new(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            lr,
            weight_decay: 0.0,
            seed,
            schedule: Schedule::Trig,
            threads: 1,
            tail_average: 0.25,
        }
    }
}

/// A sampled flow-matching batch: paired noise and data rows plus the
/// (t, s[, mu]) coordinates each pair was drawn at.
#[derive(Debug, Clone)]
pub struct CfmBatch {
    pub noise: Matrix,
    pub data: Matrix,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub mu: Option<Vec<f64>>,
}

impl CfmBatch {
    pub fn len(&self) -> usize {
        self.noise.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Interpolate every row into a regression batch: inputs are the
    /// interpolant points, targets the interpolant velocities.
    pub fn to_regression(&self, sch: Schedule) -> Result<Batch> {
        let b = self.len();
        if b == 0 {
            return Err(Error::DimMismatch("empty flow-matching batch".into()));
        }
        let d = self.noise.cols();
        let mut x = Matrix::zeros(b, d);
        let mut target = Matrix::zeros(b, d);
        for r in 0..b {
            let (point, vel) = interpolant_point(sch, self.noise.row(r), self.data.row(r), self.s[r])?;
            x.row_mut(r).copy_from_slice(&point);
            target.row_mut(r).copy_from_slice(&vel);
        }
        Ok(Batch {
            x,
            t: self.t.clone(),
            s: self.s.clone(),
            mu: self.mu.clone(),
            target,
        })
    }
}

/// Mean squared flow-matching residual of the batch under the given network.
pub fn cfm_loss(p: &NetParams, batch: &CfmBatch, sch: Schedule) -> Result<f64> {
    batch_loss(p, &batch.to_regression(sch)?)
}

/// Draw one training batch: uniform over (dataset, marginal, sample) with
/// s ~ U[0, 1] and fresh standard-normal noise rows.
pub fn sample_cfm_batch(
    datasets: &[MarginalDataset],
    batch_size: usize,
    with_mu: bool,
    rng: &mut SeededRng,
) -> CfmBatch {
    let d = datasets[0].dim();
    let mut noise = Matrix::zeros(batch_size, d);
    let mut data = Matrix::zeros(batch_size, d);
    let mut t = Vec::with_capacity(batch_size);
    let mut s = Vec::with_capacity(batch_size);
    let mut mu = if with_mu {
        Some(Vec::with_capacity(batch_size))
    } else {
        None
    };
    for r in 0..batch_size {
        let ds = &datasets[rng.below(datasets.len())];
        let k = rng.below(ds.n_marginals());
        let cloud = ds.cloud(k);
        let i = rng.below(cloud.rows());
        data.row_mut(r).copy_from_slice(cloud.row(i));
        for v in noise.row_mut(r) {
            *v = rng.normal();
        }
        t.push(ds.times()[k]);
        s.push(rng.uniform());
        if let Some(m) = mu.as_mut() {
            m.push(ds.mu().unwrap_or(0.0));
        }
    }
    CfmBatch {
        noise,
        data,
        t,
        s,
        mu,
    }
}

fn check_datasets(datasets: &[MarginalDataset], spec: &MlpSpec) -> Result<()> {
    if datasets.is_empty() {
        return Err(Error::DimMismatch("no datasets".into()));
    }
    let d = datasets[0].dim();
    let with_mu = datasets[0].mu().is_some();
    for ds in datasets {
        if ds.dim() != d {
            return Err(Error::DimMismatch("datasets disagree on dimension".into()));
        }
        if ds.mu().is_some() != with_mu {
            return Err(Error::DimMismatch(
                "mu must be present on all datasets or none".into(),
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
            "spec mu conditioning must match dataset mu presence".into(),
        ));
    }
    Ok(())
}

/// Learning rate at a given step: hold, then decay by 0.3 every 10% of the
/// remaining steps. Tail accuracy of the quadratic losses needs the decay.
pub(crate) fn lr_at(base: f64, step: usize, total: usize) -> f64 {
    let hold = (total as f64 * 0.6) as usize;
    if step < hold || total <= hold {
        base
    } else {
        let tail = (total - hold).max(1);
        let phase = ((step - hold) * 10 / tail) as i32;
        base * 0.3f64.powi(phase.min(9))
    }
}

/// Per-epoch mean training loss.
pub type LossTrace = Vec<(usize, f64)>;

/// Uniform average of the weights over the final fraction of steps.
pub(crate) struct TailAverager {
    from_step: usize,
    count: usize,
    sum: Vec<f64>,
    enabled: bool,
}

impl TailAverager {
    pub(crate) fn new(fraction: f64, total_steps: usize, dim: usize) -> Self {
        let enabled = fraction > 0.0;
        let keep = ((total_steps as f64) * fraction).ceil() as usize;
        Self {
            from_step: total_steps.saturating_sub(keep.max(1)),
            count: 0,
            sum: if enabled { vec![0.0; dim] } else { Vec::new() },
            enabled,
        }
    }

    pub(crate) fn observe(&mut self, step: usize, weights: &[f64]) {
        if !self.enabled || step < self.from_step {
            return;
        }
        for (a, w) in self.sum.iter_mut().zip(weights) {
            *a += w;
        }
        self.count += 1;
    }

    pub(crate) fn apply(&self, weights: &mut [f64]) {
        if self.enabled && self.count > 0 {
            for (w, a) in weights.iter_mut().zip(&self.sum) {
                *w = a / self.count as f64;
            }
        }
    }
}

/// Train the sampling-time velocity on all marginals of all datasets.
pub fn train_v(
    datasets: &[MarginalDataset],
    cfg: &CfmTrainConfig,
    spec: &MlpSpec,
) -> Result<(NetParams, LossTrace)> {
    check_datasets(datasets, spec)?;
    let with_mu = spec.time_embed_dim > 0 && spec.mu_conditioned;
    let total_samples: usize = datasets
        .iter()
        .flat_map(|ds| ds.clouds().iter().map(|c| c.rows()))
        .sum();
    let steps_per_epoch = total_samples.div_ceil(cfg.batch_size).max(1);
    let total_steps = steps_per_epoch * cfg.epochs;

    let mut rng = SeededRng::from_seed(cfg.seed);
    let mut params = net_init(spec, &mut rng)?;
    let mut opt = AdamWState::new(params.param_count(), cfg.lr, cfg.weight_decay);
    let mut trace = Vec::with_capacity(cfg.epochs);

    let mut averager = TailAverager::new(cfg.tail_average, total_steps, params.weights.len());
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            let batch = sample_cfm_batch(datasets, cfg.batch_size, with_mu, &mut rng);
            let reg = batch.to_regression(cfg.schedule)?;
            let (loss, grad) = batch_loss_grad(&params, &reg, cfg.threads)?;
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

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_1d_dataset(times: &[f64], n: usize, seed: u64) -> MarginalDataset {
        // Isotropic 1-D path: x(t) ~ N(0, 1 + t).
        let mut rng = SeededRng::from_seed(seed);
        let clouds = times
            .iter()
            .map(|&t| Matrix::from_fn(n, 1, |_, _| (1.0 + t).sqrt() * rng.normal()))
            .collect();
        MarginalDataset::new(times.to_vec(), clouds, None).unwrap()
    }

    #[test]
    fn zero_residual_batch_has_zero_loss() {
        // Linear schedule with data equal to noise: target is identically
        // zero, so the zero network is exact.
        let spec = MlpSpec::new(2, 2, 4, 1).with_time_embed(0);
        let p = NetParams {
            weights: vec![0.0; spec.param_count()],
            spec,
        };
        let mut rng = SeededRng::from_seed(4);
        let pts = Matrix::from_fn(16, 2, |_, _| rng.normal());
        let batch = CfmBatch {
            noise: pts.clone(),
            data: pts,
            t: vec![0.0; 16],
            s: (0..16).map(|_| rng.uniform()).collect(),
            mu: None,
        };
        let loss = cfm_loss(&p, &batch, Schedule::Linear).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn zero_network_loss_is_mean_squared_displacement() {
        let spec = MlpSpec::new(2, 2, 4, 1).with_time_embed(0);
        let p = NetParams {
            weights: vec![0.0; spec.param_count()],
            spec,
        };
        let mut rng = SeededRng::from_seed(5);
        let noise = Matrix::from_fn(32, 2, |_, _| rng.normal());
        let data = Matrix::from_fn(32, 2, |_, _| rng.normal());
        let batch = CfmBatch {
            noise: noise.clone(),
            data: data.clone(),
            t: vec![0.3; 32],
            s: (0..32).map(|_| rng.uniform()).collect(),
            mu: None,
        };
        let loss = cfm_loss(&p, &batch, Schedule::Linear).unwrap();
        let expected: f64 = (0..32)
            .map(|r| {
                noise
                    .row(r)
                    .iter()
                    .zip(data.row(r))
                    .map(|(a, x)| (x - a) * (x - a))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 32.0;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn loss_invariant_under_batch_permutation() {
        let spec = MlpSpec::new(2, 2, 6, 2).with_time_embed(8);
        let mut rng = SeededRng::from_seed(6);
        let p = net_init(&spec, &mut rng).unwrap();
        let batch = CfmBatch {
            noise: Matrix::from_fn(10, 2, |_, _| rng.normal()),
            data: Matrix::from_fn(10, 2, |_, _| rng.normal()),
            t: (0..10).map(|_| rng.uniform()).collect(),
            s: (0..10).map(|_| rng.uniform()).collect(),
            mu: None,
        };
        // Reverse the rows.
        let rev = |m: &Matrix| Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(m.rows() - 1 - i, j)]);
        let perm = CfmBatch {
            noise: rev(&batch.noise),
            data: rev(&batch.data),
            t: batch.t.iter().rev().cloned().collect(),
            s: batch.s.iter().rev().cloned().collect(),
            mu: None,
        };
        let l1 = cfm_loss(&p, &batch, Schedule::Trig).unwrap();
        let l2 = cfm_loss(&p, &perm, Schedule::Trig).unwrap();
        assert!((l1 - l2).abs() <= 1e-12 * l1.abs().max(1.0));
    }

    #[test]
    fn closed_form_linear_minimizer_matches_log_derivative_slope() {
        // On an isotropic Gaussian path with the trig schedule, the best
        // linear-in-x field at fixed (t, s) has slope 0.5 d/ds log m(t, s)
        // with m = alpha^2 + beta^2 sigma^2(t). The least-squares slope over
        // a large sample is computed in closed form here.
        let sch = Schedule::Trig;
        let sigma2 = |t: f64| 1.0 + t; // sigma(t)^2
        let mut rng = SeededRng::from_seed(7);
        let mut probe_rng = SeededRng::from_seed(8);
        for _ in 0..10 {
            let t = probe_rng.uniform();
            let s = 0.1 + 0.75 * probe_rng.uniform();
            let n = 400_000;
            let (mut num, mut den) = (0.0, 0.0);
            for _ in 0..n {
                let a = rng.normal();
                let x = sigma2(t).sqrt() * rng.normal();
                // Antithetic sign pairs kill the cross-term variance.
                for (sa, sx) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let (p, v) = interpolant_point(sch, &[sa * a], &[sx * x], s).unwrap();
                    num += v[0] * p[0];
                    den += p[0] * p[0];
                }
            }
            let slope = num / den;
            let (al, be) = (sch.alpha(s), sch.beta(s));
            let m = al * al + be * be * sigma2(t);
            let dm = 2.0 * al * sch.dalpha(s) + 2.0 * be * sch.dbeta(s) * sigma2(t);
            let expected = 0.5 * dm / m;
            let rel = (slope - expected).abs() / expected.abs().max(0.05);
            assert!(rel < 0.05, "t={t:.3} s={s:.3} slope {slope} vs {expected}");
        }
    }

    #[test]
    fn train_v_smoke_single_epoch() {
        let ds = gaussian_1d_dataset(&[0.0, 0.5, 1.0], 8, 10);
        let spec = MlpSpec::new(1, 1, 4, 1).with_time_embed(4);
        let cfg = CfmTrainConfig::new(1, 1, 1e-3, 11);
        let (p, trace) = train_v(&[ds], &cfg, &spec).unwrap();
        assert_eq!(trace.len(), 1);
        assert!(trace[0].1.is_finite());
        assert!(p.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn train_v_accepts_and_distinguishes_mu() {
        let mut a = gaussian_1d_dataset(&[0.0, 1.0], 16, 12);
        let mut b = gaussian_1d_dataset(&[0.0, 1.0], 16, 13);
        a = MarginalDataset::new(a.times().to_vec(), a.clouds().to_vec(), Some(1.2)).unwrap();
        b = MarginalDataset::new(b.times().to_vec(), b.clouds().to_vec(), Some(1.9)).unwrap();
        let spec = MlpSpec::new(1, 1, 6, 2).with_time_embed(8).with_mu(true);
        let cfg = CfmTrainConfig::new(2, 8, 1e-3, 14);
        let (p, _) = train_v(&[a, b], &cfg, &spec).unwrap();
        let y1 = crate::nn::net_forward(&p, &[0.4], 0.5, 0.5, Some(1.2)).unwrap();
        let y2 = crate::nn::net_forward(&p, &[0.4], 0.5, 0.5, Some(1.9)).unwrap();
        assert!((y1[0] - y2[0]).abs() > 0.0);
    }

    #[test]
    fn train_v_is_deterministic() {
        let ds = gaussian_1d_dataset(&[0.0, 1.0], 12, 20);
        let spec = MlpSpec::new(1, 1, 4, 1).with_time_embed(4);
        let cfg = CfmTrainConfig::new(2, 4, 1e-3, 21);
        let (p1, t1) = train_v(std::slice::from_ref(&ds), &cfg, &spec).unwrap();
        let (p2, t2) = train_v(&[ds], &cfg, &spec).unwrap();
        assert_eq!(p1.weights, p2.weights);
        assert_eq!(t1, t2);
    }
}
