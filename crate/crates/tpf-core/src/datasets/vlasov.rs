//! 1-D/1-V Vlasov-Poisson particle dynamics on a periodic domain.
//!
//! Cloud-in-cell deposition and gather on a uniform grid, a spectral Poisson
//! solve of -mu^2 phi'' = 1 - rho with zero-mean gauge, and leapfrog
//! (kick-drift-kick) time stepping. The force is +grad(phi) by default,
//! matching the source formulation this artifact reproduces; the
//! `conventional_sign` flag flips it to the usual -grad(phi).

use super::spectral::{Fft1d, C64};
use crate::dataset::MarginalDataset;
use crate::error::{Error, Result};
use crate::flow::TrajectoryBundle;
use crate::linalg::{Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instability {
    TwoStream,
    BumpOnTail,
}

impl Instability {
    pub fn name(&self) -> &'static str {
        match self {
            Instability::TwoStream => "two-stream",
            Instability::BumpOnTail => "bump-on-tail",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "two-stream" => Ok(Instability::TwoStream),
            "bump-on-tail" => Ok(Instability::BumpOnTail),
            other => Err(Error::Config(format!("unknown instability '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VlasovConfig {
    pub instability: Instability,
    /// Characteristic (Debye) length parameter in the Poisson equation.
    pub mu: f64,
    pub particles: usize,
    pub dt: f64,
    pub steps: usize,
    pub domain_length: f64,
    pub grid_cells: usize,
    pub seed: u64,
    /// Store a marginal every this many steps (0 and the final step always).
    pub export_every: usize,
    /// false flips the force to the conventional -grad(phi).
    pub paper_force_sign: bool,
}

impl Default for VlasovConfig {
    fn default() -> Self {
        Self {
            instability: Instability::TwoStream,
            mu: 1.2,
            particles: 25_000,
            dt: 0.025,
            steps: 2400,
            domain_length: 4.0 * std::f64::consts::PI,
            grid_cells: 64,
            seed: 0,
            export_every: 200,
            paper_force_sign: true,
        }
    }
}

impl VlasovConfig {
    fn validate(&self) -> Result<()> {
        if self.mu <= 0.0 {
            return Err(Error::Config("mu must be positive".into()));
        }
        if self.particles < 2 || self.grid_cells < 4 || self.steps < 1 {
            return Err(Error::Config("vlasov run too small".into()));
        }
        if self.export_every == 0 {
            return Err(Error::Config("export_every must be positive".into()));
        }
        Ok(())
    }
}

/// Cloud-in-cell deposition: density with mean one on the node grid.
pub fn cic_density(positions: &[f64], length: f64, cells: usize) -> Vec<f64> {
    let dx = length / cells as f64;
    let mut rho = vec![0.0; cells];
    for &x in positions {
        let xn = x.rem_euclid(length) / dx;
        let j = xn as usize % cells;
        let frac = xn - xn.floor();
        rho[j] += 1.0 - frac;
        rho[(j + 1) % cells] += frac;
    }
    let scale = cells as f64 / positions.len() as f64;
    for r in rho.iter_mut() {
        *r *= scale;
    }
    rho
}

/// Spectral solve of -mu^2 phi'' = 1 - rho with zero-mean phi.
pub fn poisson_solve_1d(density: &[f64], mu: f64, length: f64) -> Vec<f64> {
    let n = density.len();
    let fft = Fft1d::new(n);
    let mut src: Vec<C64> = density.iter().map(|&r| C64::new(1.0 - r, 0.0)).collect();
    fft.forward(&mut src);
    src[0] = C64::new(0.0, 0.0);
    for (i, v) in src.iter_mut().enumerate().skip(1) {
        let k = fft.wavenumber(i, length);
        *v /= mu * mu * k * k;
    }
    fft.inverse(&mut src);
    src.iter().map(|c| c.re).collect()
}

/// Spatial gradient of a periodic grid function, spectrally.
pub fn spectral_gradient(values: &[f64], length: f64) -> Vec<f64> {
    let n = values.len();
    let fft = Fft1d::new(n);
    let mut hat: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft.forward(&mut hat);
    for (i, v) in hat.iter_mut().enumerate() {
        let k = fft.wavenumber(i, length);
        *v *= C64::new(0.0, k);
    }
    // Nyquist bin of a real signal has no well-defined odd derivative.
    if n % 2 == 0 {
        hat[n / 2] = C64::new(0.0, 0.0);
    }
    fft.inverse(&mut hat);
    hat.iter().map(|c| c.re).collect()
}

fn gather(values: &[f64], x: f64, length: f64) -> f64 {
    let cells = values.len();
    let dx = length / cells as f64;
    let xn = x.rem_euclid(length) / dx;
    let j = xn as usize % cells;
    let frac = xn - xn.floor();
    values[j] * (1.0 - frac) + values[(j + 1) % cells] * frac
}

/// Electrostatic field energy 0.5 mu^2 sum (grad phi)^2 dx of a particle
/// cloud, used to monitor instability growth.
pub fn electrostatic_energy(positions: &[f64], mu: f64, length: f64, cells: usize) -> f64 {
    let rho = cic_density(positions, length, cells);
    let phi = poisson_solve_1d(&rho, mu, length);
    let grad = spectral_gradient(&phi, length);
    let dx = length / cells as f64;
    0.5 * mu * mu * grad.iter().map(|g| g * g).sum::<f64>() * dx
}

fn forces(positions: &[f64], cfg: &VlasovConfig, out: &mut [f64]) {
    let rho = cic_density(positions, cfg.domain_length, cfg.grid_cells);
    let phi = poisson_solve_1d(&rho, cfg.mu, cfg.domain_length);
    let grad = spectral_gradient(&phi, cfg.domain_length);
    let sign = if cfg.paper_force_sign { 1.0 } else { -1.0 };
    for (f, &x) in out.iter_mut().zip(positions) {
        *f = sign * gather(&grad, x, cfg.domain_length);
    }
}

/// Initial phase-space cloud for the configured instability.
pub fn init_particles(cfg: &VlasovConfig) -> Matrix {
    let mut rng = SeededRng::from_seed(cfg.seed);
    let n = cfg.particles;
    let l = cfg.domain_length;
    let k1 = 2.0 * std::f64::consts::PI / l;
    // 1% mode-1 density perturbation via a Lagrangian displacement.
    let perturb = |x: f64| (x + 0.01 / k1 * (k1 * x).sin()).rem_euclid(l);
    let mut m = Matrix::zeros(n, 2);
    match cfg.instability {
        Instability::TwoStream => {
            for i in 0..n {
                let x = perturb(rng.uniform() * l);
                let beam = if i % 2 == 0 { 1.0 } else { -1.0 };
                let v = beam * 1.0 + 0.1 * rng.normal();
                m[(i, 0)] = x;
                m[(i, 1)] = v;
            }
        }
        Instability::BumpOnTail => {
            for i in 0..n {
                let x = perturb(rng.uniform() * l);
                let v = if i % 10 == 0 {
                    3.0 + 0.3 * rng.normal()
                } else {
                    rng.normal()
                };
                m[(i, 0)] = x;
                m[(i, 1)] = v;
            }
        }
    }
    m
}

/// Leapfrog integration of a given phase-space cloud. Exported snapshot
/// times are rescaled so physics time spans [0, 1].
pub fn run_vlasov(
    phase0: Matrix,
    cfg: &VlasovConfig,
) -> Result<(TrajectoryBundle, MarginalDataset)> {
    cfg.validate()?;
    let n = phase0.rows();
    if phase0.cols() != 2 {
        return Err(Error::DimMismatch("phase space must be (x, v)".into()));
    }
    let dx = cfg.domain_length / cfg.grid_cells as f64;

    let mut export_steps: Vec<usize> = (0..=cfg.steps).step_by(cfg.export_every).collect();
    if *export_steps.last().unwrap() != cfg.steps {
        export_steps.push(cfg.steps);
    }
    let k1 = export_steps.len();

    let mut xs: Vec<f64> = (0..n).map(|i| phase0[(i, 0)].rem_euclid(cfg.domain_length)).collect();
    let mut vs: Vec<f64> = (0..n).map(|i| phase0[(i, 1)]).collect();
    let mut f = vec![0.0; n];
    let mut states = vec![0.0f64; n * k1 * 2];
    let mut export_idx = 0usize;

    let snapshot = |step: usize,
                        xs: &[f64],
                        vs: &[f64],
                        export_idx: &mut usize,
                        states: &mut Vec<f64>| {
        if *export_idx < export_steps.len() && export_steps[*export_idx] == step {
            for i in 0..n {
                let off = (i * k1 + *export_idx) * 2;
                states[off] = xs[i];
                states[off + 1] = vs[i];
            }
            *export_idx += 1;
        }
    };
    snapshot(0, &xs, &vs, &mut export_idx, &mut states);

    forces(&xs, cfg, &mut f);
    for step in 0..cfg.steps {
        let vmax = vs.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if vmax * cfg.dt > dx {
            return Err(Error::CflViolation(format!(
                "particle CFL {:.3} exceeds 1 at step {step} (|v|max {vmax:.3})",
                vmax * cfg.dt / dx
            )));
        }
        // kick-drift-kick
        for i in 0..n {
            vs[i] += 0.5 * cfg.dt * f[i];
        }
        for i in 0..n {
            xs[i] = (xs[i] + cfg.dt * vs[i]).rem_euclid(cfg.domain_length);
        }
        forces(&xs, cfg, &mut f);
        for i in 0..n {
            vs[i] += 0.5 * cfg.dt * f[i];
        }
        if vs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("particle velocity at step {step}")));
        }
        snapshot(step + 1, &xs, &vs, &mut export_idx, &mut states);
    }

    let times: Vec<f64> = export_steps
        .iter()
        .map(|&s| s as f64 / cfg.steps as f64)
        .collect();
    let base = Matrix::from_fn(n, 2, |i, j| states[(i * k1) * 2 + j]);
    let bundle = TrajectoryBundle::from_parts(base, times.clone(), states, Some(cfg.mu))?;
    let clouds: Vec<Matrix> = (0..k1).map(|k| bundle.cloud_at(k)).collect();
    let ds = MarginalDataset::new(times, clouds, Some(cfg.mu))?;
    Ok((bundle, ds))
}

/// Generate instability data: initialize particles and integrate.
pub fn gen_vlasov(cfg: &VlasovConfig) -> Result<(TrajectoryBundle, MarginalDataset)> {
    cfg.validate()?;
    run_vlasov(init_particles(cfg), cfg)
}
