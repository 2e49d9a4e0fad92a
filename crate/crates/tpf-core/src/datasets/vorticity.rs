//! Pseudo-spectral barotropic vorticity solver on the periodic square
//! [-pi, pi)^2 with 2/3-rule dealiasing and RK4 time stepping.
//!
//! The inviscid dynamics are stabilized by hyperviscosity. The operator is
//! applied dissipatively with spectral symbol -kappa |k|^(2 hyper_order);
//! the default order 2 (biharmonic) keeps a resolvable cascade at the 32^2
//! working resolution.

use super::spectral::{Grid2, C64};
use crate::dataset::MarginalDataset;
use crate::error::{Error, Result};
use crate::flow::TrajectoryBundle;
use crate::linalg::{Matrix, SeededRng};

#[derive(Debug, Clone)]
pub struct VorticityConfig {
    /// Grid resolution per axis (power of two).
    pub grid: usize,
    /// Newtonian viscosity.
    pub nu: f64,
    /// Hyperviscosity coefficient.
    pub kappa: f64,
    /// Laplacian applications in the hyperviscous operator (2 = biharmonic).
    pub hyper_order: u32,
    pub dt: f64,
    /// Number of stored snapshots (including the initial field).
    pub snapshots: usize,
    pub steps_per_snapshot: usize,
    pub ensembles: usize,
    pub seed: u64,
    /// Initial-field power spectrum |k|^(-grf_exponent) ...
    pub grf_exponent: f64,
    /// ... with modes beyond this wavenumber zeroed (defaults to grid/3).
    pub grf_cutoff: f64,
    pub threads: usize,
}

impl Default for VorticityConfig {
    fn default() -> Self {
        Self {
            grid: 32,
            nu: 0.0,
            kappa: 1e-2,
            hyper_order: 2,
            dt: 1e-3,
            snapshots: 11,
            steps_per_snapshot: 100,
            ensembles: 64,
            seed: 0,
            grf_exponent: 2.0,
            grf_cutoff: 32.0 / 3.0,
            threads: 1,
        }
    }
}

impl VorticityConfig {
    fn validate(&self) -> Result<()> {
        if !self.grid.is_power_of_two() || self.grid < 8 {
            return Err(Error::Config(format!(
                "grid must be a power of two >= 8, got {}",
                self.grid
            )));
        }
        if self.snapshots < 2 || self.ensembles < 1 || self.steps_per_snapshot < 1 {
            return Err(Error::Config("vorticity run too small".into()));
        }
        Ok(())
    }
}

/// One ensemble member's spectral state and scratch space.
pub struct VorticitySolver {
    grid: Grid2,
    n: usize,
    nu: f64,
    kappa: f64,
    hyper_order: u32,
    /// 2/3-rule cutoff in integer wavenumbers.
    dealias_k: f64,
    /// Spectral state omega_hat.
    pub omega_hat: Vec<C64>,
}

impl VorticitySolver {
    pub fn new(cfg: &VorticityConfig) -> Self {
        let n = cfg.grid;
        Self {
            grid: Grid2::new(n),
            n,
            nu: cfg.nu,
            kappa: cfg.kappa,
            hyper_order: cfg.hyper_order,
            dealias_k: n as f64 / 3.0,
            omega_hat: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn set_real_field(&mut self, omega: &[f64]) {
        for (c, &r) in self.omega_hat.iter_mut().zip(omega) {
            *c = C64::new(r, 0.0);
        }
        self.grid.forward(&mut self.omega_hat);
        self.dealias_in_place();
    }

    pub fn real_field(&self) -> Vec<f64> {
        let mut tmp = self.omega_hat.clone();
        self.grid.inverse(&mut tmp);
        tmp.iter().map(|c| c.re).collect()
    }

    fn dealias_in_place(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let kx = self.grid.k(j).abs();
                let ky = self.grid.k(i).abs();
                if kx > self.dealias_k || ky > self.dealias_k {
                    self.omega_hat[i * n + j] = C64::new(0.0, 0.0);
                }
            }
        }
    }

    /// Velocity fields (u1, u2) in real space from the current spectrum.
    pub fn velocity(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut u1 = vec![C64::new(0.0, 0.0); n * n];
        let mut u2 = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            let ky = self.grid.k(i);
            for j in 0..n {
                let kx = self.grid.k(j);
                let k2 = kx * kx + ky * ky;
                if k2 == 0.0 {
                    continue;
                }
                let w = self.omega_hat[i * n + j];
                // psi_hat = omega_hat / k^2; u = (d psi/dy, -d psi/dx)
                let psi = w / k2;
                u1[i * n + j] = C64::new(0.0, ky) * psi;
                u2[i * n + j] = C64::new(0.0, -kx) * psi;
            }
        }
        self.grid.inverse(&mut u1);
        self.grid.inverse(&mut u2);
        (
            u1.iter().map(|c| c.re).collect(),
            u2.iter().map(|c| c.re).collect(),
        )
    }

    /// Spectral right-hand side at the given state.
    fn rhs(&self, w_hat: &[C64]) -> Vec<C64> {
        let n = self.n;
        // real-space velocity and vorticity gradient
        let mut u1 = vec![C64::new(0.0, 0.0); n * n];
        let mut u2 = vec![C64::new(0.0, 0.0); n * n];
        let mut wx = vec![C64::new(0.0, 0.0); n * n];
        let mut wy = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            let ky = self.grid.k(i);
            for j in 0..n {
                let kx = self.grid.k(j);
                let k2 = kx * kx + ky * ky;
                let w = w_hat[i * n + j];
                wx[i * n + j] = C64::new(0.0, kx) * w;
                wy[i * n + j] = C64::new(0.0, ky) * w;
                if k2 > 0.0 {
                    let psi = w / k2;
                    u1[i * n + j] = C64::new(0.0, ky) * psi;
                    u2[i * n + j] = C64::new(0.0, -kx) * psi;
                }
            }
        }
        self.grid.inverse(&mut u1);
        self.grid.inverse(&mut u2);
        self.grid.inverse(&mut wx);
        self.grid.inverse(&mut wy);
        // advection product in real space
        let mut adv = vec![C64::new(0.0, 0.0); n * n];
        for idx in 0..n * n {
            let a = u1[idx].re * wx[idx].re + u2[idx].re * wy[idx].re;
            adv[idx] = C64::new(a, 0.0);
        }
        self.grid.forward(&mut adv);
        // assemble: -dealias(advection) - nu k^2 w - kappa k^(2p) w
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            let ky = self.grid.k(i);
            for j in 0..n {
                let kx = self.grid.k(j);
                if kx.abs() > self.dealias_k || ky.abs() > self.dealias_k {
                    continue;
                }
                let k2 = kx * kx + ky * ky;
                let damp = self.nu * k2 + self.kappa * k2.powi(self.hyper_order as i32);
                out[i * n + j] = -adv[i * n + j] - w_hat[i * n + j] * damp;
            }
        }
        out
    }

    /// Advance one RK4 step; errors on CFL violation or blow-up.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let n = self.n;
        let dx = 2.0 * std::f64::consts::PI / n as f64;
        let (u1, u2) = self.velocity();
        let umax = u1
            .iter()
            .chain(u2.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        if umax * dt > dx {
            return Err(Error::CflViolation(format!(
                "advective CFL {:.3} exceeds 1 (|u|max {umax:.3}, dt {dt}, dx {dx:.4})",
                umax * dt / dx
            )));
        }
        let damp_max = self.nu * self.dealias_k.powi(2)
            + self.kappa * (2.0 * self.dealias_k * self.dealias_k).powi(self.hyper_order as i32);
        if damp_max * dt > 2.5 {
            return Err(Error::CflViolation(format!(
                "stiff dissipation: rate*dt = {:.2} exceeds the RK4 stability bound",
                damp_max * dt
            )));
        }

        let k1 = self.rhs(&self.omega_hat);
        let mut tmp: Vec<C64> = self
            .omega_hat
            .iter()
            .zip(&k1)
            .map(|(w, k)| w + k * (0.5 * dt))
            .collect();
        let k2 = self.rhs(&tmp);
        for (t, (w, k)) in tmp.iter_mut().zip(self.omega_hat.iter().zip(&k2)) {
            *t = w + k * (0.5 * dt);
        }
        let k3 = self.rhs(&tmp);
        for (t, (w, k)) in tmp.iter_mut().zip(self.omega_hat.iter().zip(&k3)) {
            *t = w + k * dt;
        }
        let k4 = self.rhs(&tmp);
        for idx in 0..n * n {
            self.omega_hat[idx] +=
                (k1[idx] + (k2[idx] + k3[idx]) * 2.0 + k4[idx]) * (dt / 6.0);
        }
        if self.omega_hat.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("vorticity spectrum".into()));
        }
        Ok(())
    }

    /// Mean vorticity (the k = 0 mode).
    pub fn mean_vorticity(&self) -> f64 {
        self.omega_hat[0].re / (self.n * self.n) as f64
    }

    /// Kinetic energy 0.5 sum |u|^2 dx via the spectral sum.
    pub fn kinetic_energy(&self) -> f64 {
        let n = self.n;
        let norm = (2.0 * std::f64::consts::PI).powi(2) / (n as f64).powi(4);
        let mut e = 0.0;
        for i in 0..n {
            let ky = self.grid.k(i);
            for j in 0..n {
                let kx = self.grid.k(j);
                let k2 = kx * kx + ky * ky;
                if k2 > 0.0 {
                    e += self.omega_hat[i * n + j].norm_sqr() / k2;
                }
            }
        }
        0.5 * e * norm
    }
}

/// Gaussian random field with power spectrum |k|^(-exponent), modes beyond
/// `cutoff` zeroed, normalized to unit pointwise variance.
pub fn gaussian_random_field(
    grid: usize,
    exponent: f64,
    cutoff: f64,
    rng: &mut SeededRng,
) -> Vec<f64> {
    let g = Grid2::new(grid);
    let n = grid;
    let mut spec = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let ky = g.k(i);
        for j in 0..n {
            let kx = g.k(j);
            let kk = (kx * kx + ky * ky).sqrt();
            if kk == 0.0 || kk > cutoff {
                continue;
            }
            let amp = kk.powf(-exponent / 2.0);
            spec[i * n + j] = C64::new(rng.normal() * amp, rng.normal() * amp);
        }
    }
    g.inverse(&mut spec);
    let mut field: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let var = field.iter().map(|v| v * v).sum::<f64>() / field.len() as f64;
    let scale = 1.0 / var.sqrt().max(1e-300);
    for v in field.iter_mut() {
        *v *= scale;
    }
    field
}

/// Integrate an ensemble of randomly initialized members; snapshot fields
/// become both the trajectory bundle (rows = members) and the per-time
/// marginal clouds.
pub fn gen_vorticity(cfg: &VorticityConfig) -> Result<(TrajectoryBundle, MarginalDataset)> {
    cfg.validate()?;
    let n = cfg.grid;
    let d = n * n;
    let k1 = cfg.snapshots;
    let root = SeededRng::from_seed(cfg.seed);
    let mut states = vec![0.0f64; cfg.ensembles * k1 * d];

    let threads = cfg.threads.max(1).min(cfg.ensembles);
    let chunk = cfg.ensembles.div_ceil(threads);
    {
        let state_chunks: Vec<&mut [f64]> = states.chunks_mut(chunk * k1 * d).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (ci, slot) in state_chunks.into_iter().enumerate() {
                let root = &root;
                handles.push(scope.spawn(move || -> Result<()> {
                    let lo = ci * chunk;
                    let members = slot.len() / (k1 * d);
                    for li in 0..members {
                        let member = lo + li;
                        let mut rng = root.derive(member as u64);
                        let field =
                            gaussian_random_field(n, cfg.grf_exponent, cfg.grf_cutoff, &mut rng);
                        let mut solver = VorticitySolver::new(cfg);
                        solver.set_real_field(&field);
                        for k in 0..k1 {
                            if k > 0 {
                                for _ in 0..cfg.steps_per_snapshot {
                                    solver.step(cfg.dt)?;
                                }
                            }
                            let snap = solver.real_field();
                            let off = (li * k1 + k) * d;
                            slot[off..off + d].copy_from_slice(&snap);
                        }
                    }
                    Ok(())
                }));
            }
            for h in handles {
                h.join().expect("vorticity worker panicked")?;
            }
            Ok::<(), Error>(())
        })?;
    }

    let times: Vec<f64> = (0..k1)
        .map(|k| k as f64 * cfg.dt * cfg.steps_per_snapshot as f64)
        .collect();
    let base = Matrix::from_fn(cfg.ensembles, d, |i, j| states[(i * k1) * d + j]);
    let bundle = TrajectoryBundle::from_parts(base, times.clone(), states, None)?;
    let clouds: Vec<Matrix> = (0..k1).map(|k| bundle.cloud_at(k)).collect();
    let ds = MarginalDataset::new(times, clouds, None)?;
    Ok((bundle, ds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_coords(n: usize, idx: usize) -> (f64, f64) {
        let i = idx / n;
        let j = idx % n;
        let x = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let y = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        (x, y)
    }

    #[test]
    fn taylor_green_mode_is_stationary_without_dissipation() {
        let cfg = VorticityConfig {
            grid: 32,
            nu: 0.0,
            kappa: 0.0,
            dt: 2e-3,
            ..Default::default()
        };
        let mut solver = VorticitySolver::new(&cfg);
        let n = cfg.grid;
        let field: Vec<f64> = (0..n * n)
            .map(|idx| {
                let (x, y) = grid_coords(n, idx);
                x.sin() * y.sin()
            })
            .collect();
        solver.set_real_field(&field);
        for _ in 0..100 {
            solver.step(cfg.dt).unwrap();
        }
        let after = solver.real_field();
        let err = field
            .iter()
            .zip(&after)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-8, "max drift {err:e}");
    }

    #[test]
    fn mean_vorticity_conserved() {
        let cfg = VorticityConfig {
            grid: 32,
            dt: 1e-3,
            ..Default::default()
        };
        let mut rng = SeededRng::from_seed(5);
        let mut field = gaussian_random_field(32, 2.0, 32.0 / 3.0, &mut rng);
        // bias the mean so conservation is non-trivial
        for v in field.iter_mut() {
            *v += 0.25;
        }
        let mut solver = VorticitySolver::new(&cfg);
        solver.set_real_field(&field);
        let m0 = solver.mean_vorticity();
        for _ in 0..50 {
            solver.step(cfg.dt).unwrap();
        }
        assert!((solver.mean_vorticity() - m0).abs() < 1e-12);
    }

    #[test]
    fn enstrophy_non_increasing_with_hyperviscosity() {
        let cfg = VorticityConfig {
            grid: 32,
            kappa: 1e-2,
            dt: 1e-3,
            ..Default::default()
        };
        let mut rng = SeededRng::from_seed(6);
        let field = gaussian_random_field(32, 2.0, 32.0 / 3.0, &mut rng);
        let mut solver = VorticitySolver::new(&cfg);
        solver.set_real_field(&field);
        let dx2 = (2.0 * std::f64::consts::PI / 32.0).powi(2);
        let enst = |s: &VorticitySolver| {
            0.5 * s.real_field().iter().map(|v| v * v).sum::<f64>() * dx2
        };
        let mut prev = enst(&solver);
        for _ in 0..100 {
            solver.step(cfg.dt).unwrap();
            let cur = enst(&solver);
            assert!(cur <= prev * (1.0 + 1e-12), "{cur} > {prev}");
            prev = cur;
        }
    }

    #[test]
    fn inviscid_energy_drift_below_1e6_per_unit_time() {
        let cfg = VorticityConfig {
            grid: 32,
            nu: 0.0,
            kappa: 0.0,
            dt: 1e-3,
            ..Default::default()
        };
        let mut rng = SeededRng::from_seed(7);
        let field = gaussian_random_field(32, 2.0, 32.0 / 3.0, &mut rng);
        let mut solver = VorticitySolver::new(&cfg);
        solver.set_real_field(&field);
        let e0 = solver.kinetic_energy();
        let steps = 1000; // one time unit
        for _ in 0..steps {
            solver.step(cfg.dt).unwrap();
        }
        let drift = (solver.kinetic_energy() - e0).abs() / e0;
        assert!(drift < 1e-6, "relative drift {drift:e}");
    }

    #[test]
    fn cfl_violation_reported() {
        let cfg = VorticityConfig {
            grid: 32,
            kappa: 0.0,
            ..Default::default()
        };
        let mut rng = SeededRng::from_seed(8);
        let field = gaussian_random_field(32, 2.0, 32.0 / 3.0, &mut rng);
        let mut solver = VorticitySolver::new(&cfg);
        solver.set_real_field(&field);
        assert!(matches!(
            solver.step(10.0),
            Err(Error::CflViolation(_))
        ));
    }

    #[test]
    fn grf_is_deterministic_unit_variance_and_band_limited() {
        let mut r1 = SeededRng::from_seed(9);
        let mut r2 = SeededRng::from_seed(9);
        let f1 = gaussian_random_field(32, 2.0, 32.0 / 3.0, &mut r1);
        let f2 = gaussian_random_field(32, 2.0, 32.0 / 3.0, &mut r2);
        assert_eq!(f1, f2);
        let var = f1.iter().map(|v| v * v).sum::<f64>() / f1.len() as f64;
        assert!((var - 1.0).abs() < 1e-12);

        let g = Grid2::new(32);
        let mut spec: Vec<C64> = f1.iter().map(|&v| C64::new(v, 0.0)).collect();
        g.forward(&mut spec);
        for i in 0..32 {
            for j in 0..32 {
                let kk = (g.k(j).powi(2) + g.k(i).powi(2)).sqrt();
                if kk > 32.0 / 3.0 {
                    assert!(spec[i * 32 + j].norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ensemble_generation_shapes_and_determinism() {
        let cfg = VorticityConfig {
            grid: 16,
            grf_cutoff: 16.0 / 3.0,
            snapshots: 3,
            steps_per_snapshot: 5,
            ensembles: 4,
            dt: 1e-3,
            threads: 2,
            seed: 11,
            ..Default::default()
        };
        let (bundle, ds) = gen_vorticity(&cfg).unwrap();
        assert_eq!(bundle.n_trajectories(), 4);
        assert_eq!(bundle.times().len(), 3);
        assert_eq!(bundle.dim(), 256);
        assert_eq!(ds.n_marginals(), 3);
        assert_eq!(ds.cloud(0).rows(), 4);

        let cfg1 = VorticityConfig { threads: 1, ..cfg };
        let (b2, _) = gen_vorticity(&cfg1).unwrap();
        assert_eq!(bundle.states(), b2.states());
    }
}
