//! Ensemble kinetic energy, enstrophy, and energy-spectrum slope fits.

use crate::datasets::{Grid2, C64};
use crate::error::{Error, Result};
use crate::flow::TrajectoryBundle;

/// Ensemble finite-difference kinetic energy:
/// sum over trajectories and intervals of |x_{k+1} - x_k|^2 / dt_k, halved.
pub fn ensemble_kinetic_energy(bundle: &TrajectoryBundle) -> Result<f64> {
    let times = bundle.times();
    if times.len() < 2 {
        return Err(Error::DegenerateGrid("need at least one interval".into()));
    }
    let mut total = 0.0;
    for i in 0..bundle.n_trajectories() {
        for k in 0..times.len() - 1 {
            let dt = times[k + 1] - times[k];
            if dt == 0.0 {
                return Err(Error::DegenerateGrid(format!("repeated time {}", times[k])));
            }
            let a = bundle.state(i, k);
            let b = bundle.state(i, k + 1);
            let sq: f64 = a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum();
            total += sq / dt.abs();
        }
    }
    Ok(0.5 * total)
}

/// Same sum divided by the number of trajectories.
pub fn ensemble_kinetic_energy_per_trajectory(bundle: &TrajectoryBundle) -> Result<f64> {
    Ok(ensemble_kinetic_energy(bundle)? / bundle.n_trajectories() as f64)
}

/// Enstrophy of a flattened vorticity field on [-pi, pi)^2:
/// 0.5 sum omega^2 (2 pi / grid)^2.
pub fn enstrophy(field: &[f64], grid: usize) -> Result<f64> {
    if field.len() != grid * grid {
        return Err(Error::SizeMismatch(format!(
            "field length {} vs grid {grid}^2",
            field.len()
        )));
    }
    let dx2 = (2.0 * std::f64::consts::PI / grid as f64).powi(2);
    Ok(0.5 * field.iter().map(|v| v * v).sum::<f64>() * dx2)
}

/// Annulus-summed kinetic energy spectrum E(k) of a vorticity field, with the
/// velocity recovered spectrally (u_hat = i k^perp / |k|^2 omega_hat).
pub fn energy_spectrum(field: &[f64], grid: usize) -> Result<Vec<f64>> {
    if field.len() != grid * grid {
        return Err(Error::SizeMismatch(format!(
            "field length {} vs grid {grid}^2",
            field.len()
        )));
    }
    let g = Grid2::new(grid);
    let mut spec: Vec<C64> = field.iter().map(|&v| C64::new(v, 0.0)).collect();
    g.forward(&mut spec);
    let norm = (2.0 * std::f64::consts::PI).powi(2) / (grid as f64).powi(4);
    let mut bins = vec![0.0f64; grid];
    for i in 0..grid {
        let ky = g.k(i);
        for j in 0..grid {
            let kx = g.k(j);
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            let e = 0.5 * spec[i * grid + j].norm_sqr() / k2 * norm;
            let bin = k2.sqrt().round() as usize;
            if bin < bins.len() {
                bins[bin] += e;
            }
        }
    }
    Ok(bins)
}

/// Least-squares slope of log E(k) against log k over annuli in
/// [k_min, k_max]. Needs at least three populated annuli.
pub fn spectrum_slope(field: &[f64], grid: usize, fit_range: (usize, usize)) -> Result<f64> {
    let bins = energy_spectrum(field, grid)?;
    let (k_min, k_max) = fit_range;
    // Annuli count as populated only above a relative floor; FFT round-off
    // would otherwise make a pure mode look broadband.
    let peak = bins.iter().cloned().fold(0.0f64, f64::max);
    let floor = 1e-12 * peak;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in k_min..=k_max.min(bins.len().saturating_sub(1)) {
        if k == 0 || bins[k] <= floor {
            continue;
        }
        xs.push((k as f64).ln());
        ys.push(bins[k].ln());
    }
    if xs.len() < 3 {
        return Err(Error::EmptyRange(format!(
            "only {} annuli above the noise floor in [{k_min}, {k_max}]",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(num / den)
}
