//! Distributional and PDE-level evaluation: Wasserstein-2 distances (exact
//! and entropic), ensemble kinetic energy, enstrophy, spectrum-decay fits,
//! the velocity-compatibility residual, continuity-equation moment checks,
//! and divergence preservation.

mod energy;
mod residual;
mod w2;

pub use energy::{
    ensemble_kinetic_energy, ensemble_kinetic_energy_per_trajectory, enstrophy, spectrum_slope,
};
pub use residual::{
    compatibility_residual, continuity_moment_check, divergence_preservation_check, Moment,
    MomentRow, Probe, ResidualReport,
};
pub use w2::{w2_entropic, w2_exact};

/// Per-time Wasserstein-2 distances with the reporting conventions used for
/// parameter-transfer tables: the average over the requested report times and
/// the final value.
#[derive(Debug, Clone)]
pub struct W2Report {
    pub mu: Option<f64>,
    /// (time, distance) pairs in time order.
    pub per_time: Vec<(f64, f64)>,
    /// Mean over the distances listed in `per_time`.
    pub average: f64,
    pub final_value: f64,
}

impl W2Report {
    pub fn new(mu: Option<f64>, per_time: Vec<(f64, f64)>) -> Self {
        let average = if per_time.is_empty() {
            0.0
        } else {
            per_time.iter().map(|(_, d)| d).sum::<f64>() / per_time.len() as f64
        };
        let final_value = per_time.last().map(|&(_, d)| d).unwrap_or(0.0);
        Self {
            mu,
            per_time,
            average,
            final_value,
        }
    }
}
