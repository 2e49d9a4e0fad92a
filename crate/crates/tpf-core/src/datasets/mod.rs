//! Ground-truth data generators: the evolving Gaussian mixture, the
//! Vlasov-Poisson particle instabilities, and the barotropic vorticity
//! ensemble. All are deterministic under their seeds.

mod mixture;
mod spectral;
mod vlasov;
mod vorticity;

pub use mixture::{gen_mixture, MixtureConfig, MixtureSnapshot};
pub use spectral::{Fft1d, Grid2, C64};
pub use vlasov::{
    cic_density, electrostatic_energy, gen_vlasov, init_particles, poisson_solve_1d, run_vlasov,
    spectral_gradient, Instability, VlasovConfig,
};
pub use vorticity::{gaussian_random_field, gen_vorticity, VorticityConfig, VorticitySolver};
