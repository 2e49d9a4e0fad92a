//! Thin FFT helpers over rustfft for the periodic solvers.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub type C64 = Complex<f64>;

/// Planned 1-D transforms of a fixed size. Inverse is normalized by 1/n.
pub struct Fft1d {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft1d {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn forward(&self, data: &mut [C64]) {
        debug_assert_eq!(data.len(), self.n);
        self.fwd.process(data);
    }

    pub fn inverse(&self, data: &mut [C64]) {
        debug_assert_eq!(data.len(), self.n);
        self.inv.process(data);
        let scale = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Integer wavenumber of bin `i` on a length-`2 pi` domain scaled by
    /// `2 pi / length`.
    pub fn wavenumber(&self, i: usize, length: f64) -> f64 {
        let k = if i <= self.n / 2 {
            i as f64
        } else {
            i as f64 - self.n as f64
        };
        k * (2.0 * std::f64::consts::PI / length)
    }
}

/// Square periodic grid with row-major complex fields and integer
/// wavenumbers (domain [-pi, pi)^2).
pub struct Grid2 {
    pub n: usize,
    fft: Fft1d,
}

impl Grid2 {
    pub fn new(n: usize) -> Self {
        Self { n, fft: Fft1d::new(n) }
    }

    /// Integer wavenumber along one axis.
    pub fn k(&self, i: usize) -> f64 {
        if i <= self.n / 2 {
            i as f64
        } else {
            i as f64 - self.n as f64
        }
    }

    pub fn forward(&self, field: &mut [C64]) {
        self.transform(field, true);
    }

    pub fn inverse(&self, field: &mut [C64]) {
        self.transform(field, false);
    }

    fn transform(&self, field: &mut [C64], fwd: bool) {
        let n = self.n;
        debug_assert_eq!(field.len(), n * n);
        for row in field.chunks_mut(n) {
            if fwd {
                self.fft.forward(row);
            } else {
                self.fft.inverse(row);
            }
        }
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = field[i * n + j];
            }
            if fwd {
                self.fft.forward(&mut col);
            } else {
                self.fft.inverse(&mut col);
            }
            for i in 0..n {
                field[i * n + j] = col[i];
            }
        }
    }
}
