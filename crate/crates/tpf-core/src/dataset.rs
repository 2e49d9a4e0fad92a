//! Time-marginal sample datasets.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-time-step sample clouds, optionally tagged with a physics parameter.
///
/// Clouds are unpaired: row i of one cloud has no relation to row i of the
/// next. All clouds share the state dimension; times are strictly increasing.
#[derive(Debug, Clone)]
pub struct MarginalDataset {
    times: Vec<f64>,
    clouds: Vec<Matrix>,
    mu: Option<f64>,
}

impl MarginalDataset {
    pub fn new(times: Vec<f64>, clouds: Vec<Matrix>, mu: Option<f64>) -> Result<Self> {
        if times.len() != clouds.len() {
            return Err(Error::DimMismatch(format!(
                "{} times vs {} clouds",
                times.len(),
                clouds.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::DegenerateGrid("need at least two marginals".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateGrid(
                "times must be strictly increasing".into(),
            ));
        }
        let d = clouds[0].cols();
        for (k, c) in clouds.iter().enumerate() {
            if c.cols() != d {
                return Err(Error::DimMismatch(format!(
                    "cloud {k} has dimension {} but cloud 0 has {d}",
                    c.cols()
                )));
            }
            if c.rows() < 2 {
                return Err(Error::CloudSizeMismatch(format!(
                    "cloud {k} has fewer than 2 samples"
                )));
            }
        }
        Ok(Self { times, clouds, mu })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn clouds(&self) -> &[Matrix] {
        &self.clouds
    }

    pub fn cloud(&self, k: usize) -> &Matrix {
        &self.clouds[k]
    }

    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    pub fn dim(&self) -> usize {
        self.clouds[0].cols()
    }

    pub fn n_marginals(&self) -> usize {
        self.times.len()
    }

    /// Index of the marginal whose time is closest to `t`.
    pub fn nearest_marginal(&self, t: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (k, &tk) in self.times.iter().enumerate() {
            let d = (tk - t).abs();
            if d < dist {
                dist = d;
                best = k;
            }
        }
        best
    }
}
