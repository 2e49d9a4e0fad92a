//! Stochastic-interpolant schedules connecting the noise base (s = 0) to a
//! data marginal (s = 1).

use crate::error::{Error, Result};

/// Interpolation coefficient pair (alpha, beta) with derivatives.
///
/// Conventions: alpha(0) = 1, alpha(1) = 0, beta(0) = 0, beta(1) = 1, so the
/// path starts on the noise sample and ends on the data sample. Endpoint
/// values are returned exactly (no trigonometric rounding) so boundary
/// identities hold bitwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// alpha = 1 - s, beta = s.
    Linear,
    /// alpha = cos(pi s / 2), beta = sin(pi s / 2); keeps alpha^2 + beta^2 = 1.
    Trig,
}

impl Schedule {
    pub fn alpha(&self, s: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0 - s,
            Schedule::Trig => {
                if s == 0.0 {
                    1.0
                } else if s == 1.0 {
                    0.0
                } else {
                    libm::cos(std::f64::consts::FRAC_PI_2 * s)
                }
            }
        }
    }

    pub fn beta(&self, s: f64) -> f64 {
        match self {
            Schedule::Linear => s,
            Schedule::Trig => {
                if s == 0.0 {
                    0.0
                } else if s == 1.0 {
                    1.0
                } else {
                    libm::sin(std::f64::consts::FRAC_PI_2 * s)
                }
            }
        }
    }

    pub fn dalpha(&self, s: f64) -> f64 {
        match self {
            Schedule::Linear => -1.0,
            Schedule::Trig => -std::f64::consts::FRAC_PI_2 * self.beta(s),
        }
    }

    pub fn dbeta(&self, s: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0,
            Schedule::Trig => std::f64::consts::FRAC_PI_2 * self.alpha(s),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Linear => "linear",
            Schedule::Trig => "trig",
        }
    }

    pub fn from_name(name: &str) -> Result<Schedule> {
        match name {
            "linear" => Ok(Schedule::Linear),
            "trig" => Ok(Schedule::Trig),
            other => Err(Error::Config(format!("unknown schedule '{other}'"))),
        }
    }
}

/// Interpolated state and its sampling-time derivative:
/// point = alpha(s) a + beta(s) x, target = alpha'(s) a + beta'(s) x.
pub fn interpolant_point(
    sch: Schedule,
    a: &[f64],
    x: &[f64],
    s: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::SOutOfRange(s));
    }
    if a.len() != x.len() {
        return Err(Error::DimMismatch(format!(
            "noise dim {} vs data dim {}",
            a.len(),
            x.len()
        )));
    }
    let (al, be) = (sch.alpha(s), sch.beta(s));
    let (dal, dbe) = (sch.dalpha(s), sch.dbeta(s));
    let point = a
        .iter()
        .zip(x)
        .map(|(ai, xi)| al * ai + be * xi)
        .collect();
    let target = a
        .iter()
        .zip(x)
        .map(|(ai, xi)| dal * ai + dbe * xi)
        .collect();
    Ok((point, target))
}
