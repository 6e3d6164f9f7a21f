//! Error function family and normal distribution helpers.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{NpError, Result};

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Inverse of [`erf`] on `(-1, 1)`.
pub fn erf_inv(p: f64) -> Result<f64> {
    if !(p > -1.0 && p < 1.0) {
        return Err(NpError::Domain("erf_inv"));
    }
    Ok(statrs::function::erf::erf_inv(p))
}

/// Inverse of [`erfc`] on `(0, 2)`.
pub fn erfc_inv(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 2.0) {
        return Err(NpError::Domain("erfc_inv"));
    }
    Ok(statrs::function::erf::erfc_inv(q))
}

/// Normal law with mean `mu` and standard deviation `sigma > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Normal {
    pub mu: f64,
    pub sigma: f64,
}

impl Normal {
    pub fn cdf(&self, x: f64) -> f64 {
        0.5 * erfc(-(x - self.mu) / (self.sigma * SQRT_2))
    }

    /// `P(X > x)`, accurate far in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        0.5 * erfc((x - self.mu) / (self.sigma * SQRT_2))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * PI).sqrt())
    }

    /// `x` with `cdf(x) = p`, for `p` in `(0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(self.mu - self.sigma * SQRT_2 * erfc_inv(2.0 * p)?)
    }
}
