//! Per-coordinate standardization of shadow weights.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};
use crate::shadow::ShadowRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// `1/n` standard deviation.
    pub sd: Vec<f64>,
    /// Coordinates with zero variance; they standardize to 0.
    pub degenerate: Vec<bool>,
}

impl NormStats {
    /// Two passes over `thetas`: means, then centered second moments.
    pub fn fit<'a, I>(thetas: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
        I::IntoIter: Clone,
    {
        let it = thetas.into_iter();
        let n = it.clone().count();
        if n < 2 {
            return Err(ShadowError::TooFewRecords { needed: 2, got: n });
        }
        let dim = it.clone().next().map_or(0, <[f64]>::len);
        if it.clone().any(|t| t.len() != dim) {
            return Err(ShadowError::Format("records have different parameter counts".into()));
        }
        let first = it.clone().next().map(<[f64]>::to_vec).unwrap_or_default();
        let mut mean = vec![0.0; dim];
        let mut degenerate = vec![true; dim];
        for t in it.clone() {
            mean.iter_mut().zip(t).for_each(|(m, x)| *m += x);
            degenerate.iter_mut().zip(t.iter().zip(&first)).for_each(|(d, (x, f))| *d &= x == f);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for t in it {
            var.iter_mut().zip(t.iter().zip(&mean)).for_each(|(v, (x, m))| *v += (x - m) * (x - m));
        }
        let sd = var
            .into_iter()
            .zip(&degenerate)
            .map(|(v, &d)| if d { 0.0 } else { (v / n as f64).sqrt() })
            .collect();
        Ok(NormStats { mean, sd, degenerate })
    }

    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(x, (m, s))| if *s == 0.0 { 0.0 } else { (x - m) / s })
            .collect()
    }
}

/// Standardized weights of every record plus the statistics used.
pub fn normalize_weights(records: &[ShadowRecord]) -> Result<(Vec<Vec<f64>>, NormStats)> {
    let stats = NormStats::fit(records.iter().map(|r| r.theta.as_slice()))?;
    Ok((records.iter().map(|r| stats.apply(&r.theta)).collect(), stats))
}
