//! Min-error statistics, the logit transform, Gaussian fits and the loss used by reconstructors.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NpError, Result};

/// Clamp applied before the logit so errors of exactly 0 or 1 stay finite.
pub const LOGIT_CLAMP: f64 = 1e-9;

/// Error between a data item and a reconstruction, valued in `[0, 1]`.
pub trait ErrorFn {
    fn error(&self, item: &[f64], reconstruction: &[f64]) -> f64;
}

impl<F: Fn(&[f64], &[f64]) -> f64> ErrorFn for F {
    fn error(&self, item: &[f64], reconstruction: &[f64]) -> f64 {
        self(item, reconstruction)
    }
}

/// Mean squared error divided by the squared data range, clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeMse {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RangeMse {
    fn default() -> Self {
        RangeMse { lo: 0.0, hi: 1.0 }
    }
}

impl ErrorFn for RangeMse {
    fn error(&self, item: &[f64], reconstruction: &[f64]) -> f64 {
        let n = item.len().max(1) as f64;
        let mse = item.iter().zip(reconstruction).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        (mse / (self.hi - self.lo).powi(2)).clamp(0.0, 1.0)
    }
}

pub fn min_error<'a, I, E>(dataset: I, reconstruction: &[f64], error_fn: &E) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
    E: ErrorFn + ?Sized,
{
    dataset
        .into_iter()
        .map(|z| error_fn.error(z, reconstruction))
        .min_by(f64::total_cmp)
        .ok_or(NpError::EmptyDataset)
}

/// `log(ℓ / (1 − ℓ))` with `ℓ` clamped to `[LOGIT_CLAMP, 1 − LOGIT_CLAMP]`.
pub fn phi_transform(l: f64) -> f64 {
    let l = l.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
    (l / (1.0 - l)).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianFit {
    pub fn new(mu: f64, sigma: f64) -> Self {
        GaussianFit { mu, sigma }
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma == 0.0
    }

    pub(crate) fn normal(&self) -> Result<crate::special::Normal> {
        if !(self.sigma > 0.0) {
            return Err(NpError::Degenerate);
        }
        Ok(crate::special::Normal { mu: self.mu, sigma: self.sigma })
    }
}

/// Maximum-likelihood mean and `1/n` standard deviation.
pub fn fit_gaussian(samples: &[f64]) -> Result<GaussianFit> {
    if samples.len() < 2 {
        return Err(NpError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let n = samples.len() as f64;
    let mu = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    Ok(GaussianFit { mu, sigma: var.sqrt() })
}

/// Per-class rates averaged arithmetically.
pub fn class_average(per_class: &[(f64, f64)]) -> Result<(f64, f64)> {
    if per_class.is_empty() {
        return Err(NpError::EmptyDataset);
    }
    let n = per_class.len() as f64;
    let (t, f) = per_class.iter().fold((0.0, 0.0), |(t, f), (a, b)| (t + a, f + b));
    Ok((t / n, f / n))
}

/// `1 − (1 − κ)^N`: the chance that one of `N` prior draws lands in a neighbourhood of mass `κ`.
pub fn baseline_attack_tpr(kappa: f64, n: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(NpError::Domain("baseline_attack_tpr"));
    }
    Ok(-(n as f64 * (-kappa).ln_1p()).exp_m1())
}

/// Empirical TPR of the baseline attack that always outputs `target`: over `trials` training sets of
/// `n` prior draws, the fraction whose min-error against `target` is at most `tau`.
pub fn baseline_attack_monte_carlo<P, E>(
    mut prior: P,
    target: &[f64],
    error_fn: &E,
    tau: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<f64>
where
    P: FnMut(&mut ChaCha20Rng) -> Vec<f64>,
    E: ErrorFn + ?Sized,
{
    if n == 0 || trials == 0 {
        return Err(NpError::EmptyDataset);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..trials {
        let data: Vec<Vec<f64>> = (0..n).map(|_| prior(&mut rng)).collect();
        if min_error(data.iter().map(Vec::as_slice), target, error_fn)? <= tau {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// `Σ ℓ_i e^{−α ℓ_i} / Σ e^{−α ℓ_i}`, shifted by the minimum so no exponent overflows.
pub fn softmin_loss(errors: &[f64], alpha: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(NpError::EmptyDataset);
    }
    if !(alpha > 0.0) {
        return Err(NpError::Domain("softmin_loss"));
    }
    let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let (num, den) = errors.iter().fold((0.0, 0.0), |(num, den), &l| {
        let w = (-alpha * (l - lo)).exp();
        (num + l * w, den + w)
    });
    Ok(num / den)
}

pub const FIT_REPORT_SCHEMA: &str = "rhe.fit-report/1";

fn fit_report_schema() -> String {
    FIT_REPORT_SCHEMA.into()
}

/// Fits under both hypotheses with their sample counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(default = "fit_report_schema")]
    pub schema: String,
    pub h0: GaussianFit,
    pub h1: GaussianFit,
    pub n0: usize,
    pub n1: usize,
}

impl FitReport {
    pub fn new(h0: GaussianFit, h1: GaussianFit, n0: usize, n1: usize) -> Self {
        FitReport { schema: fit_report_schema(), h0, h1, n0, n1 }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| NpError::Format(e.to_string()))
    }
}
