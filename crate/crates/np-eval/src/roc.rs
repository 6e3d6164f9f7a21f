//! Neyman–Pearson and cumulative ROC curves, analytic and empirical.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal as NormalDist};
use serde::{Deserialize, Serialize};

use crate::error::{NpError, Result};
use crate::special::Normal;
use crate::stats::{fit_gaussian, GaussianFit};

pub const FPR_GRID_POINTS: usize = 200;
pub const FPR_GRID_MIN: f64 = 1e-10;
pub const ROC_CSV_HEADER: &str = "fpr,tpr_np,tpr_cum";

/// Quadrature tolerance: absolute, tightened to relative when the integral itself is tiny.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

/// φ values of validation reconstructions: `l0` under H0 (scored against their own training set),
/// `l1` under H1 (scored against an independent set).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSamples {
    pub l0: Vec<f64>,
    pub l1: Vec<f64>,
}

impl ErrorSamples {
    pub fn validate(&self) -> Result<()> {
        if self.l0.is_empty() || self.l1.is_empty() {
            return Err(NpError::EmptyDataset);
        }
        if self.l0.iter().chain(&self.l1).any(|x| !x.is_finite()) {
            return Err(NpError::Format("non-finite φ value".into()));
        }
        Ok(())
    }

    pub fn fit(&self) -> Result<(GaussianFit, GaussianFit)> {
        self.validate()?;
        Ok((fit_gaussian(&self.l0)?, fit_gaussian(&self.l1)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr_np: f64,
    pub tpr_cum: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RocSource {
    Empirical,
    Analytic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub source: RocSource,
    pub fits: Option<(GaussianFit, GaussianFit)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Test {
    NeymanPearson,
    Cumulative,
}

/// 200 log-spaced false-positive rates from `1e-10` to `1`.
pub fn fpr_grid() -> Vec<f64> {
    let lo = FPR_GRID_MIN.log10();
    let steps = (FPR_GRID_POINTS - 1) as f64;
    (0..FPR_GRID_POINTS)
        .map(|i| if i + 1 == FPR_GRID_POINTS { 1.0 } else { 10f64.powf(lo * (1.0 - i as f64 / steps)) })
        .collect()
}

/// `log ρ0(φ)/ρ1(φ)` for the two fitted Gaussians.
pub fn log_density_ratio(h0: &GaussianFit, h1: &GaussianFit, phi: f64) -> f64 {
    (h1.sigma / h0.sigma).ln() - (phi - h0.mu).powi(2) / (2.0 * h0.sigma * h0.sigma)
        + (phi - h1.mu).powi(2) / (2.0 * h1.sigma * h1.sigma)
}

/// Fractions of `l0` and `l1` whose log density ratio exceeds `tau`.
pub fn np_rates(samples: &ErrorSamples, fits: (GaussianFit, GaussianFit), tau: f64) -> Result<(f64, f64)> {
    let (h0, h1) = fits;
    h0.normal()?;
    h1.normal()?;
    samples.validate()?;
    let rate = |xs: &[f64]| xs.iter().filter(|&&phi| log_density_ratio(&h0, &h1, phi) > tau).count() as f64 / xs.len() as f64;
    Ok((rate(&samples.l0), rate(&samples.l1)))
}

/// Rates of the threshold test that accepts H0 when `φ < t`.
pub fn cumulative_rates(samples: &ErrorSamples, t: f64) -> Result<(f64, f64)> {
    samples.validate()?;
    let rate = |xs: &[f64]| xs.iter().filter(|&&phi| phi < t).count() as f64 / xs.len() as f64;
    Ok((rate(&samples.l0), rate(&samples.l1)))
}

/// Shape of the NP acceptance region.
#[derive(Clone, Copy, Debug)]
enum Region {
    /// Equal widths: accept `φ < t`, the cumulative test.
    HalfLine,
    /// `σ0 > σ1`: accept outside `(r0 − δ, r0 + δ)`.
    Outside { r0: f64 },
    /// `σ0 < σ1`: accept inside `(r0 − δ, r0 + δ)`.
    Inside { r0: f64 },
}

/// Analytic operating characteristics of a pair of Gaussian φ laws.
#[derive(Clone, Copy, Debug)]
pub struct AnalyticRoc {
    h0: GaussianFit,
    h1: GaussianFit,
    n0: Normal,
    n1: Normal,
    region: Region,
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    // Seed the recursion on a fixed partition so narrow peaks are not missed.
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    let coarse: Vec<(f64, f64, f64, f64, f64, f64)> = (0..pieces)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            (x0, x1, f0, fm, f1, (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1))
        })
        .collect();
    let estimate: f64 = coarse.iter().map(|c| c.5).sum();
    let tol = tol.min(tol * estimate.abs()).max(f64::MIN_POSITIVE) / pieces as f64;
    coarse.into_iter().map(|(x0, x1, f0, fm, f1, whole)| step(f, x0, x1, f0, fm, f1, whole, tol, 48)).sum()
}

/// Solves `g(δ) = target` for a monotone `g` on `δ ≥ 0` by bracketing and bisection.
fn solve_delta(g: impl Fn(f64) -> f64, target: f64, increasing: bool, scale: f64) -> f64 {
    let beyond = |d: f64| if increasing { g(d) >= target } else { g(d) <= target };
    let mut hi = scale;
    while !beyond(hi) && hi < 1e6 * scale {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beyond(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

impl AnalyticRoc {
    pub fn new(h0: GaussianFit, h1: GaussianFit) -> Result<Self> {
        let (n0, n1) = (h0.normal()?, h1.normal()?);
        if h0.mu > h1.mu {
            return Err(NpError::ParameterOrder { mu0: h0.mu, mu1: h1.mu });
        }
        let (v0, v1) = (h0.sigma * h0.sigma, h1.sigma * h1.sigma);
        let r0 = (h0.mu * v1 - h1.mu * v0) / (v1 - v0);
        let region = if h0.sigma == h1.sigma {
            Region::HalfLine
        } else if h0.sigma > h1.sigma {
            Region::Outside { r0 }
        } else {
            Region::Inside { r0 }
        };
        Ok(AnalyticRoc { h0, h1, n0, n1, region })
    }

    /// Threshold `t = μ1 + σ1·√2·erf⁻¹(2f − 1)` of the cumulative test at false-positive rate `f`.
    pub fn cumulative_threshold(&self, fpr: f64) -> Result<f64> {
        self.n1.quantile(fpr)
    }

    /// `1/2 + 1/2·erf((t − μ0)/(σ0√2))` at the cumulative threshold.
    pub fn tpr_cum(&self, fpr: f64) -> Result<f64> {
        if fpr >= 1.0 {
            return Ok(1.0);
        }
        if fpr <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.n0.cdf(self.cumulative_threshold(fpr)?))
    }

    fn interval_mass(n: &Normal, a: f64, b: f64) -> f64 {
        adaptive_simpson(&|x| n.pdf(x), a, b, QUADRATURE_TOLERANCE)
    }

    /// Half-width `δ` of the NP region boundary at false-positive rate `fpr`.
    fn np_delta(&self, fpr: f64) -> f64 {
        let scale = self.h0.sigma.max(self.h1.sigma);
        match self.region {
            Region::HalfLine => unreachable!("half-line region has no roots"),
            Region::Outside { r0 } => solve_delta(|d| self.n1.cdf(r0 - d) + self.n1.sf(r0 + d), fpr, false, scale),
            Region::Inside { r0 } => {
                solve_delta(|d| Self::interval_mass(&self.n1, r0 - d, r0 + d), fpr, true, scale)
            }
        }
    }

    /// `(tpr, fpr)` of the NP test with acceptance region boundary `δ`.
    fn np_at_delta(&self, d: f64) -> (f64, f64) {
        match self.region {
            Region::HalfLine => unreachable!("half-line region has no roots"),
            Region::Outside { r0 } => (
                self.n0.cdf(r0 - d) + self.n0.sf(r0 + d),
                self.n1.cdf(r0 - d) + self.n1.sf(r0 + d),
            ),
            Region::Inside { r0 } => {
                (Self::interval_mass(&self.n0, r0 - d, r0 + d), Self::interval_mass(&self.n1, r0 - d, r0 + d))
            }
        }
    }

    pub fn tpr_np(&self, fpr: f64) -> Result<f64> {
        if fpr >= 1.0 {
            return Ok(1.0);
        }
        if fpr <= 0.0 {
            return Ok(0.0);
        }
        match self.region {
            Region::HalfLine => self.tpr_cum(fpr),
            _ => Ok(self.np_at_delta(self.np_delta(fpr)).0.clamp(0.0, 1.0)),
        }
    }

    /// Log density ratio threshold `τ` whose NP test has false-positive rate `fpr`.
    pub fn np_threshold(&self, fpr: f64) -> Result<f64> {
        if !(fpr > 0.0 && fpr < 1.0) {
            return Err(NpError::Domain("np_threshold"));
        }
        let boundary = match self.region {
            Region::HalfLine => self.cumulative_threshold(fpr)?,
            Region::Outside { r0 } | Region::Inside { r0 } => r0 - self.np_delta(fpr),
        };
        Ok(log_density_ratio(&self.h0, &self.h1, boundary))
    }

    /// `tpr_np / tpr_cum − 1` at `fpr`. When the NP region differs from the half-line only by a far
    /// tail of mass `u` under H1, the difference is taken to first order in `u`, which stays exact where
    /// subtracting the two rates would round to zero.
    pub fn relative_gap(&self, fpr: f64) -> Result<f64> {
        let cum = self.tpr_cum(fpr)?;
        if let Region::Outside { r0 } = self.region {
            let t = self.cumulative_threshold(fpr)?;
            let mirror = 2.0 * r0 - t;
            let u = self.n1.sf(mirror);
            if t < r0 && u < 1e-8 * fpr {
                let gap = self.n0.sf(mirror) - self.n0.pdf(t) / self.n1.pdf(t) * u;
                return Ok(gap / cum);
            }
        }
        Ok(self.tpr_np(fpr)? / cum - 1.0)
    }

    pub fn curve(&self) -> Result<RocCurve> {
        let points = fpr_grid()
            .into_iter()
            .map(|fpr| Ok(RocPoint { fpr, tpr_np: self.tpr_np(fpr)?, tpr_cum: self.tpr_cum(fpr)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(RocCurve { points, source: RocSource::Analytic, fits: Some((self.h0, self.h1)) })
    }
}

pub fn roc_analytic(h0: GaussianFit, h1: GaussianFit) -> Result<RocCurve> {
    AnalyticRoc::new(h0, h1)?.curve()
}

/// Fraction of `positives` scoring above the threshold that admits `⌊f·n⌋` of `negatives`.
fn rate_at(positives: &[f64], sorted_negatives_desc: &[f64], fpr: f64) -> f64 {
    let k = (fpr * sorted_negatives_desc.len() as f64).floor() as usize;
    if k >= sorted_negatives_desc.len() {
        return 1.0;
    }
    let threshold = sorted_negatives_desc[k];
    positives.iter().filter(|&&s| s > threshold).count() as f64 / positives.len() as f64
}

/// Empirical curves on the FPR grid: the NP test scores by the fitted log density ratio,
/// the cumulative test by `−φ`.
pub fn roc_empirical(samples: &ErrorSamples) -> Result<RocCurve> {
    let (h0, h1) = samples.fit()?;
    h0.normal()?;
    h1.normal()?;
    let llr = |xs: &[f64]| xs.iter().map(|&p| log_density_ratio(&h0, &h1, p)).collect::<Vec<_>>();
    let neg = |xs: &[f64]| xs.iter().map(|p| -p).collect::<Vec<_>>();
    let desc = |mut v: Vec<f64>| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let (np0, np1) = (llr(&samples.l0), desc(llr(&samples.l1)));
    let (c0, c1) = (neg(&samples.l0), desc(neg(&samples.l1)));
    let points = fpr_grid()
        .into_iter()
        .map(|fpr| RocPoint { fpr, tpr_np: rate_at(&np0, &np1, fpr), tpr_cum: rate_at(&c0, &c1, fpr) })
        .collect();
    Ok(RocCurve { points, source: RocSource::Empirical, fits: Some((h0, h1)) })
}

/// TPR at `target`, interpolated linearly in `log fpr` between the bracketing points.
pub fn tpr_at_fpr(curve: &RocCurve, target: f64, test: Test) -> Result<f64> {
    let pts = &curve.points;
    let (lo, hi) = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (a.fpr, b.fpr),
        _ => return Err(NpError::EmptyDataset),
    };
    if !(target >= lo && target <= hi) {
        return Err(NpError::OutOfRange { target, lo, hi });
    }
    let tpr = |p: &RocPoint| match test {
        Test::NeymanPearson => p.tpr_np,
        Test::Cumulative => p.tpr_cum,
    };
    let i = pts.partition_point(|p| p.fpr < target);
    let right = &pts[i];
    if right.fpr == target || i == 0 {
        return Ok(tpr(right));
    }
    let left = &pts[i - 1];
    let w = (target.ln() - left.fpr.ln()) / (right.fpr.ln() - left.fpr.ln());
    Ok(tpr(left) + w * (tpr(right) - tpr(left)))
}

/// `x` in plain decimal notation with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{ROC_CSV_HEADER}\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                format_significant(p.fpr, 10),
                format_significant(p.tpr_np, 10),
                format_significant(p.tpr_cum, 10)
            ));
        }
        out
    }

    pub fn from_csv(text: &str, source: RocSource) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(ROC_CSV_HEADER) {
            return Err(NpError::Format(format!("expected header {ROC_CSV_HEADER:?}")));
        }
        let points = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                let v = line
                    .split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| NpError::Format(format!("row {}: {e}", i + 1)))?;
                match v[..] {
                    [fpr, tpr_np, tpr_cum] => Ok(RocPoint { fpr, tpr_np, tpr_cum }),
                    _ => Err(NpError::Format(format!("row {}: expected 3 columns", i + 1))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let curve = RocCurve { points, source, fits: None };
        curve.validate()?;
        Ok(curve)
    }

    /// FPR strictly increasing in `[0, 1]`, every TPR in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.points.iter().any(|p| !unit(p.fpr) || !unit(p.tpr_np) || !unit(p.tpr_cum)) {
            return Err(NpError::Format("rates must lie in [0, 1]".into()));
        }
        if self.points.windows(2).any(|w| w[1].fpr <= w[0].fpr) {
            return Err(NpError::Format("fpr must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// `n0` draws from `h0` and `n1` from `h1`.
pub fn synthetic_samples(h0: GaussianFit, h1: GaussianFit, n0: usize, n1: usize, seed: u64) -> Result<ErrorSamples> {
    let draw = |fit: GaussianFit, n: usize, stream: u64| -> Result<Vec<f64>> {
        let dist = NormalDist::new(fit.mu, fit.sigma).map_err(|_| NpError::Degenerate)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
    };
    Ok(ErrorSamples { l0: draw(h0, n0, 0)?, l1: draw(h1, n1, 1)? })
}
