//! Data priors the shadow training sets are drawn from.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use np_eval::RangeMse;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};

pub const PRIOR_SCHEMA: &str = "rhe.prior/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorKind {
    /// Per-class means sharing one covariance.
    GaussianMixture { means: Vec<Vec<f64>>, covariance: Vec<Vec<f64>> },
    /// CSV rows `label,x_1,...,x_d`; relative paths resolve against the prior file's directory.
    DatasetFile { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub schema: String,
    pub dim: usize,
    pub classes: usize,
    #[serde(flatten)]
    pub kind: PriorKind,
}

impl PriorSpec {
    pub fn gaussian_mixture(means: Vec<Vec<f64>>, covariance: Vec<Vec<f64>>) -> Self {
        PriorSpec {
            schema: PRIOR_SCHEMA.into(),
            dim: covariance.len(),
            classes: means.len(),
            kind: PriorKind::GaussianMixture { means, covariance },
        }
    }

    /// Identity covariance, class means drawn from `N(0, separation²)` under `seed`.
    pub fn isotropic(classes: usize, dim: usize, separation: f64, seed: u64) -> Self {
        let mut rng = he_core::rng::stream(seed, &[0]);
        let means = (0..classes)
            .map(|_| (0..dim).map(|_| separation * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let covariance = (0..dim).map(|i| (0..dim).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Self::gaussian_mixture(means, covariance)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prior spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PriorSpec = serde_json::from_str(text).map_err(|e| ShadowError::Format(e.to_string()))?;
        if spec.schema != PRIOR_SCHEMA {
            return Err(ShadowError::Format(format!("unsupported prior schema {:?}", spec.schema)));
        }
        Ok(spec)
    }
}

/// Number of training items per class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts(pub Vec<usize>);

impl ClassCounts {
    pub fn balanced(classes: usize, per_class: usize) -> Self {
        ClassCounts(vec![per_class; classes])
    }

    /// `N = C·M`, rejecting totals that do not split evenly.
    pub fn from_total(n: usize, classes: usize) -> Result<Self> {
        if classes == 0 || n == 0 || !n.is_multiple_of(classes) {
            return Err(ShadowError::InvalidConfig(format!("N = {n} is not a positive multiple of {classes} classes")));
        }
        Ok(Self::balanced(classes, n / classes))
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Dataset rows the items came from, for dataset-backed priors.
    pub indices: Option<Vec<usize>>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn of_class(&self, class: usize) -> impl Iterator<Item = &[f64]> {
        self.features.iter().zip(&self.labels).filter(move |(_, &l)| l == class).map(|(x, _)| x.as_slice())
    }
}

#[derive(Clone, Debug)]
enum Source {
    Mixture { means: Vec<Vec<f64>>, factor: DMatrix<f64>, sd: Vec<f64> },
    Dataset { rows: Vec<Vec<f64>>, by_class: Vec<Vec<usize>>, means: Vec<Vec<f64>>, sd: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct Prior {
    spec: PriorSpec,
    source: Source,
}

fn column_stats(rows: &[&[f64]], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len().max(1) as f64;
    let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let var = (0..dim).map(|j| rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).collect();
    (mean, var)
}

impl Prior {
    /// Builds the prior; dataset paths are resolved against `base_dir`.
    pub fn from_spec(spec: PriorSpec, base_dir: Option<&Path>) -> Result<Self> {
        if spec.dim == 0 || spec.classes == 0 {
            return Err(ShadowError::InvalidConfig("prior needs dim ≥ 1 and at least one class".into()));
        }
        let source = match &spec.kind {
            PriorKind::GaussianMixture { means, covariance } => Self::mixture(&spec, means, covariance)?,
            PriorKind::DatasetFile { path } => {
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                Self::dataset(&spec, &std::fs::read_to_string(&path)?)?
            }
        };
        Ok(Prior { spec, source })
    }

    /// Reads a prior spec file.
    pub fn load(path: &Path) -> Result<Self> {
        let spec = PriorSpec::from_json(&std::fs::read_to_string(path)?)?;
        Self::from_spec(spec, path.parent())
    }

    fn mixture(spec: &PriorSpec, means: &[Vec<f64>], covariance: &[Vec<f64>]) -> Result<Source> {
        let d = spec.dim;
        if means.len() != spec.classes || means.iter().any(|m| m.len() != d || m.iter().any(|v| !v.is_finite())) {
            return Err(ShadowError::InvalidConfig(format!("need {} finite mean vectors of length {d}", spec.classes)));
        }
        if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
            return Err(ShadowError::InvalidConfig(format!("covariance must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) || cov.iter().any(|v| !v.is_finite()) {
            return Err(ShadowError::InvalidConfig("covariance must be finite and symmetric".into()));
        }
        let eig = SymmetricEigen::new(cov);
        let scale = eig.eigenvalues.amax().max(1.0);
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
            return Err(ShadowError::InvalidConfig("covariance is not positive semi-definite".into()));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        let sd = (0..d).map(|i| covariance[i][i].max(0.0).sqrt()).collect();
        Ok(Source::Mixture { means: means.to_vec(), factor, sd })
    }

    fn dataset(spec: &PriorSpec, text: &str) -> Result<Source> {
        let mut rows = Vec::new();
        let mut by_class = vec![Vec::new(); spec.classes];
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |what: &str| ShadowError::Format(format!("dataset line {}: {what}", i + 1));
            if cells.len() != spec.dim + 1 {
                return Err(bad(&format!("expected label plus {} features", spec.dim)));
            }
            let label: usize = cells[0].parse().map_err(|_| bad("label is not an integer"))?;
            if label >= spec.classes {
                return Err(bad("label out of range"));
            }
            let x = cells[1..]
                .iter()
                .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad("non-numeric feature"))?;
            by_class[label].push(rows.len());
            rows.push(x);
        }
        let means = by_class
            .iter()
            .map(|idx| column_stats(&idx.iter().map(|&i| rows[i].as_slice()).collect::<Vec<_>>(), spec.dim).0)
            .collect::<Vec<_>>();
        let centered: Vec<Vec<f64>> = by_class
            .iter()
            .enumerate()
            .flat_map(|(c, idx)| idx.iter().map(move |&i| (c, i)))
            .map(|(c, i)| rows[i].iter().zip(&means[c]).map(|(x, m)| x - m).collect())
            .collect();
        let (_, var) = column_stats(&centered.iter().map(Vec::as_slice).collect::<Vec<_>>(), spec.dim);
        let sd = var.into_iter().map(f64::sqrt).collect();
        Ok(Source::Dataset { rows, by_class, means, sd })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn is_dataset(&self) -> bool {
        matches!(self.source, Source::Dataset { .. })
    }

    pub fn class_mean(&self, class: usize) -> Result<&[f64]> {
        let means = match &self.source {
            Source::Mixture { means, .. } | Source::Dataset { means, .. } => means,
        };
        means
            .get(class)
            .map(Vec::as_slice)
            .ok_or(ShadowError::MissingClass { class, classes: self.spec.classes })
    }

    /// Per-coordinate within-class standard deviation.
    pub fn feature_sd(&self) -> &[f64] {
        match &self.source {
            Source::Mixture { sd, .. } | Source::Dataset { sd, .. } => sd,
        }
    }

    /// Dataset row `index`, for dataset-backed priors.
    pub fn row(&self, index: usize) -> Option<&[f64]> {
        match &self.source {
            Source::Dataset { rows, .. } => rows.get(index).map(Vec::as_slice),
            Source::Mixture { .. } => None,
        }
    }

    /// One draw from class `class`.
    pub fn draw<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> Result<Vec<f64>> {
        match &self.source {
            Source::Mixture { means, factor, .. } => {
                let mean = means.get(class).ok_or(ShadowError::MissingClass { class, classes: self.spec.classes })?;
                let z: Vec<f64> = (0..self.spec.dim).map(|_| rng.sample(StandardNormal)).collect();
                Ok(mean
                    .iter()
                    .enumerate()
                    .map(|(i, m)| m + (0..self.spec.dim).map(|j| factor[(i, j)] * z[j]).sum::<f64>())
                    .collect())
            }
            Source::Dataset { rows, by_class, .. } => {
                let idx = by_class.get(class).ok_or(ShadowError::MissingClass { class, classes: self.spec.classes })?;
                if idx.is_empty() {
                    return Err(ShadowError::Capacity { class, requested: 1, available: 0 });
                }
                Ok(rows[idx[rng.random_range(0..idx.len())]].clone())
            }
        }
    }

    /// Items grouped by class in label order; dataset priors sample without replacement.
    pub fn sample_training_set<R: Rng + ?Sized>(&self, counts: &ClassCounts, rng: &mut R) -> Result<LabeledSet> {
        if counts.0.len() != self.spec.classes {
            return Err(ShadowError::InvalidConfig(format!(
                "{} class counts for a {}-class prior",
                counts.0.len(),
                self.spec.classes
            )));
        }
        let labels: Vec<usize> = counts.0.iter().enumerate().flat_map(|(c, &m)| std::iter::repeat_n(c, m)).collect();
        match &self.source {
            Source::Mixture { .. } => {
                let features = labels.iter().map(|&c| self.draw(c, rng)).collect::<Result<Vec<_>>>()?;
                Ok(LabeledSet { features, labels, indices: None })
            }
            Source::Dataset { rows, by_class, .. } => {
                let mut indices = Vec::with_capacity(labels.len());
                for (class, (&m, pool)) in counts.0.iter().zip(by_class).enumerate() {
                    if m > pool.len() {
                        return Err(ShadowError::Capacity { class, requested: m, available: pool.len() });
                    }
                    indices.extend(index::sample(rng, pool.len(), m).into_iter().map(|k| pool[k]));
                }
                let features = indices.iter().map(|&i| rows[i].clone()).collect();
                Ok(LabeledSet { features, labels, indices: Some(indices) })
            }
        }
    }

    /// Range-normalized MSE over `[min μ − 4σ, max μ + 4σ]`, or the data's range for datasets.
    pub fn error_fn(&self) -> RangeMse {
        let (lo, hi) = match &self.source {
            Source::Mixture { means, sd, .. } => {
                let spread = 4.0 * sd.iter().copied().fold(0.0, f64::max);
                let flat = || means.iter().flatten().copied();
                (flat().fold(f64::INFINITY, f64::min) - spread, flat().fold(f64::NEG_INFINITY, f64::max) + spread)
            }
            Source::Dataset { rows, .. } => {
                let flat = || rows.iter().flatten().copied();
                (flat().fold(f64::INFINITY, f64::min), flat().fold(f64::NEG_INFINITY, f64::max))
            }
        };
        if hi > lo {
            RangeMse { lo, hi }
        } else {
            RangeMse { lo, hi: lo + 1.0 }
        }
    }
}
