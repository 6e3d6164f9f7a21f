//! A closed-form reconstruction attack on linear heads and its scoring against fresh prior draws.

use np_eval::{min_error, phi_transform, roc_empirical, tpr_at_fpr, ErrorSamples, RocCurve, Test};
use rhe_engine::HeadSpec;

use crate::error::{Result, ShadowError};
use crate::normalize::NormStats;
use crate::prior::{ClassCounts, Prior};
use crate::shadow::{generate_shadow, ShadowConfig, ShadowRecord};

/// Candidate for class `class`: `μ_c + √(1 − 1/C)·σ ⊙ z_c`, where `z_c` is the standardized deviation of
/// the class-`c` weight row. Under one gradient step from a small initialization this is the linear
/// posterior-mean estimate of the class-`c` training item.
pub fn toy_attack(theta: &[f64], stats: &NormStats, prior: &Prior, spec: &HeadSpec, class: usize) -> Result<Vec<f64>> {
    if spec.layers() != 1 {
        return Err(ShadowError::NotLinear { layers: spec.layers() });
    }
    let (d, classes) = (spec.input_dim(), spec.output_dim());
    if classes < 2 || class >= classes {
        return Err(ShadowError::MissingClass { class, classes });
    }
    if theta.len() != spec.parameter_count() || stats.mean.len() != theta.len() {
        return Err(ShadowError::Format("theta and stats must match the head's parameter count".into()));
    }
    let mean = prior.class_mean(class)?;
    if mean.len() != d {
        return Err(ShadowError::InvalidConfig(format!("prior dimension {} differs from head input {d}", mean.len())));
    }
    let shrink = (1.0 - 1.0 / classes as f64).sqrt();
    let row = class * d..(class + 1) * d;
    let z = NormStats {
        mean: stats.mean[row.clone()].to_vec(),
        sd: stats.sd[row.clone()].to_vec(),
        degenerate: stats.degenerate[row.clone()].to_vec(),
    }
    .apply(&theta[row]);
    Ok(mean.iter().zip(prior.feature_sd()).zip(z).map(|((m, s), z)| m + shrink * s * z).collect())
}

fn counts_of(labels: &[usize], classes: usize) -> ClassCounts {
    let mut c = vec![0; classes];
    labels.iter().for_each(|&l| c[l] += 1);
    ClassCounts(c)
}

/// φ of the min-error against the record's own training set (H0) and against an independent set of
/// the same composition (H1), for every record and class, grouped by class.
pub fn score_toy_attack(
    prior: &Prior,
    spec: &HeadSpec,
    stats: &NormStats,
    records: &[ShadowRecord],
    seed: u64,
) -> Result<Vec<ErrorSamples>> {
    let error_fn = prior.error_fn();
    let classes = spec.output_dim();
    let mut per_class = vec![ErrorSamples::default(); classes];
    for (k, record) in records.iter().enumerate() {
        let own = record.training_set(prior)?;
        let mut rng = he_core::rng::stream(seed, &[k as u64]);
        let fresh = prior.sample_training_set(&counts_of(&record.labels, prior.classes()), &mut rng)?;
        for (c, samples) in per_class.iter_mut().enumerate() {
            let candidate = toy_attack(&record.theta, stats, prior, spec, c)?;
            let l0 = min_error(own.features.iter().map(Vec::as_slice), &candidate, &error_fn)?;
            let l1 = min_error(fresh.features.iter().map(Vec::as_slice), &candidate, &error_fn)?;
            samples.l0.push(phi_transform(l0));
            samples.l1.push(phi_transform(l1));
        }
    }
    Ok(per_class)
}

pub fn pooled(per_class: &[ErrorSamples]) -> ErrorSamples {
    ErrorSamples {
        l0: per_class.iter().flat_map(|s| s.l0.iter().copied()).collect(),
        l1: per_class.iter().flat_map(|s| s.l1.iter().copied()).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub samples: ErrorSamples,
    pub curve: RocCurve,
}

impl AttackOutcome {
    pub fn tpr_at(&self, fpr: f64) -> Result<f64> {
        Ok(tpr_at_fpr(&self.curve, fpr, Test::NeymanPearson)?)
    }
}

/// Generates `count` shadows, fits the standardization on the first half and scores the attack on the second.
pub fn run_toy_attack(prior: &Prior, cfg: &ShadowConfig, count: usize, base_seed: u64, workers: usize) -> Result<AttackOutcome> {
    if count < 4 {
        return Err(ShadowError::TooFewRecords { needed: 4, got: count });
    }
    let records = generate_shadow(prior, cfg, count, base_seed, workers)?;
    evaluate_records(prior, &cfg.train.head, &records, base_seed)
}

/// Scores already generated records, split as in [`run_toy_attack`].
pub fn evaluate_records(prior: &Prior, spec: &HeadSpec, records: &[ShadowRecord], seed: u64) -> Result<AttackOutcome> {
    let (fit_part, eval_part) = records.split_at(records.len() / 2);
    let stats = NormStats::fit(fit_part.iter().map(|r| r.theta.as_slice()))?;
    let samples = pooled(&score_toy_attack(prior, spec, &stats, eval_part, seed)?);
    let curve = roc_empirical(&samples)?;
    Ok(AttackOutcome { samples, curve })
}
