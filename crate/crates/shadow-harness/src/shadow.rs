//! Shadow-model generation and the JSON-lines record format.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ShadowError};
use crate::prior::{ClassCounts, LabeledSet, Prior, PriorSpec};
use crate::train::{train_head, train_head_dpsgd, DpConfig, TrainConfig};

pub const SHADOW_SCHEMA: &str = "rhe.shadow/1";

/// Training items stored inline, or as rows of a dataset-backed prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StoredFeatures {
    Vectors(Vec<Vec<f64>>),
    Indices { indices: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowRecord {
    pub schema: String,
    pub seed: u64,
    pub labels: Vec<usize>,
    pub features: StoredFeatures,
    /// Trained weights and biases, layer by layer, each layer's rows then its bias.
    pub theta: Vec<f64>,
    pub config_hash: String,
}

impl ShadowRecord {
    /// The training set, resolving dataset indices through `prior`.
    pub fn training_set(&self, prior: &Prior) -> Result<LabeledSet> {
        let (features, indices) = match &self.features {
            StoredFeatures::Vectors(v) => (v.clone(), None),
            StoredFeatures::Indices { indices } => {
                let rows = indices
                    .iter()
                    .map(|&i| prior.row(i).map(<[f64]>::to_vec))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| ShadowError::Format(format!("record {}: index outside the dataset", self.seed)))?;
                (rows, Some(indices.clone()))
            }
        };
        if features.len() != self.labels.len() {
            return Err(ShadowError::Format(format!("record {}: {} features for {} labels", self.seed, features.len(), self.labels.len())));
        }
        Ok(LabeledSet { features, labels: self.labels.clone(), indices })
    }
}

/// Everything that determines a record besides its seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowConfig {
    pub prior: PriorSpec,
    pub counts: ClassCounts,
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<DpConfig>,
}

impl ShadowConfig {
    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Seed of record `index` under `base_seed`.
pub fn record_seed(base_seed: u64, index: u64) -> u64 {
    he_core::rng::derive_seed(base_seed, &[index])
}

/// One shadow model from its own seed.
pub fn shadow_record(prior: &Prior, cfg: &ShadowConfig, seed: u64) -> Result<ShadowRecord> {
    let mut data_rng = he_core::rng::stream(seed, &[7]);
    let set = prior.sample_training_set(&cfg.counts, &mut data_rng)?;
    let trained = match &cfg.dp {
        None => train_head(&set, &cfg.train, seed)?,
        Some(dp) => train_head_dpsgd(&set, &cfg.train, dp, seed)?,
    };
    let features = match set.indices {
        Some(indices) => StoredFeatures::Indices { indices },
        None => StoredFeatures::Vectors(set.features),
    };
    Ok(ShadowRecord {
        schema: SHADOW_SCHEMA.into(),
        seed,
        labels: set.labels,
        features,
        theta: trained.head.flatten(),
        config_hash: cfg.hash(),
    })
}

/// `count` records with seeds `record_seed(base_seed, k)`, in index order for any worker count.
pub fn generate_shadow(prior: &Prior, cfg: &ShadowConfig, count: usize, base_seed: u64, workers: usize) -> Result<Vec<ShadowRecord>> {
    if count == 0 {
        return Err(ShadowError::InvalidConfig("count must be at least 1".into()));
    }
    let job = |k: usize| shadow_record(prior, cfg, record_seed(base_seed, k as u64));
    if workers <= 1 {
        return (0..count).map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ShadowError::InvalidConfig(e.to_string()))?;
    pool.install(|| (0..count).into_par_iter().map(job).collect())
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[ShadowRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(out, "{line}").map_err(|source| ShadowError::RecordIo { seed: r.seed, source })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<ShadowRecord>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let r: ShadowRecord =
                serde_json::from_str(&line?).map_err(|e| ShadowError::Format(format!("line {}: {e}", i + 1)))?;
            if r.schema != SHADOW_SCHEMA {
                return Err(ShadowError::Format(format!("line {}: unsupported schema {:?}", i + 1, r.schema)));
            }
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::TrainConfig;
    use rhe_engine::HeadSpec;

    fn config() -> (Prior, ShadowConfig) {
        let spec = PriorSpec::isotropic(2, 4, 1.0, 1);
        let prior = Prior::from_spec(spec.clone(), None).unwrap();
        let train = TrainConfig::linear_probe(HeadSpec::new(vec![4, 2]).unwrap(), 2);
        (prior, ShadowConfig { prior: spec, counts: ClassCounts::balanced(2, 1), train, dp: None })
    }

    #[test]
    fn single_record_is_the_trained_head() {
        let (prior, cfg) = config();
        let records = generate_shadow(&prior, &cfg, 1, 11, 1).unwrap();
        let seed = record_seed(11, 0);
        assert_eq!(records[0].seed, seed);
        let set = records[0].training_set(&prior).unwrap();
        assert_eq!(records[0].theta, train_head(&set, &cfg.train, seed).unwrap().head.flatten());
    }

    #[test]
    fn seeds_are_disjoint_across_bases() {
        let a: Vec<u64> = (0..1000).map(|k| record_seed(1, k)).collect();
        let b: std::collections::HashSet<u64> = (0..1000).map(|k| record_seed(2, k)).collect();
        assert!(a.iter().all(|s| !b.contains(s)));
    }

    #[test]
    fn jsonl_roundtrip_and_field_names() {
        let (prior, cfg) = config();
        let records = generate_shadow(&prior, &cfg, 3, 5, 1).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["schema", "seed", "labels", "features", "theta", "config_hash"] {
            assert!(first.get(key).is_some(), "{key}");
        }
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), records);
        assert!(read_jsonl("{\"seed\":1}\n".as_bytes()).is_err());
    }

    #[test]
    fn config_hash_tracks_config() {
        let (_, cfg) = config();
        let mut other = cfg.clone();
        other.train.lr *= 2.0;
        assert_eq!(cfg.hash().len(), 64);
        assert_ne!(cfg.hash(), other.hash());
    }
}
