//! Shadow-model harness: data priors, head training with and without DP-SGD, weight
//! standardization, simulated weight extraction and a toy reconstruction attack.

mod attack;
mod error;
mod extraction;
mod normalize;
mod prior;
mod shadow;
mod train;

pub use attack::{evaluate_records, pooled, run_toy_attack, score_toy_attack, toy_attack, AttackOutcome};
pub use error::{Result, ShadowError};
pub use extraction::{simulate_weight_extraction, EXTRACTION_NOISE};
pub use normalize::{normalize_weights, NormStats};
pub use prior::{ClassCounts, LabeledSet, Prior, PriorKind, PriorSpec, PRIOR_SCHEMA};
pub use shadow::{
    generate_shadow, read_jsonl, record_seed, shadow_record, write_jsonl, ShadowConfig, ShadowRecord, StoredFeatures,
    SHADOW_SCHEMA,
};
pub use train::{
    accuracy, add_dp_noise, clip_gradient, initial_theta, poisson_batch, predict, train_head, train_head_dpsgd, DpConfig,
    DpStats, TrainConfig, Trained, DP_SCHEMA,
};
