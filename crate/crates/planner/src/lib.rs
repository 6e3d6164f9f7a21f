//! Parameter configuration, multiplicative-depth accounting, and the analytic cost
//! model with microbenchmark calibration.

mod calibrate;
mod config;
mod cost;
mod error;
mod table;

pub use calibrate::{calibrate, machine_descriptor, CalibrationOptions, MIN_REPETITIONS};
pub use config::{configure, modulus_bits, required_depth, ConfigRequest, DepthReport, MAX_MODULUS_BITS, MIN_Q_M, OUTER_HEADROOM};
pub use cost::{
    divergences, formula_counts, formula_layer_cost, mapped_counts, predict_cost, traced_counts, upper_bound_cost,
    CostBreakdown, CostProfile, Divergence, LayerCost, Primitive, PrimitiveCounts, BREAKDOWN_SCHEMA, PROFILE_SCHEMA,
};
pub use error::{Binding, PlannerError, Result};
pub use table::{format_seconds, timing_table, TimingRow};
