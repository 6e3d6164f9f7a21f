//! Depth accounting and parameter selection for a head shape.

use he_core::{security_bound, BackendKind, HeParams, SECURITY_TABLE_128};
use rhe_engine::{counter_depth, pad_dim, HeadSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Binding, PlannerError, Result};

pub const MIN_Q_M: u32 = 20;
pub const MAX_MODULUS_BITS: u32 = 60;
pub const OUTER_HEADROOM: u32 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigRequest {
    pub head: HeadSpec,
    pub security_level: u32,
    pub exponent_bits: u32,
    pub fraction_bits: u32,
    pub backend: BackendKind,
}

impl ConfigRequest {
    pub fn new(head: HeadSpec, security_level: u32, exponent_bits: u32, fraction_bits: u32) -> Self {
        ConfigRequest { head, security_level, exponent_bits, fraction_bits, backend: BackendKind::Ckks }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthReport {
    /// Longest chain of multiplications in the engine circuit.
    pub counter_depth: u32,
    /// `1 + 3(L - 2)`, reported for comparison only; negative for a linear head.
    pub formula_depth: i64,
}

pub fn required_depth(head: &HeadSpec) -> DepthReport {
    let layers = head.layers() as i64;
    DepthReport { counter_depth: counter_depth(head.layers()), formula_depth: 1 + 3 * (layers - 2) }
}

/// Interior and outer modulus bits for a requested precision.
pub fn modulus_bits(exponent_bits: u32, fraction_bits: u32) -> (u32, u32) {
    let q_m = (exponent_bits + fraction_bits).clamp(MIN_Q_M, MAX_MODULUS_BITS);
    (q_m, (q_m + OUTER_HEADROOM).min(MAX_MODULUS_BITS))
}

/// Ring dimensions of the security table for `level`, smallest first.
fn table(level: u32) -> Vec<(usize, u32)> {
    SECURITY_TABLE_128.iter().filter_map(|&(n, _)| security_bound(n, level).map(|b| (n, b))).collect()
}

/// Smallest ring dimension whose security bound admits the chain and whose slots hold the widest layer input.
pub fn configure(req: &ConfigRequest) -> Result<HeParams> {
    if req.exponent_bits == 0 || req.fraction_bits == 0 {
        return Err(PlannerError::InvalidRequest("exponent and fraction bits must be at least 1".into()));
    }
    let entries = table(req.security_level);
    if entries.is_empty() {
        return Err(PlannerError::InvalidRequest(format!("no security table for λ = {}", req.security_level)));
    }
    let (q_m, q_s) = modulus_bits(req.exponent_bits, req.fraction_bits);
    if q_s < q_m + OUTER_HEADROOM {
        return Err(PlannerError::Infeasible(Binding::ModulusHeadroom));
    }
    let depth = required_depth(&req.head).counter_depth;
    let q_max = 2 * q_s + depth * q_m;
    let widest = pad_dim(req.head.max_input_dim());
    let secure = |&(_, bound): &(usize, u32)| q_max <= bound;
    let roomy = |&(n, _): &(usize, u32)| n / 2 >= widest;
    let Some(&(n, _)) = entries.iter().find(|e| secure(e) && roomy(e)) else {
        let binding = if entries.iter().any(secure) { Binding::SlotCapacity } else { Binding::SecurityBound };
        return Err(PlannerError::Infeasible(binding));
    };
    let mut params = HeParams::from_chain(n, q_m, q_s, depth as usize, q_m, req.backend);
    params.security_level = req.security_level;
    params.validate()?;
    Ok(params)
}
