//! Scheme parameters, their validation rules and the embedded security table.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HeError, Result};

pub const PARAMS_SCHEMA: &str = "rhe.params/1";

/// Maximum total coefficient-modulus bits per ring dimension at 128-bit classical security.
pub const SECURITY_TABLE_128: [(usize, u32); 5] =
    [(2048, 54), (4096, 109), (8192, 218), (16384, 438), (32768, 881)];

/// Smallest ring dimension accepted by [`HeParams::validate`].
pub const MIN_RING_DEGREE: usize = 1024;

/// Largest bit size allowed for any modulus in the chain.
pub const MAX_MODULUS_BITS: u32 = 60;

/// Smallest interior modulus bit size.
pub const MIN_LEVEL_BITS: u32 = 20;

/// Required headroom of the outer moduli over the interior ones.
pub const OUTER_HEADROOM_BITS: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Simulator,
    Ckks,
}

impl BackendKind {
    pub fn tag(self) -> u8 {
        match self {
            BackendKind::Simulator => 0,
            BackendKind::Ckks => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(BackendKind::Simulator),
            1 => Some(BackendKind::Ckks),
            _ => None,
        }
    }
}

fn default_schema() -> String {
    PARAMS_SCHEMA.to_string()
}

fn default_security() -> u32 {
    128
}

/// Ring dimension, modulus chain `[Q_S, Q_M x M, Q_S]`, encoding scale and backend choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeParams {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub poly_modulus_degree: usize,
    pub coeff_mod_bit_sizes: Vec<u32>,
    pub scale_bits: u32,
    #[serde(default = "default_security")]
    pub security_level: u32,
    pub backend: BackendKind,
    /// Optional hard ceiling on the multiplicative depth, independent of the chain length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_cap: Option<u32>,
}

impl Default for HeParams {
    fn default() -> Self {
        HeParams::from_chain(8192, 40, 60, 2, 40, BackendKind::Ckks)
    }
}

/// Bound from the embedded table, if the pair is covered.
pub fn security_bound(poly_modulus_degree: usize, security_level: u32) -> Option<u32> {
    if security_level != 128 {
        return None;
    }
    SECURITY_TABLE_128
        .iter()
        .find(|(n, _)| *n == poly_modulus_degree)
        .map(|(_, bits)| *bits)
}

impl HeParams {
    /// Builds `[q_s, q_m x depth, q_s]` at 128-bit security.
    pub fn from_chain(
        poly_modulus_degree: usize,
        q_m: u32,
        q_s: u32,
        depth: usize,
        scale_bits: u32,
        backend: BackendKind,
    ) -> Self {
        let mut chain = Vec::with_capacity(depth + 2);
        chain.push(q_s);
        chain.extend(std::iter::repeat_n(q_m, depth));
        chain.push(q_s);
        HeParams {
            schema: default_schema(),
            poly_modulus_degree,
            coeff_mod_bit_sizes: chain,
            scale_bits,
            security_level: 128,
            backend,
            depth_cap: None,
        }
    }

    pub fn with_backend(mut self, backend: BackendKind) -> Self {
        self.backend = backend;
        self
    }

    /// Multiplicative depth M: the number of interior moduli.
    pub fn depth(&self) -> u32 {
        self.coeff_mod_bit_sizes.len().saturating_sub(2) as u32
    }

    pub fn slot_capacity(&self) -> usize {
        self.poly_modulus_degree / 2
    }

    pub fn q_s(&self) -> u32 {
        self.coeff_mod_bit_sizes.first().copied().unwrap_or(0)
    }

    /// Interior modulus bits; falls back to `Q_S` for a chain without interior moduli.
    pub fn q_m(&self) -> u32 {
        self.coeff_mod_bit_sizes
            .get(1..self.coeff_mod_bit_sizes.len().saturating_sub(1))
            .and_then(|s| s.first().copied())
            .unwrap_or_else(|| self.q_s())
    }

    pub fn q_max(&self) -> u32 {
        self.coeff_mod_bit_sizes.iter().sum()
    }

    pub fn scale(&self) -> f64 {
        2f64.powi(self.scale_bits as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.poly_modulus_degree;
        let fail = |msg: String| Err(HeError::InvalidParams(msg));
        if !n.is_power_of_two() || n < MIN_RING_DEGREE {
            return fail(format!(
                "N_D power of two ≥ {MIN_RING_DEGREE} violated (N_D = {n})"
            ));
        }
        let chain = &self.coeff_mod_bit_sizes;
        if chain.len() < 3 {
            return fail(format!(
                "modulus chain needs [Q_S, Q_M.., Q_S] with at least one Q_M (got {} entries)",
                chain.len()
            ));
        }
        let (q_s, q_m) = (self.q_s(), self.q_m());
        if chain[chain.len() - 1] != q_s {
            return fail("outer moduli must both equal Q_S".into());
        }
        if chain[1..chain.len() - 1].iter().any(|&b| b != q_m) {
            return fail("interior moduli must all equal Q_M".into());
        }
        if q_m < MIN_LEVEL_BITS {
            return fail(format!("Q_M ≥ {MIN_LEVEL_BITS} violated (Q_M = {q_m})"));
        }
        if q_m > MAX_MODULUS_BITS {
            return fail(format!("Q_M ≤ {MAX_MODULUS_BITS} violated (Q_M = {q_m})"));
        }
        if q_s > MAX_MODULUS_BITS {
            return fail(format!("Q_S ≤ {MAX_MODULUS_BITS} violated (Q_S = {q_s})"));
        }
        if q_s < q_m + OUTER_HEADROOM_BITS {
            return fail(format!(
                "Q_S ≥ Q_M + {OUTER_HEADROOM_BITS} violated (Q_S = {q_s}, Q_M = {q_m})"
            ));
        }
        let Some(bound) = security_bound(n, self.security_level) else {
            return fail(format!(
                "no security bound for N_D = {n} at λ = {}",
                self.security_level
            ));
        };
        let q_max = self.q_max();
        if q_max > bound {
            return fail(format!(
                "Q_max = {q_max} exceeds the {}-bit bound {bound} for N_D = {n}",
                self.security_level
            ));
        }
        if self.scale_bits == 0 || self.scale_bits >= q_s {
            return fail(format!(
                "scale_bits in [1, Q_S) violated (scale_bits = {})",
                self.scale_bits
            ));
        }
        if let Some(cap) = self.depth_cap {
            if self.depth() > cap {
                return fail(format!("M ≤ depth cap {cap} violated (M = {})", self.depth()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HeError::Format(format!("params JSON: {e}")))
    }

    /// Stable 64-bit digest used to catch operands created under different parameters.
    pub fn fingerprint(&self) -> u64 {
        let canonical = serde_json::to_vec(self).expect("params serialize");
        let digest = Sha256::digest(&canonical);
        u64::from_le_bytes(digest[..8].try_into().expect("digest length"))
    }
}
