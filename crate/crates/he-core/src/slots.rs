//! Plaintext and ciphertext slot vectors.

use crate::ckks::{CkksCiphertext, Limbs};
use crate::params::BackendKind;

/// A plaintext slot vector; conceptually zero-padded to the slot capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotPlain {
    pub values: Vec<f64>,
    pub scale: f64,
}

impl SlotPlain {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum CipherPayload {
    /// The exact slot vector; offers no secrecy.
    Sim(Vec<f64>),
    Ckks(CkksCiphertext),
}

/// Encrypted slot vector with its remaining multiplicative budget.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotCipher {
    pub(crate) fingerprint: u64,
    pub(crate) level: u32,
    pub(crate) scale: f64,
    pub(crate) slot_count: usize,
    pub(crate) payload: CipherPayload,
}

impl SlotCipher {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn backend(&self) -> BackendKind {
        match self.payload {
            CipherPayload::Sim(_) => BackendKind::Simulator,
            CipherPayload::Ckks(_) => BackendKind::Ckks,
        }
    }

    pub fn params_fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// The carried slot vector on the simulator backend, which offers no secrecy.
    pub fn simulator_values(&self) -> Option<&[f64]> {
        match &self.payload {
            CipherPayload::Sim(v) => Some(v),
            CipherPayload::Ckks(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum PreparedPayload {
    Sim(Vec<f64>),
    Ckks(Limbs),
}

/// A plaintext multiplicand encoded once for a given level, reusable across ciphertexts.
#[derive(Clone, Debug)]
pub struct PreparedPlain {
    pub(crate) fingerprint: u64,
    pub(crate) level: u32,
    pub(crate) values: Vec<f64>,
    pub(crate) payload: PreparedPayload,
}

impl PreparedPlain {
    pub fn level(&self) -> u32 {
        self.level
    }
}
