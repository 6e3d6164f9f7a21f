//! Key material and rotation-step planning.

use std::collections::{BTreeMap, BTreeSet};

use crate::ckks::{CkksPublicKey, CkksSecretKey, GaloisKey, SwitchKey};
use crate::error::{HeError, Result};

/// Which rotation steps receive a dedicated key.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum RotationKeys {
    /// Every `±2^i` below the slot count; any step is then reachable by composition.
    #[default]
    PowersOfTwo,
    /// Exactly these steps (normalised modulo the slot count).
    Steps(Vec<i64>),
}

impl RotationKeys {
    /// Normalised step set in `[1, slots)`.
    pub fn normalized(&self, slots: usize) -> BTreeSet<usize> {
        let slots_i = slots as i64;
        match self {
            RotationKeys::PowersOfTwo => (0..slots.trailing_zeros())
                .flat_map(|i| {
                    let p = 1i64 << i;
                    [p, -p]
                })
                .map(|s| s.rem_euclid(slots_i) as usize)
                .filter(|&s| s != 0)
                .collect(),
            RotationKeys::Steps(steps) => steps
                .iter()
                .map(|s| s.rem_euclid(slots_i) as usize)
                .filter(|&s| s != 0)
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum PublicMaterial {
    Sim,
    Ckks {
        pk: CkksPublicKey,
        relin: SwitchKey,
        galois: BTreeMap<usize, GaloisKey>,
    },
}

/// Everything an untrusted evaluator needs: encryption, relinearisation and rotation keys.
#[derive(Clone, Debug)]
pub struct PublicKeys {
    pub(crate) fingerprint: u64,
    pub(crate) slots: usize,
    pub(crate) steps: BTreeSet<usize>,
    pub(crate) material: PublicMaterial,
}

#[derive(Clone, Debug)]
pub(crate) enum SecretMaterial {
    Sim,
    Ckks(CkksSecretKey),
}

#[derive(Clone, Debug)]
pub struct SecretKey {
    pub(crate) fingerprint: u64,
    pub(crate) material: SecretMaterial,
}

/// Public material plus, on the trusted side only, the secret key.
#[derive(Clone, Debug)]
pub struct KeySet {
    pub public: PublicKeys,
    pub secret: Option<SecretKey>,
}

impl KeySet {
    pub fn public_only(&self) -> KeySet {
        KeySet { public: self.public.clone(), secret: None }
    }

    pub fn has_secret(&self) -> bool {
        self.secret.is_some()
    }
}

impl PublicKeys {
    pub fn rotation_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().copied()
    }

    /// Sequence of keyed steps whose composition rotates by `step`.
    pub fn rotation_plan(&self, step: i64) -> Result<Vec<usize>> {
        plan_rotation(step, self.slots, &self.steps)
    }
}

fn naf(mut k: i64) -> Vec<i64> {
    let mut out = Vec::new();
    let mut bit = 0;
    while k != 0 {
        if k & 1 == 1 {
            let digit = 2 - k.rem_euclid(4);
            out.push(digit << bit);
            k -= digit;
        }
        k >>= 1;
        bit += 1;
    }
    out
}

/// Decomposes `step` into available keyed steps: direct if present, else the cheaper
/// signed-binary expansion of `step` or of its complement.
pub fn plan_rotation(step: i64, slots: usize, available: &BTreeSet<usize>) -> Result<Vec<usize>> {
    let slots_i = slots as i64;
    let s = step.rem_euclid(slots_i);
    if s == 0 {
        return Ok(Vec::new());
    }
    if available.contains(&(s as usize)) {
        return Ok(vec![s as usize]);
    }
    let attempt = |k: i64| -> Option<Vec<usize>> {
        naf(k)
            .into_iter()
            .map(|d| {
                let n = d.rem_euclid(slots_i) as usize;
                (n == 0 || available.contains(&n)).then_some(n)
            })
            .filter(|o| o != &Some(0))
            .collect()
    };
    let mut candidates: Vec<Vec<usize>> = [attempt(s), attempt(s - slots_i)].into_iter().flatten().collect();
    candidates.sort_by_key(|c| c.len());
    candidates.into_iter().next().ok_or(HeError::MissingRotationKey { step })
}
