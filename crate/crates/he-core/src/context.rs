//! Backend dispatch: key generation, encoding, encryption and the evaluator.

use std::collections::BTreeMap;

use rand::RngCore;

use crate::ckks::CkksContext;
use crate::error::{HeError, Result};
use crate::keys::{KeySet, PublicKeys, PublicMaterial, RotationKeys, SecretKey, SecretMaterial};
use crate::params::{BackendKind, HeParams};
use crate::rng::stream;
use crate::slots::{CipherPayload, PreparedPayload, PreparedPlain, SlotCipher, SlotPlain};

/// Largest accepted relative difference between the scales of two added ciphertexts.
pub const SCALE_TOLERANCE: f64 = 1.0 / 256.0;

const LABEL_SECRET: u64 = 1;
const LABEL_PUBLIC: u64 = 2;
const LABEL_RELIN: u64 = 3;
const LABEL_GALOIS: u64 = 4;

#[derive(Debug)]
pub(crate) enum Backend {
    Simulator,
    Ckks(Box<CkksContext>),
}

/// Validated parameters plus whatever precomputation the backend needs.
#[derive(Debug)]
pub struct HeContext {
    params: HeParams,
    fingerprint: u64,
    pub(crate) backend: Backend,
}

impl HeContext {
    pub fn new(params: HeParams) -> Result<Self> {
        params.validate()?;
        let backend = match params.backend {
            BackendKind::Simulator => Backend::Simulator,
            BackendKind::Ckks => Backend::Ckks(Box::new(CkksContext::new(&params)?)),
        };
        Ok(HeContext { fingerprint: params.fingerprint(), params, backend })
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn slot_count(&self) -> usize {
        self.params.slot_capacity()
    }

    pub fn depth(&self) -> u32 {
        self.params.depth()
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.params.backend
    }

    pub fn ckks(&self) -> Option<&CkksContext> {
        match &self.backend {
            Backend::Ckks(c) => Some(c),
            Backend::Simulator => None,
        }
    }

    pub fn keygen(&self, seed: u64) -> KeySet {
        self.keygen_with(seed, &RotationKeys::PowersOfTwo)
    }

    /// Keys from `seed`; every component draws from its own derived stream.
    pub fn keygen_with(&self, seed: u64, rotations: &RotationKeys) -> KeySet {
        let steps = rotations.normalized(self.slot_count());
        let (public, secret) = match &self.backend {
            Backend::Simulator => (PublicMaterial::Sim, SecretMaterial::Sim),
            Backend::Ckks(ctx) => {
                let sk = ctx.gen_secret(&mut stream(seed, &[LABEL_SECRET]));
                let pk = ctx.gen_public(&sk, &mut stream(seed, &[LABEL_PUBLIC]));
                let relin = ctx.gen_relin(&sk, &mut stream(seed, &[LABEL_RELIN]));
                let galois: BTreeMap<usize, _> = steps
                    .iter()
                    .map(|&s| (s, ctx.gen_galois(&sk, s as i64, &mut stream(seed, &[LABEL_GALOIS, s as u64]))))
                    .collect();
                (PublicMaterial::Ckks { pk, relin, galois }, SecretMaterial::Ckks(sk))
            }
        };
        KeySet {
            public: PublicKeys {
                fingerprint: self.fingerprint,
                slots: self.slot_count(),
                steps,
                material: public,
            },
            secret: Some(SecretKey { fingerprint: self.fingerprint, material: secret }),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.slot_count() {
            return Err(HeError::Capacity { len, capacity: self.slot_count() });
        }
        Ok(())
    }

    /// Plaintext at the default scale; on CKKS the values are the quantised ones actually represented.
    pub fn encode(&self, values: &[f64]) -> Result<SlotPlain> {
        self.check_len(values.len())?;
        let scale = self.params.scale();
        let values = match &self.backend {
            Backend::Simulator => values.to_vec(),
            Backend::Ckks(ctx) => ctx.quantize(values, scale),
        };
        Ok(SlotPlain { values, scale })
    }

    /// Slot values padded to the slot count.
    pub fn decode(&self, pt: &SlotPlain) -> Vec<f64> {
        let mut v = pt.values.clone();
        v.resize(self.slot_count(), 0.0);
        v
    }

    fn check_keys(&self, keys: &PublicKeys) -> Result<()> {
        if keys.fingerprint != self.fingerprint {
            return Err(HeError::ParamsMismatch);
        }
        Ok(())
    }

    pub fn encrypt<R: RngCore + ?Sized>(&self, pt: &SlotPlain, keys: &PublicKeys, rng: &mut R) -> Result<SlotCipher> {
        self.encrypt_at(pt, self.depth(), keys, rng)
    }

    /// Encrypts directly at a lower level, as if the fresh ciphertext had been level-dropped.
    pub fn encrypt_at<R: RngCore + ?Sized>(
        &self,
        pt: &SlotPlain,
        level: u32,
        keys: &PublicKeys,
        rng: &mut R,
    ) -> Result<SlotCipher> {
        self.check_keys(keys)?;
        self.check_len(pt.len())?;
        let level = level.min(self.depth());
        let payload = match (&self.backend, &keys.material) {
            (Backend::Simulator, PublicMaterial::Sim) => CipherPayload::Sim(self.decode(pt)),
            (Backend::Ckks(ctx), PublicMaterial::Ckks { pk, .. }) => {
                CipherPayload::Ckks(ctx.encrypt(&pt.values, pt.scale, level, pk, rng)?)
            }
            _ => return Err(HeError::ParamsMismatch),
        };
        Ok(SlotCipher { fingerprint: self.fingerprint, level, scale: pt.scale, slot_count: self.slot_count(), payload })
    }

    pub fn decrypt(&self, ct: &SlotCipher, keys: &KeySet) -> Result<SlotPlain> {
        let sk = keys.secret.as_ref().ok_or(HeError::Unauthorized)?;
        if sk.fingerprint != self.fingerprint || ct.fingerprint != self.fingerprint {
            return Err(HeError::ParamsMismatch);
        }
        let values = match (&ct.payload, &sk.material, &self.backend) {
            (CipherPayload::Sim(v), SecretMaterial::Sim, Backend::Simulator) => v.clone(),
            (CipherPayload::Ckks(c), SecretMaterial::Ckks(s), Backend::Ckks(ctx)) => ctx.decrypt(c, ct.scale, s),
            _ => return Err(HeError::ParamsMismatch),
        };
        Ok(SlotPlain { values, scale: ct.scale })
    }

    pub fn evaluator<'a>(&'a self, keys: &'a PublicKeys) -> Result<Evaluator<'a>> {
        self.check_keys(keys)?;
        Ok(Evaluator { ctx: self, keys })
    }
}

/// Homomorphic operations under one set of public keys. Inputs are never mutated.
#[derive(Clone, Copy, Debug)]
pub struct Evaluator<'a> {
    ctx: &'a HeContext,
    keys: &'a PublicKeys,
}

impl<'a> Evaluator<'a> {
    pub fn context(&self) -> &'a HeContext {
        self.ctx
    }

    pub fn keys(&self) -> &'a PublicKeys {
        self.keys
    }

    fn check(&self, ct: &SlotCipher) -> Result<()> {
        if ct.fingerprint != self.ctx.fingerprint {
            return Err(HeError::ParamsMismatch);
        }
        Ok(())
    }

    fn check_scales(a: &SlotCipher, b: &SlotCipher) -> Result<()> {
        if ((a.scale / b.scale) - 1.0).abs() > SCALE_TOLERANCE {
            return Err(HeError::ScaleMismatch { left: a.scale, right: b.scale });
        }
        Ok(())
    }

    fn wrap(&self, level: u32, scale: f64, payload: CipherPayload) -> SlotCipher {
        SlotCipher { fingerprint: self.ctx.fingerprint, level, scale, slot_count: self.ctx.slot_count(), payload }
    }

    fn ckks(&self) -> &'a CkksContext {
        match &self.ctx.backend {
            Backend::Ckks(c) => c,
            Backend::Simulator => unreachable!("payload matched a CKKS ciphertext"),
        }
    }

    fn sim_zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    }

    /// Slotwise sum. Operands at different levels are aligned by dropping the higher one;
    /// scales must agree within [`SCALE_TOLERANCE`] and the left scale is kept.
    pub fn add(&self, a: &SlotCipher, b: &SlotCipher) -> Result<SlotCipher> {
        self.combine(a, b, false)
    }

    pub fn sub(&self, a: &SlotCipher, b: &SlotCipher) -> Result<SlotCipher> {
        self.combine(a, b, true)
    }

    fn combine(&self, a: &SlotCipher, b: &SlotCipher, subtract: bool) -> Result<SlotCipher> {
        self.check(a)?;
        self.check(b)?;
        Self::check_scales(a, b)?;
        let level = a.level.min(b.level);
        let payload = match (&a.payload, &b.payload) {
            (CipherPayload::Sim(x), CipherPayload::Sim(y)) => {
                CipherPayload::Sim(Self::sim_zip(x, y, |u, v| if subtract { u - v } else { u + v }))
            }
            (CipherPayload::Ckks(x), CipherPayload::Ckks(y)) => {
                let ctx = self.ckks();
                CipherPayload::Ckks(if subtract { ctx.sub(x, y) } else { ctx.add(x, y) })
            }
            _ => return Err(HeError::ParamsMismatch),
        };
        Ok(self.wrap(level, a.scale, payload))
    }

    pub fn negate(&self, a: &SlotCipher) -> Result<SlotCipher> {
        self.check(a)?;
        let payload = match &a.payload {
            CipherPayload::Sim(x) => CipherPayload::Sim(x.iter().map(|v| -v).collect()),
            CipherPayload::Ckks(x) => CipherPayload::Ckks(self.ckks().negate(x)),
        };
        Ok(self.wrap(a.level, a.scale, payload))
    }

    /// Adds a plaintext, encoded at the ciphertext's current scale and level.
    pub fn add_plain(&self, a: &SlotCipher, pt: &SlotPlain) -> Result<SlotCipher> {
        self.check(a)?;
        self.ctx.check_len(pt.len())?;
        let payload = match &a.payload {
            CipherPayload::Sim(x) => {
                let mut out = x.clone();
                for (o, &v) in out.iter_mut().zip(&pt.values) {
                    *o += v;
                }
                CipherPayload::Sim(out)
            }
            CipherPayload::Ckks(x) => {
                let ctx = self.ckks();
                let plain = ctx.encode_limbs(&pt.values, a.scale, a.level)?;
                CipherPayload::Ckks(ctx.add_plain(x, &plain))
            }
        };
        Ok(self.wrap(a.level, a.scale, payload))
    }

    /// Encodes a multiplicand for ciphertexts at `level`. On CKKS the encoding scale
    /// equals the prime consumed by the following rescale, so the product keeps the
    /// ciphertext's scale exactly.
    pub fn prepare(&self, pt: &SlotPlain, level: u32) -> Result<PreparedPlain> {
        self.ctx.check_len(pt.len())?;
        if level == 0 {
            return Err(HeError::DepthExhausted { op: "plaintext multiplication" });
        }
        let payload = match &self.ctx.backend {
            Backend::Simulator => PreparedPayload::Sim(self.ctx.decode(pt)),
            Backend::Ckks(ctx) => PreparedPayload::Ckks(ctx.encode_limbs(&pt.values, ctx.prime(level) as f64, level)?),
        };
        Ok(PreparedPlain { fingerprint: self.ctx.fingerprint, level, values: pt.values.clone(), payload })
    }

    pub fn mul_plain(&self, a: &SlotCipher, pt: &SlotPlain) -> Result<SlotCipher> {
        if a.level == 0 {
            return Err(HeError::DepthExhausted { op: "plaintext multiplication" });
        }
        let prepared = self.prepare(pt, a.level)?;
        self.mul_prepared(a, &prepared)
    }

    /// Product with a prepared plaintext; re-encodes internally if prepared for another level.
    pub fn mul_prepared(&self, a: &SlotCipher, pt: &PreparedPlain) -> Result<SlotCipher> {
        self.check(a)?;
        if pt.fingerprint != self.ctx.fingerprint {
            return Err(HeError::ParamsMismatch);
        }
        if a.level == 0 {
            return Err(HeError::DepthExhausted { op: "plaintext multiplication" });
        }
        if pt.level != a.level {
            let plain = SlotPlain { values: pt.values.clone(), scale: a.scale };
            let fresh = self.prepare(&plain, a.level)?;
            return self.mul_prepared(a, &fresh);
        }
        let payload = match (&a.payload, &pt.payload) {
            (CipherPayload::Sim(x), PreparedPayload::Sim(y)) => CipherPayload::Sim(Self::sim_zip(x, y, |u, v| u * v)),
            (CipherPayload::Ckks(x), PreparedPayload::Ckks(y)) => {
                let ctx = self.ckks();
                CipherPayload::Ckks(ctx.rescale(ctx.mul_plain_raw(x, y)))
            }
            _ => return Err(HeError::ParamsMismatch),
        };
        Ok(self.wrap(a.level - 1, a.scale, payload))
    }

    /// Ciphertext product with relinearisation and rescale.
    pub fn mul(&self, a: &SlotCipher, b: &SlotCipher) -> Result<SlotCipher> {
        self.check(a)?;
        self.check(b)?;
        let level = a.level.min(b.level);
        if level == 0 {
            return Err(HeError::DepthExhausted { op: "ciphertext multiplication" });
        }
        let (payload, scale) = match (&a.payload, &b.payload, &self.keys.material) {
            (CipherPayload::Sim(x), CipherPayload::Sim(y), _) => (CipherPayload::Sim(Self::sim_zip(x, y, |u, v| u * v)), a.scale),
            (CipherPayload::Ckks(x), CipherPayload::Ckks(y), PublicMaterial::Ckks { relin, .. }) => {
                let ctx = self.ckks();
                let scale = a.scale * b.scale / ctx.prime(level) as f64;
                (CipherPayload::Ckks(ctx.mul(x, y, relin)), scale)
            }
            _ => return Err(HeError::ParamsMismatch),
        };
        Ok(self.wrap(level - 1, scale, payload))
    }

    pub fn square(&self, a: &SlotCipher) -> Result<SlotCipher> {
        self.mul(a, a)
    }

    /// Left cyclic shift by `steps` (right for negative), composed from keyed steps.
    pub fn rotate(&self, a: &SlotCipher, steps: i64) -> Result<SlotCipher> {
        self.check(a)?;
        let plan = self.keys.rotation_plan(steps)?;
        let mut out = a.clone();
        for s in plan {
            out = self.rotate_keyed(&out, s);
        }
        Ok(out)
    }

    /// Number of key switches a rotation by `steps` costs.
    pub fn rotation_cost(&self, steps: i64) -> Result<usize> {
        Ok(self.keys.rotation_plan(steps)?.len())
    }

    fn rotate_keyed(&self, a: &SlotCipher, step: usize) -> SlotCipher {
        let payload = match (&a.payload, &self.keys.material) {
            (CipherPayload::Sim(x), _) => {
                let n = x.len();
                CipherPayload::Sim((0..n).map(|i| x[(i + step) % n]).collect())
            }
            (CipherPayload::Ckks(x), PublicMaterial::Ckks { galois, .. }) => {
                CipherPayload::Ckks(self.ckks().rotate(x, &galois[&step]))
            }
            (CipherPayload::Ckks(_), PublicMaterial::Sim) => unreachable!("keys checked against context"),
        };
        self.wrap(a.level, a.scale, payload)
    }

    /// Drops moduli until `level`; a no-op when already at or below it.
    pub fn drop_to_level(&self, a: &SlotCipher, level: u32) -> Result<SlotCipher> {
        self.check(a)?;
        if level >= a.level {
            return Ok(a.clone());
        }
        let payload = match &a.payload {
            CipherPayload::Sim(x) => CipherPayload::Sim(x.clone()),
            CipherPayload::Ckks(x) => CipherPayload::Ckks(self.ckks().drop_to(x, level)),
        };
        Ok(self.wrap(level, a.scale, payload))
    }
}
