//! Little-endian binary framing for ciphertexts and keys.
//!
//! Ciphertext blob: `u32` length of what follows, magic `SCT1`, backend tag byte,
//! level byte, then the payload (params fingerprint, scale, slot count and either
//! raw slot values or residue limbs). Uniform key components are stored as seeds.

use std::collections::BTreeMap;

use crate::ckks::{CkksCiphertext, CkksContext, Limbs, SwitchKey};
use crate::context::{Backend, HeContext};
use crate::error::{HeError, Result};
use crate::keys::{PublicKeys, PublicMaterial, SecretKey, SecretMaterial};
use crate::params::BackendKind;
use crate::slots::{CipherPayload, SlotCipher};

pub const CIPHER_MAGIC: &[u8; 4] = b"SCT1";
pub const PUBLIC_MAGIC: &[u8; 4] = b"RHK1";
pub const SECRET_MAGIC: &[u8; 4] = b"RSK1";

/// Appending writer for little-endian fields.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    /// `u32` length followed by the bytes.
    pub fn framed(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.bytes(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over a byte slice; every read is bounds-checked.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| HeError::Format(format!("truncated input at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const K: usize>(&mut self) -> Result<[u8; K]> {
        Ok(self.take(K)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn framed(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(HeError::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(HeError::Format(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

fn write_limbs(w: &mut Writer, limbs: &[Vec<u64>]) {
    w.u8(limbs.len() as u8);
    for limb in limbs {
        for &x in limb {
            w.u64(x);
        }
    }
}

fn read_limbs(r: &mut Reader<'_>, n: usize, primes: &[u64], max_limbs: usize) -> Result<Limbs> {
    let count = r.u8()? as usize;
    if count == 0 || count > max_limbs {
        return Err(HeError::Format(format!("limb count {count} out of range")));
    }
    (0..count)
        .map(|k| {
            let bytes = r.take(n * 8)?;
            let limb: Vec<u64> = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
            if limb.iter().any(|&x| x >= primes[k]) {
                return Err(HeError::Format("residue exceeds its modulus".into()));
            }
            Ok(limb)
        })
        .collect()
}

fn write_switch_key(w: &mut Writer, key: &SwitchKey) {
    w.u8(key.b.len() as u8);
    for (b, a) in key.b.iter().zip(&key.a) {
        w.bytes(&a.seed);
        write_limbs(w, b);
    }
}

fn read_switch_key(r: &mut Reader<'_>, ctx: &CkksContext) -> Result<SwitchKey> {
    let digits = r.u8()? as usize;
    if digits != ctx.depth() + 1 {
        return Err(HeError::Format(format!("switch key has {digits} digits")));
    }
    let primes = ctx.primes();
    let mut bs = Vec::with_capacity(digits);
    let mut seeds = Vec::with_capacity(digits);
    for _ in 0..digits {
        seeds.push(r.array::<32>()?);
        let b = read_limbs(r, ctx.degree(), &primes, primes.len())?;
        if b.len() != primes.len() {
            return Err(HeError::Format("switch key limb count".into()));
        }
        bs.push(b);
    }
    Ok(ctx.expand_switch_key(bs, &seeds))
}

impl HeContext {
    fn ckks_ctx(&self) -> Result<&CkksContext> {
        match &self.backend {
            Backend::Ckks(c) => Ok(c),
            Backend::Simulator => Err(HeError::ParamsMismatch),
        }
    }

    pub fn serialize_ciphertext(&self, ct: &SlotCipher) -> Vec<u8> {
        let mut body = Writer::new();
        body.bytes(CIPHER_MAGIC);
        body.u8(ct.backend().tag());
        body.u8(ct.level as u8);
        body.u64(ct.fingerprint);
        body.f64(ct.scale);
        body.u32(ct.slot_count as u32);
        match &ct.payload {
            CipherPayload::Sim(values) => {
                for &v in values {
                    body.f64(v);
                }
            }
            CipherPayload::Ckks(c) => {
                body.u32(c.c0[0].len() as u32);
                write_limbs(&mut body, &c.c0);
                write_limbs(&mut body, &c.c1);
            }
        }
        let mut w = Writer::new();
        w.framed(&body.finish());
        w.finish()
    }

    /// Reads one framed ciphertext from the reader's current position.
    pub fn read_ciphertext(&self, r: &mut Reader<'_>) -> Result<SlotCipher> {
        let mut r = Reader::new(r.framed()?);
        r.magic(CIPHER_MAGIC)?;
        let kind = BackendKind::from_tag(r.u8()?).ok_or_else(|| HeError::Format("unknown backend tag".into()))?;
        let level = r.u8()? as u32;
        let fingerprint = r.u64()?;
        if kind != self.backend_kind() || fingerprint != self.fingerprint() {
            return Err(HeError::ParamsMismatch);
        }
        if level > self.depth() {
            return Err(HeError::Format(format!("level {level} above depth {}", self.depth())));
        }
        let scale = r.f64()?;
        let slot_count = r.u32()? as usize;
        if slot_count != self.slot_count() {
            return Err(HeError::Format(format!("slot count {slot_count}")));
        }
        let payload = match kind {
            BackendKind::Simulator => CipherPayload::Sim((0..slot_count).map(|_| r.f64()).collect::<Result<_>>()?),
            BackendKind::Ckks => {
                let ctx = self.ckks_ctx()?;
                let n = r.u32()? as usize;
                if n != ctx.degree() {
                    return Err(HeError::Format(format!("ring degree {n}")));
                }
                let primes = ctx.primes();
                let c0 = read_limbs(&mut r, n, &primes, level as usize + 1)?;
                let c1 = read_limbs(&mut r, n, &primes, level as usize + 1)?;
                if c0.len() != level as usize + 1 || c1.len() != c0.len() {
                    return Err(HeError::Format("limb count does not match level".into()));
                }
                CipherPayload::Ckks(CkksCiphertext { c0, c1 })
            }
        };
        r.finish()?;
        Ok(SlotCipher { fingerprint, level, scale, slot_count, payload })
    }

    pub fn deserialize_ciphertext(&self, bytes: &[u8]) -> Result<SlotCipher> {
        let mut r = Reader::new(bytes);
        let ct = self.read_ciphertext(&mut r)?;
        r.finish()?;
        Ok(ct)
    }

    pub fn serialize_public_keys(&self, keys: &PublicKeys) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(PUBLIC_MAGIC);
        w.u8(self.backend_kind().tag());
        w.u64(keys.fingerprint);
        w.u32(keys.steps.len() as u32);
        for &s in &keys.steps {
            w.u32(s as u32);
        }
        if let PublicMaterial::Ckks { pk, relin, galois } = &keys.material {
            w.bytes(&pk.a.seed);
            write_limbs(&mut w, &pk.b);
            write_switch_key(&mut w, relin);
            for key in galois.values() {
                write_switch_key(&mut w, &key.key);
            }
        }
        w.finish()
    }

    pub fn deserialize_public_keys(&self, bytes: &[u8]) -> Result<PublicKeys> {
        let mut r = Reader::new(bytes);
        r.magic(PUBLIC_MAGIC)?;
        let kind = BackendKind::from_tag(r.u8()?).ok_or_else(|| HeError::Format("unknown backend tag".into()))?;
        let fingerprint = r.u64()?;
        if kind != self.backend_kind() || fingerprint != self.fingerprint() {
            return Err(HeError::ParamsMismatch);
        }
        let slots = self.slot_count();
        let count = r.u32()? as usize;
        let steps = (0..count)
            .map(|_| {
                let s = r.u32()? as usize;
                if s == 0 || s >= slots {
                    return Err(HeError::Format(format!("rotation step {s} out of range")));
                }
                Ok(s)
            })
            .collect::<Result<std::collections::BTreeSet<_>>>()?;
        let material = match kind {
            BackendKind::Simulator => PublicMaterial::Sim,
            BackendKind::Ckks => {
                let ctx = self.ckks_ctx()?;
                let seed = r.array::<32>()?;
                let depth = ctx.depth();
                let b = read_limbs(&mut r, ctx.degree(), &ctx.primes(), depth + 1)?;
                if b.len() != depth + 1 {
                    return Err(HeError::Format("public key limb count".into()));
                }
                let pk = ctx.expand_public_key(b, seed);
                let relin = read_switch_key(&mut r, ctx)?;
                let mut galois = BTreeMap::new();
                for &s in &steps {
                    let key = read_switch_key(&mut r, ctx)?;
                    galois.insert(s, ctx.galois_key_from_parts(s as i64, key));
                }
                PublicMaterial::Ckks { pk, relin, galois }
            }
        };
        r.finish()?;
        Ok(PublicKeys { fingerprint, slots, steps, material })
    }

    pub fn serialize_secret_key(&self, sk: &SecretKey) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(SECRET_MAGIC);
        w.u8(self.backend_kind().tag());
        w.u64(sk.fingerprint);
        if let SecretMaterial::Ckks(s) = &sk.material {
            w.u32(s.coeffs.len() as u32);
            w.bytes(&s.coeffs.iter().map(|&c| c as u8).collect::<Vec<_>>());
        }
        w.finish()
    }

    pub fn deserialize_secret_key(&self, bytes: &[u8]) -> Result<SecretKey> {
        let mut r = Reader::new(bytes);
        r.magic(SECRET_MAGIC)?;
        let kind = BackendKind::from_tag(r.u8()?).ok_or_else(|| HeError::Format("unknown backend tag".into()))?;
        let fingerprint = r.u64()?;
        if kind != self.backend_kind() || fingerprint != self.fingerprint() {
            return Err(HeError::ParamsMismatch);
        }
        let material = match kind {
            BackendKind::Simulator => SecretMaterial::Sim,
            BackendKind::Ckks => {
                let ctx = self.ckks_ctx()?;
                let n = r.u32()? as usize;
                if n != ctx.degree() {
                    return Err(HeError::Format(format!("ring degree {n}")));
                }
                let coeffs: Vec<i8> = r.take(n)?.iter().map(|&b| b as i8).collect();
                if coeffs.iter().any(|c| !(-1..=1).contains(c)) {
                    return Err(HeError::Format("secret coefficient outside {-1, 0, 1}".into()));
                }
                SecretMaterial::Ckks(ctx.secret_from_coeffs(coeffs))
            }
        };
        r.finish()?;
        Ok(SecretKey { fingerprint, material })
    }
}
