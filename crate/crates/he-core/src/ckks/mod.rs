//! Minimal leveled CKKS over a residue-number-system modulus chain.
//!
//! The chain `[Q_S, Q_M x M, Q_S]` maps to data primes `q_0..q_M` plus one
//! special prime `P` used only for key switching. A ciphertext at level `l`
//! carries residues modulo `q_0..q_l`, always in the evaluation (NTT) domain.
//! Key switching uses per-prime digit decomposition followed by division by `P`.

pub mod arith;
pub mod encoder;
pub mod ntt;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{HeError, Result};
use crate::params::HeParams;
use arith::{ntt_primes, Modulus};
use encoder::Encoder;
use ntt::{automorphism_permutation, NttTables};

/// Standard deviation of the discrete Gaussian error distribution.
pub const ERROR_STD: f64 = 3.2;
const ERROR_TAIL: f64 = 6.0 * ERROR_STD;

/// Residues of one polynomial, one vector per prime, in the evaluation domain.
pub type Limbs = Vec<Vec<u64>>;

#[derive(Clone, Debug, PartialEq)]
pub struct CkksCiphertext {
    pub c0: Limbs,
    pub c1: Limbs,
}

impl CkksCiphertext {
    pub fn level(&self) -> u32 {
        self.c0.len() as u32 - 1
    }
}

#[derive(Clone, Debug)]
pub struct CkksSecretKey {
    pub(crate) coeffs: Vec<i8>,
    ntt: Limbs,
}

/// Uniform component stored as a seed and expanded on demand.
#[derive(Clone, Debug)]
pub struct SeededUniform {
    pub seed: [u8; 32],
    pub limbs: Limbs,
}

#[derive(Clone, Debug)]
pub struct CkksPublicKey {
    pub b: Limbs,
    pub a: SeededUniform,
}

/// Key switching key from some `s'` to the secret key: one `(b_j, a_j)` pair per data prime.
#[derive(Clone, Debug)]
pub struct SwitchKey {
    pub b: Vec<Limbs>,
    pub a: Vec<SeededUniform>,
}

#[derive(Clone, Debug)]
pub struct GaloisKey {
    pub galois: u64,
    pub perm: Vec<usize>,
    pub key: SwitchKey,
}

pub struct CkksContext {
    n: usize,
    depth: usize,
    tables: Vec<NttTables>,
    encoder: Encoder,
    p_mod_q: Vec<u64>,
    p_inv_mod_q: Vec<u64>,
    rescale_inv: Vec<Vec<u64>>,
}

impl std::fmt::Debug for CkksContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CkksContext")
            .field("n", &self.n)
            .field("primes", &self.primes())
            .finish()
    }
}

fn sample_ternary<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Vec<i8> {
    (0..n).map(|_| rng.random_range(-1i8..=1)).collect()
}

fn sample_error<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Vec<i64> {
    let normal = Normal::new(0.0, ERROR_STD).expect("valid normal");
    (0..n)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= ERROR_TAIL {
                break x.round() as i64;
            }
        })
        .collect()
}

impl CkksContext {
    pub fn new(params: &HeParams) -> Result<Self> {
        params.validate()?;
        let n = params.poly_modulus_degree;
        let depth = params.depth() as usize;
        let (q_s, q_m) = (params.q_s(), params.q_m());
        let outer = ntt_primes(q_s, 2, n);
        let interior = ntt_primes(q_m, depth, n);
        let mut primes = Vec::with_capacity(depth + 2);
        primes.push(outer[0]);
        primes.extend(interior);
        primes.push(outer[1]);
        let tables: Vec<NttTables> =
            primes.iter().map(|&q| NttTables::new(Modulus::new(q), n)).collect();
        let special = tables[depth + 1].q;
        let p_mod_q: Vec<u64> = tables[..=depth].iter().map(|t| t.q.reduce(special.value())).collect();
        let p_inv_mod_q = tables[..=depth]
            .iter()
            .zip(&p_mod_q)
            .map(|(t, &p)| t.q.inv(p))
            .collect();
        let rescale_inv = (0..=depth)
            .map(|l| {
                (0..l)
                    .map(|i| tables[i].q.inv(tables[i].q.reduce(tables[l].q.value())))
                    .collect()
            })
            .collect();
        Ok(CkksContext { n, depth, tables, encoder: Encoder::new(n), p_mod_q, p_inv_mod_q, rescale_inv })
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Data primes followed by the special prime.
    pub fn primes(&self) -> Vec<u64> {
        self.tables.iter().map(|t| t.q.value()).collect()
    }

    pub fn prime(&self, level: u32) -> u64 {
        self.tables[level as usize].q.value()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    fn special(&self) -> usize {
        self.depth + 1
    }

    fn all_moduli(&self) -> std::ops::Range<usize> {
        0..self.depth + 2
    }

    /// Reduces small signed coefficients into the evaluation domain for the given primes.
    fn lift_small<I: Into<i64> + Copy>(&self, coeffs: &[I], moduli: std::ops::Range<usize>) -> Limbs {
        moduli
            .map(|k| {
                let t = &self.tables[k];
                let mut v: Vec<u64> = coeffs.iter().map(|&c| t.q.from_i64(c.into())).collect();
                t.forward(&mut v);
                v
            })
            .collect()
    }

    fn uniform(&self, seed: [u8; 32], moduli: std::ops::Range<usize>) -> SeededUniform {
        let mut rng = ChaCha20Rng::from_seed(seed);
        let limbs = moduli
            .map(|k| {
                let q = self.tables[k].q.value();
                (0..self.n).map(|_| rng.random_range(0..q)).collect()
            })
            .collect();
        SeededUniform { seed, limbs }
    }

    pub fn expand_public_key(&self, b: Limbs, a_seed: [u8; 32]) -> CkksPublicKey {
        CkksPublicKey { b, a: self.uniform(a_seed, 0..self.depth + 1) }
    }

    pub fn expand_switch_key(&self, b: Vec<Limbs>, a_seeds: &[[u8; 32]]) -> SwitchKey {
        let a = a_seeds.iter().map(|&s| self.uniform(s, self.all_moduli())).collect();
        SwitchKey { b, a }
    }

    pub fn galois_element(&self, step: i64) -> u64 {
        let slots = self.slots() as i64;
        let two_n = 2 * self.n as u64;
        (0..step.rem_euclid(slots)).fold(1u64, |g, _| g * 5 % two_n)
    }

    pub fn galois_key_from_parts(&self, step: i64, key: SwitchKey) -> GaloisKey {
        let galois = self.galois_element(step);
        GaloisKey { galois, perm: automorphism_permutation(self.n, self.n.trailing_zeros(), galois), key }
    }

    pub fn secret_from_coeffs(&self, coeffs: Vec<i8>) -> CkksSecretKey {
        let ntt = self.lift_small(&coeffs, self.all_moduli());
        CkksSecretKey { coeffs, ntt }
    }

    pub fn gen_secret<R: RngCore + ?Sized>(&self, rng: &mut R) -> CkksSecretKey {
        self.secret_from_coeffs(sample_ternary(rng, self.n))
    }

    pub fn gen_public<R: RngCore + ?Sized>(&self, sk: &CkksSecretKey, rng: &mut R) -> CkksPublicKey {
        let a = self.uniform(rng.random(), 0..self.depth + 1);
        let e = self.lift_small(&sample_error(rng, self.n), 0..self.depth + 1);
        let b = (0..=self.depth)
            .map(|k| {
                let q = &self.tables[k].q;
                (0..self.n)
                    .map(|x| q.sub(e[k][x], q.mul(a.limbs[k][x], sk.ntt[k][x])))
                    .collect()
            })
            .collect();
        CkksPublicKey { b, a }
    }

    fn gen_switch_key<R: RngCore + ?Sized>(&self, sk: &CkksSecretKey, target: &Limbs, rng: &mut R) -> SwitchKey {
        let mut bs = Vec::with_capacity(self.depth + 1);
        let mut as_ = Vec::with_capacity(self.depth + 1);
        for j in 0..=self.depth {
            let a = self.uniform(rng.random(), self.all_moduli());
            let e = self.lift_small(&sample_error(rng, self.n), self.all_moduli());
            let b = self
                .all_moduli()
                .map(|k| {
                    let q = &self.tables[k].q;
                    (0..self.n)
                        .map(|x| {
                            let mut v = q.sub(e[k][x], q.mul(a.limbs[k][x], sk.ntt[k][x]));
                            if k == j {
                                v = q.add(v, q.mul(self.p_mod_q[j], target[k][x]));
                            }
                            v
                        })
                        .collect()
                })
                .collect();
            bs.push(b);
            as_.push(a);
        }
        SwitchKey { b: bs, a: as_ }
    }

    pub fn gen_relin<R: RngCore + ?Sized>(&self, sk: &CkksSecretKey, rng: &mut R) -> SwitchKey {
        let squared: Limbs = self
            .all_moduli()
            .map(|k| {
                let q = &self.tables[k].q;
                sk.ntt[k].iter().map(|&s| q.mul(s, s)).collect()
            })
            .collect();
        self.gen_switch_key(sk, &squared, rng)
    }

    pub fn gen_galois<R: RngCore + ?Sized>(&self, sk: &CkksSecretKey, step: i64, rng: &mut R) -> GaloisKey {
        let galois = self.galois_element(step);
        let perm = automorphism_permutation(self.n, self.n.trailing_zeros(), galois);
        let rotated: Limbs = sk.ntt.iter().map(|limb| perm.iter().map(|&j| limb[j]).collect()).collect();
        let key = self.gen_switch_key(sk, &rotated, rng);
        GaloisKey { galois, perm, key }
    }

    /// Quantised residues of `values * scale` at `level`, in the evaluation domain.
    pub fn encode_limbs(&self, values: &[f64], scale: f64, level: u32) -> Result<Limbs> {
        let coeffs = self.encoder.encode(values, scale);
        if coeffs.iter().any(|c| !c.is_finite() || c.abs() >= 2f64.powi(120)) {
            return Err(HeError::Format("encoded coefficient out of range".into()));
        }
        Ok((0..=level as usize)
            .map(|k| {
                let t = &self.tables[k];
                let mut v: Vec<u64> = coeffs.iter().map(|&c| t.q.from_i128(c as i128)).collect();
                t.forward(&mut v);
                v
            })
            .collect())
    }

    /// Values represented after quantisation at `scale`.
    pub fn quantize(&self, values: &[f64], scale: f64) -> Vec<f64> {
        let coeffs = self.encoder.encode(values, scale);
        self.encoder.decode(&coeffs, scale)
    }

    pub fn encrypt<R: RngCore + ?Sized>(
        &self,
        values: &[f64],
        scale: f64,
        level: u32,
        pk: &CkksPublicKey,
        rng: &mut R,
    ) -> Result<CkksCiphertext> {
        let m = self.encode_limbs(values, scale, level)?;
        let moduli = 0..level as usize + 1;
        let u = self.lift_small(&sample_ternary(rng, self.n), moduli.clone());
        let e0 = self.lift_small(&sample_error(rng, self.n), moduli.clone());
        let e1 = self.lift_small(&sample_error(rng, self.n), moduli.clone());
        let mut c0 = Vec::with_capacity(moduli.len());
        let mut c1 = Vec::with_capacity(moduli.len());
        for k in moduli {
            let q = &self.tables[k].q;
            c0.push(
                (0..self.n)
                    .map(|x| q.add(q.add(q.mul(pk.b[k][x], u[k][x]), e0[k][x]), m[k][x]))
                    .collect(),
            );
            c1.push((0..self.n).map(|x| q.add(q.mul(pk.a.limbs[k][x], u[k][x]), e1[k][x])).collect());
        }
        Ok(CkksCiphertext { c0, c1 })
    }

    /// Decrypts through the lowest prime; valid while `|value| * scale < q_0 / 2`.
    pub fn decrypt(&self, ct: &CkksCiphertext, scale: f64, sk: &CkksSecretKey) -> Vec<f64> {
        let t = &self.tables[0];
        let q = &t.q;
        let mut m: Vec<u64> = (0..self.n)
            .map(|x| q.add(ct.c0[0][x], q.mul(ct.c1[0][x], sk.ntt[0][x])))
            .collect();
        t.inverse(&mut m);
        let coeffs: Vec<f64> = m.iter().map(|&c| q.centered(c) as f64).collect();
        self.encoder.decode(&coeffs, scale)
    }

    fn truncated(limbs: &Limbs, level: u32) -> &[Vec<u64>] {
        &limbs[..=level as usize]
    }

    fn zip_limbs(&self, a: &[Vec<u64>], b: &[Vec<u64>], f: impl Fn(&Modulus, u64, u64) -> u64) -> Limbs {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| {
                let q = &self.tables[k].q;
                x.iter().zip(y).map(|(&u, &v)| f(q, u, v)).collect()
            })
            .collect()
    }

    pub fn add(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> CkksCiphertext {
        let level = a.level().min(b.level());
        CkksCiphertext {
            c0: self.zip_limbs(Self::truncated(&a.c0, level), Self::truncated(&b.c0, level), |q, u, v| q.add(u, v)),
            c1: self.zip_limbs(Self::truncated(&a.c1, level), Self::truncated(&b.c1, level), |q, u, v| q.add(u, v)),
        }
    }

    pub fn sub(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> CkksCiphertext {
        let level = a.level().min(b.level());
        CkksCiphertext {
            c0: self.zip_limbs(Self::truncated(&a.c0, level), Self::truncated(&b.c0, level), |q, u, v| q.sub(u, v)),
            c1: self.zip_limbs(Self::truncated(&a.c1, level), Self::truncated(&b.c1, level), |q, u, v| q.sub(u, v)),
        }
    }

    pub fn negate(&self, a: &CkksCiphertext) -> CkksCiphertext {
        let neg = |limbs: &Limbs| -> Limbs {
            limbs
                .iter()
                .enumerate()
                .map(|(k, l)| l.iter().map(|&x| self.tables[k].q.neg(x)).collect())
                .collect()
        };
        CkksCiphertext { c0: neg(&a.c0), c1: neg(&a.c1) }
    }

    pub fn add_plain(&self, a: &CkksCiphertext, plain: &Limbs) -> CkksCiphertext {
        let level = a.level();
        CkksCiphertext {
            c0: self.zip_limbs(&a.c0, Self::truncated(plain, level), |q, u, v| q.add(u, v)),
            c1: a.c1.clone(),
        }
    }

    pub fn drop_to(&self, a: &CkksCiphertext, level: u32) -> CkksCiphertext {
        CkksCiphertext {
            c0: Self::truncated(&a.c0, level).to_vec(),
            c1: Self::truncated(&a.c1, level).to_vec(),
        }
    }

    /// Divides by the top prime of `limbs`, rounding, and drops that prime.
    fn rescale_limbs(&self, mut limbs: Limbs) -> Limbs {
        let top = limbs.len() - 1;
        let mut last = limbs.pop().expect("at least one limb");
        let tt = &self.tables[top];
        tt.inverse(&mut last);
        for (i, limb) in limbs.iter_mut().enumerate() {
            let t = &self.tables[i];
            let mut r: Vec<u64> = last.iter().map(|&c| t.q.from_i64(tt.q.centered(c))).collect();
            t.forward(&mut r);
            let inv = self.rescale_inv[top][i];
            for (x, y) in limb.iter_mut().zip(&r) {
                *x = t.q.mul(t.q.sub(*x, *y), inv);
            }
        }
        limbs
    }

    pub fn rescale(&self, ct: CkksCiphertext) -> CkksCiphertext {
        CkksCiphertext { c0: self.rescale_limbs(ct.c0), c1: self.rescale_limbs(ct.c1) }
    }

    /// Pointwise product with an encoded plaintext, without rescaling.
    pub fn mul_plain_raw(&self, a: &CkksCiphertext, plain: &Limbs) -> CkksCiphertext {
        let p = Self::truncated(plain, a.level());
        CkksCiphertext {
            c0: self.zip_limbs(&a.c0, p, |q, u, v| q.mul(u, v)),
            c1: self.zip_limbs(&a.c1, p, |q, u, v| q.mul(u, v)),
        }
    }

    /// Switches `d` (residues at the data primes `0..=l`) from `s'` to the secret key.
    fn key_switch(&self, d: &[Vec<u64>], key: &SwitchKey) -> (Limbs, Limbs) {
        let count = d.len();
        let targets: Vec<usize> = (0..count).chain(std::iter::once(self.special())).collect();
        let mut acc0 = vec![vec![0u64; self.n]; count + 1];
        let mut acc1 = vec![vec![0u64; self.n]; count + 1];
        for (j, dj) in d.iter().enumerate() {
            let tj = &self.tables[j];
            let mut coeff = dj.clone();
            tj.inverse(&mut coeff);
            for (slot, &k) in targets.iter().enumerate() {
                let t = &self.tables[k];
                let digit: Vec<u64> = if k == j {
                    dj.clone()
                } else {
                    let mut v: Vec<u64> = coeff.iter().map(|&c| t.q.from_i64(tj.q.centered(c))).collect();
                    t.forward(&mut v);
                    v
                };
                let (kb, ka) = (&key.b[j][k], &key.a[j].limbs[k]);
                let (o0, o1) = (&mut acc0[slot], &mut acc1[slot]);
                for x in 0..self.n {
                    o0[x] = t.q.add(o0[x], t.q.mul(digit[x], kb[x]));
                    o1[x] = t.q.add(o1[x], t.q.mul(digit[x], ka[x]));
                }
            }
        }
        (self.mod_down(acc0), self.mod_down(acc1))
    }

    /// Divides residues over `q_0..q_l, P` by `P` with rounding.
    fn mod_down(&self, mut acc: Limbs) -> Limbs {
        let ts = &self.tables[self.special()];
        let mut last = acc.pop().expect("special limb");
        ts.inverse(&mut last);
        for (i, limb) in acc.iter_mut().enumerate() {
            let t = &self.tables[i];
            let mut r: Vec<u64> = last.iter().map(|&c| t.q.from_i64(ts.q.centered(c))).collect();
            t.forward(&mut r);
            let inv = self.p_inv_mod_q[i];
            for (x, y) in limb.iter_mut().zip(&r) {
                *x = t.q.mul(t.q.sub(*x, *y), inv);
            }
        }
        acc
    }

    /// Tensor product, relinearisation and rescale.
    pub fn mul(&self, a: &CkksCiphertext, b: &CkksCiphertext, relin: &SwitchKey) -> CkksCiphertext {
        let level = a.level().min(b.level());
        let (a0, a1) = (Self::truncated(&a.c0, level), Self::truncated(&a.c1, level));
        let (b0, b1) = (Self::truncated(&b.c0, level), Self::truncated(&b.c1, level));
        let d0 = self.zip_limbs(a0, b0, |q, u, v| q.mul(u, v));
        let cross0 = self.zip_limbs(a0, b1, |q, u, v| q.mul(u, v));
        let d1 = self.zip_limbs(&cross0, &self.zip_limbs(a1, b0, |q, u, v| q.mul(u, v)), |q, u, v| q.add(u, v));
        let d2 = self.zip_limbs(a1, b1, |q, u, v| q.mul(u, v));
        let (k0, k1) = self.key_switch(&d2, relin);
        let ct = CkksCiphertext {
            c0: self.zip_limbs(&d0, &k0, |q, u, v| q.add(u, v)),
            c1: self.zip_limbs(&d1, &k1, |q, u, v| q.add(u, v)),
        };
        self.rescale(ct)
    }

    pub fn rotate(&self, a: &CkksCiphertext, key: &GaloisKey) -> CkksCiphertext {
        let permute = |limbs: &Limbs| -> Limbs {
            limbs.iter().map(|l| key.perm.iter().map(|&j| l[j]).collect()).collect()
        };
        let c0 = permute(&a.c0);
        let c1 = permute(&a.c1);
        let (k0, k1) = self.key_switch(&c1, &key.key);
        CkksCiphertext { c0: self.zip_limbs(&c0, &k0, |q, u, v| q.add(u, v)), c1: k1 }
    }
}
