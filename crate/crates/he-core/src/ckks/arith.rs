//! Word-sized modular arithmetic for primes below 2^62 and NTT-friendly prime search.

/// An odd modulus with precomputed Barrett constant `floor(2^128 / q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    q: u64,
    ratio_hi: u64,
    ratio_lo: u64,
}

impl Modulus {
    pub fn new(q: u64) -> Self {
        assert!(q > 2 && q < (1 << 62) && q % 2 == 1, "unsupported modulus {q}");
        let ratio = u128::MAX / q as u128;
        Modulus { q, ratio_hi: (ratio >> 64) as u64, ratio_lo: ratio as u64 }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let (x1, x0) = ((x >> 64) as u64, x as u64);
        let low = (x0 as u128 * self.ratio_lo as u128) >> 64;
        let (s, c1) = (x0 as u128 * self.ratio_hi as u128).overflowing_add(x1 as u128 * self.ratio_lo as u128);
        let (s, c2) = s.overflowing_add(low);
        let carry = ((c1 as u64) + (c2 as u64)) as u128;
        let qhat = (x1 as u128)
            .wrapping_mul(self.ratio_hi as u128)
            .wrapping_add(s >> 64)
            .wrapping_add(carry << 64) as u64;
        let mut r = x0.wrapping_sub(qhat.wrapping_mul(self.q));
        while r >= self.q {
            r -= self.q;
        }
        r
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> u64 {
        if a < self.q {
            a
        } else {
            a % self.q
        }
    }

    #[inline]
    pub fn from_i64(&self, x: i64) -> u64 {
        x.rem_euclid(self.q as i64) as u64
    }

    #[inline]
    pub fn from_i128(&self, x: i128) -> u64 {
        x.rem_euclid(self.q as i128) as u64
    }

    /// Representative in `(-q/2, q/2]`.
    #[inline]
    pub fn centered(&self, a: u64) -> i64 {
        if a > self.q / 2 {
            a as i64 - self.q as i64
        } else {
            a as i64
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse by Fermat's little theorem; `q` must be prime.
    pub fn inv(&self, a: u64) -> u64 {
        let a = self.reduce(a);
        assert!(a != 0, "zero has no inverse");
        self.pow(a, self.q - 2)
    }

    /// Shoup companion `floor(w * 2^64 / q)` for repeated multiplication by `w`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.q as u128) as u64
    }

    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.q));
        if r >= self.q {
            r - self.q
        } else {
            r
        }
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    'witness: for a in BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The largest `count` primes `q ≡ 1 (mod 2n)` with exactly `bits` bits, in descending order.
pub fn ntt_primes(bits: u32, count: usize, n: usize) -> Vec<u64> {
    assert!((2..=61).contains(&bits));
    let step = 2 * n as u64;
    let upper = 1u64 << bits;
    let lower = 1u64 << (bits - 1);
    let mut candidate = upper - step + 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        assert!(candidate > lower, "ran out of {bits}-bit primes for n = {n}");
        if is_prime(candidate) {
            out.push(candidate);
        }
        candidate -= step;
    }
    out
}

/// A primitive `2n`-th root of unity modulo prime `q`.
pub fn primitive_root_2n(q: &Modulus, n: usize) -> u64 {
    let order = 2 * n as u64;
    let cofactor = (q.value() - 1) / order;
    (2..)
        .map(|g| q.pow(g, cofactor))
        .find(|&psi| q.pow(psi, n as u64) == q.value() - 1)
        .expect("prime admits a 2n-th root")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_primes() {
        let primes: Vec<u64> = (0..50).filter(|&n| is_prime(n)).collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47]);
        assert!(!is_prime(3_215_031_751));
        assert!(is_prime((1 << 61) - 1));
    }

    #[test]
    fn prime_search_shape() {
        let ps = ntt_primes(33, 3, 8192);
        assert_eq!(ps.len(), 3);
        for p in &ps {
            assert_eq!(p % 16384, 1);
            assert_eq!(64 - p.leading_zeros(), 33);
        }
        assert!(ps.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn root_has_exact_order() {
        let q = Modulus::new(ntt_primes(40, 1, 1024)[0]);
        let psi = primitive_root_2n(&q, 1024);
        assert_eq!(q.pow(psi, 2048), 1);
        assert_eq!(q.pow(psi, 1024), q.value() - 1);
    }

    proptest! {
        #[test]
        fn barrett_matches_u128(a in any::<u64>(), b in any::<u64>(), pick in 0usize..3) {
            let q = Modulus::new([ntt_primes(60, 1, 4096)[0], ntt_primes(33, 1, 8192)[0], 97][pick]);
            let (a, b) = (a % q.value(), b % q.value());
            let want = (a as u128 * b as u128 % q.value() as u128) as u64;
            prop_assert_eq!(q.mul(a, b), want);
            let ws = q.shoup(b);
            prop_assert_eq!(q.mul_shoup(a, b, ws), want);
        }

        #[test]
        fn inverse_roundtrip(a in 1u64..1_000_000_000) {
            let q = Modulus::new(ntt_primes(43, 1, 8192)[0]);
            prop_assert_eq!(q.mul(a, q.inv(a)), 1);
        }
    }
}
