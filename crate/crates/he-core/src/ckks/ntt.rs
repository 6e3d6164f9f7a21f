//! Negacyclic number-theoretic transform over `Z_q[X]/(X^n + 1)`.
//!
//! Forward output is in bit-reversed order: slot `i` holds the evaluation at
//! `psi^(2*brv(i)+1)`. Galois automorphisms are applied directly in this
//! domain as index permutations.

use super::arith::{primitive_root_2n, Modulus};

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

#[derive(Clone, Debug)]
pub struct NttTables {
    pub q: Modulus,
    n: usize,
    log_n: u32,
    roots: Vec<u64>,
    roots_shoup: Vec<u64>,
    inv_roots: Vec<u64>,
    inv_roots_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

impl NttTables {
    pub fn new(q: Modulus, n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let log_n = n.trailing_zeros();
        let psi = primitive_root_2n(&q, n);
        let psi_inv = q.inv(psi);
        let mut roots = vec![0u64; n];
        let mut inv_roots = vec![0u64; n];
        let (mut p, mut pi) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            roots[r] = p;
            inv_roots[r] = pi;
            p = q.mul(p, psi);
            pi = q.mul(pi, psi_inv);
        }
        let roots_shoup = roots.iter().map(|&w| q.shoup(w)).collect();
        let inv_roots_shoup = inv_roots.iter().map(|&w| q.shoup(w)).collect();
        let n_inv = q.inv(n as u64);
        NttTables {
            q,
            n,
            log_n,
            roots,
            roots_shoup,
            inv_roots,
            inv_roots_shoup,
            n_inv,
            n_inv_shoup: q.shoup(n_inv),
        }
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = &self.q;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t >>= 1;
            for i in 0..m {
                let j1 = 2 * i * t;
                let (w, ws) = (self.roots[m + i], self.roots_shoup[m + i]);
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = q.mul_shoup(*y, w, ws);
                    *x = q.add(u, v);
                    *y = q.sub(u, v);
                }
            }
            m <<= 1;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = &self.q;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m >> 1;
            for i in 0..h {
                let j1 = 2 * i * t;
                let (w, ws) = (self.inv_roots[h + i], self.inv_roots_shoup[h + i]);
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = q.add(u, v);
                    *y = q.mul_shoup(q.sub(u, v), w, ws);
                }
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = q.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }

    /// Permutation `perm` with `out[i] = in[perm[i]]` realising `X -> X^g` in the evaluation domain.
    pub fn automorphism_permutation(&self, galois: u64) -> Vec<usize> {
        automorphism_permutation(self.n, self.log_n, galois)
    }
}

/// Evaluation-domain permutation for `X -> X^galois`, shared by every prime of one ring.
pub fn automorphism_permutation(n: usize, log_n: u32, galois: u64) -> Vec<usize> {
    let two_n = 2 * n as u64;
    (0..n)
        .map(|i| {
            let exponent = 2 * bit_reverse(i, log_n) as u64 + 1;
            let target = (exponent * galois) % two_n;
            bit_reverse(((target - 1) / 2) as usize, log_n)
        })
        .collect()
}

/// `X -> X^galois` on a coefficient vector.
pub fn automorphism_coeffs(q: &Modulus, a: &[u64], galois: u64) -> Vec<u64> {
    let n = a.len();
    let two_n = 2 * n as u64;
    let mut out = vec![0u64; n];
    for (i, &c) in a.iter().enumerate() {
        let idx = (i as u64 * galois) % two_n;
        if idx < n as u64 {
            out[idx as usize] = c;
        } else {
            out[(idx - n as u64) as usize] = q.neg(c);
        }
    }
    out
}
