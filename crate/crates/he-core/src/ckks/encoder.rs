//! Canonical-embedding encoder for real slot vectors.
//!
//! Slot `j` is the evaluation of the message polynomial at `w^(5^j)`, where `w`
//! is a primitive `2n`-th complex root of unity. Its conjugate root carries the
//! conjugate value, which keeps coefficients real. With this indexing the Galois
//! map `X -> X^(5^k)` shifts slots left by `k`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Encoder {
    n: usize,
    slot_root_index: Vec<usize>,
    conj_root_index: Vec<usize>,
    twist: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoder").field("n", &self.n).finish()
    }
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        let slots = n / 2;
        let two_n = 2 * n;
        let mut slot_root_index = Vec::with_capacity(slots);
        let mut conj_root_index = Vec::with_capacity(slots);
        let mut e = 1usize;
        for _ in 0..slots {
            slot_root_index.push((e - 1) / 2);
            conj_root_index.push((two_n - e - 1) / 2);
            e = e * 5 % two_n;
        }
        let twist = (0..n)
            .map(|k| Complex64::from_polar(1.0, PI * k as f64 / n as f64))
            .collect();
        let mut planner = FftPlanner::new();
        Encoder {
            n,
            slot_root_index,
            conj_root_index,
            twist,
            forward: planner.plan_fft_forward(n),
            backward: planner.plan_fft_inverse(n),
        }
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    /// Rounded integer coefficients of the polynomial encoding `values * scale`.
    pub fn encode(&self, values: &[f64], scale: f64) -> Vec<f64> {
        assert!(values.len() <= self.slots());
        let mut evals = vec![Complex64::new(0.0, 0.0); self.n];
        for (j, &v) in values.iter().enumerate() {
            let z = Complex64::new(v * scale, 0.0);
            evals[self.slot_root_index[j]] = z;
            evals[self.conj_root_index[j]] = z.conj();
        }
        self.forward.process(&mut evals);
        let inv_n = 1.0 / self.n as f64;
        evals
            .iter()
            .zip(&self.twist)
            .map(|(a, w)| (a * w.conj() * inv_n).re.round())
            .collect()
    }

    /// Slot values of the polynomial with (centered, real) coefficients `coeffs`, divided by `scale`.
    pub fn decode(&self, coeffs: &[f64], scale: f64) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n);
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.twist)
            .map(|(&c, w)| w * c)
            .collect();
        self.backward.process(&mut buf);
        self.slot_root_index.iter().map(|&t| buf[t].re / scale).collect()
    }
}
