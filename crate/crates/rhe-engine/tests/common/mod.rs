#![allow(dead_code)]

use std::sync::OnceLock;

use he_core::rng::stream;
use he_core::{BackendKind, HeContext, HeParams, KeySet, SlotCipher};
use rand::Rng;
use rhe_engine::{HeadSpec, PlainHead, PlainLayer};

pub struct Fixture {
    pub ctx: HeContext,
    pub keys: KeySet,
}

impl Fixture {
    fn new(params: HeParams) -> Self {
        let ctx = HeContext::new(params).unwrap();
        let keys = ctx.keygen(21);
        Fixture { ctx, keys }
    }

    pub fn encrypt(&self, values: &[f64], seed: u64) -> SlotCipher {
        let pt = he_core::SlotPlain { values: values.to_vec(), scale: self.ctx.params().scale() };
        self.ctx.encrypt(&pt, &self.keys.public, &mut stream(seed, &[3])).unwrap()
    }

    pub fn decrypt(&self, ct: &SlotCipher) -> Vec<f64> {
        self.ctx.decrypt(ct, &self.keys).unwrap().values
    }
}

/// Simulator with enough depth for three layers at `N_D = 8192`.
pub fn sim() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| Fixture::new(HeParams::from_chain(8192, 20, 30, 7, 20, BackendKind::Simulator)))
}

/// CKKS at the 10-bit exponent / 23-bit fraction precision, depth for linear heads.
pub fn ckks_linear() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| Fixture::new(HeParams::from_chain(8192, 33, 43, 1, 33, BackendKind::Ckks)))
}

/// Same precision with depth for two-layer heads.
pub fn ckks_two_layer() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| Fixture::new(HeParams::from_chain(8192, 33, 43, 4, 33, BackendKind::Ckks)))
}

pub fn uniform(seed: u64, len: usize, scale: f64) -> Vec<f64> {
    let mut rng = stream(seed, &[5]);
    (0..len).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Random head with weights scaled by `1/sqrt(d_in)` so activations stay of order one.
pub fn scaled_head(spec: &HeadSpec, seed: u64) -> PlainHead {
    let mut rng = stream(seed, &[6]);
    let layers = spec
        .dims
        .windows(2)
        .map(|w| {
            let s = 1.0 / (w[0] as f64).sqrt();
            PlainLayer {
                weights: (0..w[1]).map(|_| (0..w[0]).map(|_| rng.random_range(-s..=s)).collect()).collect(),
                bias: (0..w[1]).map(|_| rng.random_range(-0.5..=0.5)).collect(),
            }
        })
        .collect();
    PlainHead::new(layers).unwrap()
}

pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den
}

/// Head shapes of the reference transfer-learning setups and timing benchmarks.
pub const TABLE_SHAPES: &[&[usize]] = &[
    &[256, 10],
    &[256, 10, 10],
    &[1280, 10],
    &[1280, 16, 10],
    &[2048, 4, 1],
    &[2048, 100],
    &[2048, 128, 1],
    &[2048, 128, 16],
];
