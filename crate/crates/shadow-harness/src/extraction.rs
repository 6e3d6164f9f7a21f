//! What a weight-extraction attack would recover: hidden neurons up to permutation and scale.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rhe_engine::{PlainHead, PlainLayer};

use crate::error::{Result, ShadowError};

pub const EXTRACTION_NOISE: f64 = 1e-9;

/// Rescales each hidden neuron to a unit-norm weight row, permutes the hidden neurons, compensates in
/// the following layer (by `1/s²`, since the activation is `x²`), and adds `N(0, EXTRACTION_NOISE²)`
/// to every parameter.
pub fn simulate_weight_extraction(head: &PlainHead, seed: u64) -> Result<PlainHead> {
    if head.layers.len() < 2 {
        return Err(ShadowError::NoHiddenLayer);
    }
    let mut rng = he_core::rng::stream(seed, &[0]);
    let mut layers = head.layers.clone();
    for i in 0..layers.len() - 1 {
        let width = layers[i].d_out();
        let scales: Vec<f64> = layers[i]
            .weights
            .iter()
            .map(|row| {
                let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
                if norm > 0.0 { 1.0 / norm } else { 1.0 }
            })
            .collect();
        let mut perm: Vec<usize> = (0..width).collect();
        perm.shuffle(&mut rng);
        let cur = &layers[i];
        let rescaled = PlainLayer {
            weights: perm.iter().map(|&h| cur.weights[h].iter().map(|w| w * scales[h]).collect()).collect(),
            bias: perm.iter().map(|&h| cur.bias[h] * scales[h]).collect(),
        };
        let next = &layers[i + 1];
        let compensated = PlainLayer {
            weights: next.weights.iter().map(|row| perm.iter().map(|&h| row[h] / (scales[h] * scales[h])).collect()).collect(),
            bias: next.bias.clone(),
        };
        layers[i] = rescaled;
        layers[i + 1] = compensated;
    }
    let mut noise = || EXTRACTION_NOISE * rng.sample::<f64, _>(StandardNormal);
    for layer in &mut layers {
        layer.weights.iter_mut().flatten().chain(layer.bias.iter_mut()).for_each(|p| *p += noise());
    }
    Ok(PlainHead::new(layers)?)
}
