//! Plaintext head: the reference forward pass the encrypted circuit must reproduce.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::layout::{pad_dim, HeadSpec};

pub const HEAD_SCHEMA: &str = "rhe.head/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainLayer {
    /// `d_out` rows of `d_in` columns.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl PlainLayer {
    pub fn d_in(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn d_out(&self) -> usize {
        self.weights.len()
    }

    /// `W x + b`, each dot product summed in the same pairwise order as the encrypted rotate-and-add tree.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        let k_hat = pad_dim(self.d_in());
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| {
                let products: Vec<f64> = row.iter().zip(x).map(|(w, v)| w * v).collect();
                tree_sum(&products, k_hat) + b
            })
            .collect()
    }
}

/// Sum of `values` zero-padded to `width` (a power of two), combining `a[i] + a[i + 2^j]` at stage `j`.
pub fn tree_sum(values: &[f64], width: usize) -> f64 {
    let mut a = values.to_vec();
    a.resize(width.max(values.len()), 0.0);
    let mut stride = 1;
    while stride < a.len() {
        let mut i = 0;
        while i + stride < a.len() {
            a[i] += a[i + stride];
            i += 2 * stride;
        }
        stride *= 2;
    }
    a[0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainHead {
    #[serde(default = "schema")]
    pub schema: String,
    pub layers: Vec<PlainLayer>,
}

fn schema() -> String {
    HEAD_SCHEMA.to_string()
}

impl PlainHead {
    pub fn new(layers: Vec<PlainLayer>) -> Result<Self> {
        let head = PlainHead { schema: schema(), layers };
        head.spec()?;
        Ok(head)
    }

    /// Weights and biases drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(spec: &HeadSpec, scale: f64, rng: &mut R) -> Self {
        let layers = spec
            .dims
            .windows(2)
            .map(|w| PlainLayer {
                weights: (0..w[1]).map(|_| (0..w[0]).map(|_| rng.random_range(-scale..=scale)).collect()).collect(),
                bias: (0..w[1]).map(|_| rng.random_range(-scale..=scale)).collect(),
            })
            .collect();
        PlainHead { schema: schema(), layers }
    }

    pub fn zeros(spec: &HeadSpec) -> Self {
        let layers = spec
            .dims
            .windows(2)
            .map(|w| PlainLayer { weights: vec![vec![0.0; w[0]]; w[1]], bias: vec![0.0; w[1]] })
            .collect();
        PlainHead { schema: schema(), layers }
    }

    /// Shape of the head, checking every layer is rectangular and chains to the next.
    pub fn spec(&self) -> Result<HeadSpec> {
        let first = self.layers.first().ok_or_else(|| EngineError::InvalidHead("no layers".into()))?;
        let mut dims = vec![first.d_in()];
        for (i, layer) in self.layers.iter().enumerate() {
            let d_in = *dims.last().unwrap();
            if layer.weights.iter().any(|r| r.len() != d_in) {
                return Err(EngineError::InvalidHead(format!("layer {i} rows must all have {d_in} columns")));
            }
            if layer.bias.len() != layer.d_out() {
                return Err(EngineError::Dimension { what: "bias length", expected: layer.d_out(), got: layer.bias.len() });
            }
            dims.push(layer.d_out());
        }
        HeadSpec::new(dims)
    }

    /// Square-activation forward: affine layers with `x²` between them, none after the last.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        let d0 = self.layers[0].d_in();
        if features.len() != d0 {
            return Err(EngineError::Dimension { what: "feature length", expected: d0, got: features.len() });
        }
        let mut x = features.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                x = x.iter().map(|v| v * v).collect();
            }
            x = layer.affine(&x);
        }
        Ok(x)
    }

    pub fn decide(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(features)?))
    }

    /// Weights and biases flattened layer by layer, rows first, each layer's bias after its weights.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().flatten().chain(&l.bias).copied())
            .collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(spec: &HeadSpec, theta: &[f64]) -> Result<Self> {
        if theta.len() != spec.parameter_count() {
            return Err(EngineError::Dimension { what: "parameter count", expected: spec.parameter_count(), got: theta.len() });
        }
        let mut it = theta.iter().copied();
        let layers = spec
            .dims
            .windows(2)
            .map(|w| PlainLayer {
                weights: (0..w[1]).map(|_| it.by_ref().take(w[0]).collect()).collect(),
                bias: it.by_ref().take(w[1]).collect(),
            })
            .collect();
        Ok(PlainHead { schema: schema(), layers })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("head serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let head: PlainHead = serde_json::from_str(text).map_err(|e| EngineError::Format(e.to_string()))?;
        if head.schema != HEAD_SCHEMA {
            return Err(EngineError::Format(format!("unsupported head schema {:?}", head.schema)));
        }
        head.spec()?;
        Ok(head)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
