//! Full-batch gradient descent and DP-SGD for square-activation heads.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rhe_engine::{argmax, HeadSpec, PlainHead};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};
use crate::prior::LabeledSet;

pub const DP_SCHEMA: &str = "rhe.dp-config/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub sigma_init: f64,
    pub head: HeadSpec,
    /// Per-class loss weights; the loss is `Σ w_y ℓ_i / N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<f64>>,
}

impl TrainConfig {
    /// One-shot linear-probe settings: `σ_init = 0.002`, `lr = 0.01`, weight decay `1e-5`, `26 + 3N/5` epochs.
    pub fn linear_probe(head: HeadSpec, n: usize) -> Self {
        TrainConfig { lr: 0.01, weight_decay: 1e-5, epochs: 26 + 3 * n / 5, sigma_init: 0.002, head, class_weights: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ShadowError::InvalidConfig(m.into()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.sigma_init >= 0.0 && self.weight_decay >= 0.0) {
            return bad("sigma_init and weight_decay must be non-negative");
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.classes() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return bad("class_weights needs one finite non-negative weight per class");
            }
        }
        Ok(())
    }

    /// Output width 1 is a binary head with labels {0, 1}.
    pub fn classes(&self) -> usize {
        self.head.output_dim().max(2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    #[serde(default = "dp_schema")]
    pub schema: String,
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    /// Recorded verbatim; never computed here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_label: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_label: Option<f64>,
}

fn dp_schema() -> String {
    DP_SCHEMA.into()
}

impl DpConfig {
    pub fn new(clip_norm: f64, noise_multiplier: f64, sampling_rate: f64) -> Self {
        DpConfig { schema: dp_schema(), clip_norm, noise_multiplier, sampling_rate, delta_label: None, epsilon_label: None }
    }

    /// `q = (N − 1)/N`, the largest rate with non-trivial subsampling, and `δ = N^{-1.1}`.
    pub fn largest_batch(clip_norm: f64, noise_multiplier: f64, n: usize) -> Self {
        let n_f = n as f64;
        DpConfig { delta_label: Some(n_f.powf(-1.1)), ..Self::new(clip_norm, noise_multiplier, (n_f - 1.0) / n_f) }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(ShadowError::InvalidConfig("clip_norm must be positive".into()));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(ShadowError::InvalidConfig("noise_multiplier must be non-negative".into()));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(ShadowError::InvalidConfig("sampling_rate must lie in (0, 1]".into()));
        }
        if self.sampling_rate * (n as f64) < 1.0 {
            return Err(ShadowError::InvalidConfig(format!("q·N = {} is below 1", self.sampling_rate * n as f64)));
        }
        Ok(())
    }

    pub fn expected_batch(&self, n: usize) -> f64 {
        self.sampling_rate * n as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DpStats {
    pub batch_sizes: Vec<usize>,
    pub skipped_steps: Vec<usize>,
    /// Largest per-example gradient norm after clipping, over all steps.
    pub max_clipped_norm: f64,
    pub clipped_examples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub head: PlainHead,
    /// Objective `mean loss + wd/2·‖θ‖²` before each epoch and after the last.
    pub losses: Vec<f64>,
    pub dp: Option<DpStats>,
}

/// Flat parameter view in `PlainHead::flatten` order.
struct Net<'a> {
    dims: &'a [usize],
    offsets: Vec<usize>,
}

impl<'a> Net<'a> {
    fn new(spec: &'a HeadSpec) -> Self {
        let offsets = spec
            .dims
            .windows(2)
            .scan(0, |off, w| {
                let start = *off;
                *off += w[1] * w[0] + w[1];
                Some(start)
            })
            .collect();
        Net { dims: &spec.dims, offsets }
    }

    fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Layer inputs and pre-activations.
    fn forward(&self, theta: &[f64], x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut inputs = Vec::with_capacity(self.layers());
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers());
        let mut a = x.to_vec();
        for i in 0..self.layers() {
            if i > 0 {
                a = pre[i - 1].iter().map(|z| z * z).collect();
            }
            let (d_in, d_out, off) = (self.dims[i], self.dims[i + 1], self.offsets[i]);
            let w = &theta[off..off + d_in * d_out];
            let b = &theta[off + d_in * d_out..off + d_in * d_out + d_out];
            let z = (0..d_out).map(|r| w[r * d_in..(r + 1) * d_in].iter().zip(&a).map(|(p, q)| p * q).sum::<f64>() + b[r]).collect();
            inputs.push(a.clone());
            pre.push(z);
        }
        (inputs, pre)
    }

    /// Loss of one example, writing its gradient into `grad`.
    fn loss_grad(&self, theta: &[f64], x: &[f64], y: usize, weight: f64, grad: &mut [f64]) -> f64 {
        let (inputs, pre) = self.forward(theta, x);
        let logits = pre.last().expect("at least one layer");
        let (loss, mut delta) = if logits.len() == 1 {
            let (z, t) = (logits[0], y as f64);
            let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
            let p = 1.0 / (1.0 + (-z).exp());
            (softplus - t * z, vec![p - t])
        } else {
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|z| (z - m).exp()).sum();
            let lse = m + sum.ln();
            let delta = logits
                .iter()
                .enumerate()
                .map(|(k, z)| (z - lse).exp() - f64::from(u8::from(k == y)))
                .collect();
            (lse - logits[y], delta)
        };
        delta.iter_mut().for_each(|d| *d *= weight);
        for i in (0..self.layers()).rev() {
            let (d_in, d_out, off) = (self.dims[i], self.dims[i + 1], self.offsets[i]);
            let a = &inputs[i];
            for r in 0..d_out {
                for (g, &av) in grad[off + r * d_in..off + (r + 1) * d_in].iter_mut().zip(a) {
                    *g = delta[r] * av;
                }
                grad[off + d_in * d_out + r] = delta[r];
            }
            if i > 0 {
                let w = &theta[off..off + d_in * d_out];
                delta = (0..d_in)
                    .map(|c| 2.0 * pre[i - 1][c] * (0..d_out).map(|r| w[r * d_in + c] * delta[r]).sum::<f64>())
                    .collect();
            }
        }
        weight * loss
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `g` by `C / max(C, ‖g‖)`, then shaves off rounding until the computed norm is at most `C`;
/// returns the norm before clipping.
pub fn clip_gradient(g: &mut [f64], clip_norm: f64) -> f64 {
    let norm = l2(g);
    if norm > clip_norm {
        let s = clip_norm / norm;
        g.iter_mut().for_each(|x| *x *= s);
        while l2(g) > clip_norm {
            g.iter_mut().for_each(|x| *x *= 1.0 - f64::EPSILON);
        }
    }
    norm
}

/// Indices kept by independent inclusion with probability `q`.
pub fn poisson_batch<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Vec<usize> {
    (0..n).filter(|_| rng.random::<f64>() < q).collect()
}

/// Adds `N(0, (σ_noise·C)²)` to every coordinate of a clipped-gradient sum.
pub fn add_dp_noise<R: Rng + ?Sized>(grad_sum: &mut [f64], dp: &DpConfig, rng: &mut R) {
    let sd = dp.noise_multiplier * dp.clip_norm;
    if sd > 0.0 {
        for g in grad_sum {
            *g += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Weights from `N(0, σ_init²)`, biases zero.
pub fn initial_theta(cfg: &TrainConfig, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, cfg.sigma_init).map_err(|e| ShadowError::InvalidConfig(e.to_string()))?;
    let mut rng = he_core::rng::stream(seed, &[0]);
    Ok(cfg
        .head
        .dims
        .windows(2)
        .flat_map(|w| {
            let weights: Vec<f64> = (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect();
            weights.into_iter().chain(std::iter::repeat_n(0.0, w[1]))
        })
        .collect())
}

fn check_set(set: &LabeledSet, cfg: &TrainConfig) -> Result<()> {
    if set.is_empty() {
        return Err(ShadowError::InvalidConfig("training set is empty".into()));
    }
    let d0 = cfg.head.input_dim();
    if set.features.iter().any(|x| x.len() != d0) {
        return Err(ShadowError::InvalidConfig(format!("features must have length {d0}")));
    }
    if let Some(&y) = set.labels.iter().find(|&&y| y >= cfg.classes()) {
        return Err(ShadowError::MissingClass { class: y, classes: cfg.classes() });
    }
    Ok(())
}

fn run(set: &LabeledSet, cfg: &TrainConfig, dp: Option<&DpConfig>, seed: u64) -> Result<Trained> {
    cfg.validate()?;
    check_set(set, cfg)?;
    let n = set.len();
    if let Some(dp) = dp {
        dp.validate(n)?;
    }
    let net = Net::new(&cfg.head);
    let mut theta = initial_theta(cfg, seed)?;
    let weight = |y: usize| cfg.class_weights.as_ref().map_or(1.0, |w| w[y]);
    let mut poisson_rng = he_core::rng::stream(seed, &[1]);
    let mut noise_rng = he_core::rng::stream(seed, &[2]);
    let mut stats = dp.map(|_| DpStats::default());
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let mut g = vec![0.0; theta.len()];
    let objective = |theta: &[f64], epoch: usize, g: &mut [f64]| -> Result<f64> {
        let data: f64 = (0..n).map(|i| net.loss_grad(theta, &set.features[i], set.labels[i], weight(set.labels[i]), g)).sum();
        let value = data / n as f64 + 0.5 * cfg.weight_decay * theta.iter().map(|t| t * t).sum::<f64>();
        if !value.is_finite() {
            return Err(ShadowError::Divergence { epoch });
        }
        Ok(value)
    };
    for epoch in 0..cfg.epochs {
        let mut sum = vec![0.0; theta.len()];
        let (batch, denom) = match dp {
            None => ((0..n).collect::<Vec<_>>(), n as f64),
            Some(dp) => (poisson_batch(n, dp.sampling_rate, &mut poisson_rng), dp.expected_batch(n)),
        };
        let mut data_loss = 0.0;
        for &i in &batch {
            let y = set.labels[i];
            data_loss += net.loss_grad(&theta, &set.features[i], y, weight(y), &mut g);
            if let (Some(dp), Some(stats)) = (dp, stats.as_mut()) {
                if clip_gradient(&mut g, dp.clip_norm) > dp.clip_norm {
                    stats.clipped_examples += 1;
                }
                stats.max_clipped_norm = stats.max_clipped_norm.max(l2(&g));
            }
            sum.iter_mut().zip(&g).for_each(|(s, gi)| *s += gi);
        }
        let value = if dp.is_none() {
            let v = data_loss / n as f64 + 0.5 * cfg.weight_decay * theta.iter().map(|t| t * t).sum::<f64>();
            if !v.is_finite() {
                return Err(ShadowError::Divergence { epoch });
            }
            v
        } else {
            objective(&theta, epoch, &mut g)?
        };
        losses.push(value);
        if let (Some(dp), Some(stats)) = (dp, stats.as_mut()) {
            stats.batch_sizes.push(batch.len());
            if batch.is_empty() {
                stats.skipped_steps.push(epoch);
                continue;
            }
            add_dp_noise(&mut sum, dp, &mut noise_rng);
        }
        let (lr, wd) = (cfg.lr, cfg.weight_decay);
        for (t, s) in theta.iter_mut().zip(&sum) {
            *t -= lr * (s / denom) + lr * wd * *t;
        }
    }
    losses.push(objective(&theta, cfg.epochs, &mut g)?);
    let head = PlainHead::unflatten(&cfg.head, &theta)?;
    Ok(Trained { head, losses, dp: stats })
}

/// Full-batch gradient descent on the weighted cross-entropy with weight decay.
pub fn train_head(set: &LabeledSet, cfg: &TrainConfig, seed: u64) -> Result<Trained> {
    run(set, cfg, None, seed)
}

/// One Poisson-sampled step per epoch: clip per-example gradients, sum, add noise, divide by `q·N`,
/// then apply the update and a decoupled weight-decay term. Empty batches skip the step.
pub fn train_head_dpsgd(set: &LabeledSet, cfg: &TrainConfig, dp: &DpConfig, seed: u64) -> Result<Trained> {
    run(set, cfg, Some(dp), seed)
}

/// Predicted label; a single output is thresholded at 0.
pub fn predict(head: &PlainHead, x: &[f64]) -> Result<usize> {
    let out = head.forward(x)?;
    Ok(if out.len() == 1 { usize::from(out[0] > 0.0) } else { argmax(&out) })
}

pub fn accuracy(head: &PlainHead, set: &LabeledSet) -> Result<f64> {
    let hits = set
        .features
        .iter()
        .zip(&set.labels)
        .map(|(x, &y)| predict(head, x).map(|p| usize::from(p == y)))
        .sum::<Result<usize>>()?;
    Ok(hits as f64 / set.len() as f64)
}
