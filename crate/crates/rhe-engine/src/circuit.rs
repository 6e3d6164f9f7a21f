//! The encrypted forward pass: chunked matrix-vector products, repacking,
//! square activations and input replication.

use he_core::{Evaluator, HeContext, KeySet, PreparedPlain, SlotCipher, SlotPlain};
use rayon::prelude::*;

use crate::error::{at_layer, EngineError, Result};
use crate::head::{EncryptedHead, EncryptedLayer};
use crate::layout::ChunkLayout;
use crate::plain::argmax;
use crate::trace::{OpKind, Role, Tracer};

/// Evaluator wrapper that attributes every primitive to a layer and role.
#[derive(Clone, Copy)]
pub struct Ops<'a> {
    ev: Evaluator<'a>,
    tracer: Option<&'a Tracer>,
    layer: usize,
}

impl<'a> Ops<'a> {
    pub fn new(ev: Evaluator<'a>, tracer: Option<&'a Tracer>, layer: usize) -> Self {
        Ops { ev, tracer, layer }
    }

    pub fn evaluator(&self) -> Evaluator<'a> {
        self.ev
    }

    fn note(&self, role: Role, kind: OpKind, n: u64) {
        if let Some(t) = self.tracer {
            t.record(self.layer, role, kind, n);
        }
    }

    fn wrap<T>(&self, r: he_core::Result<T>) -> Result<T> {
        r.map_err(at_layer(self.layer))
    }

    fn add(&self, role: Role, a: &SlotCipher, b: &SlotCipher) -> Result<SlotCipher> {
        self.note(role, OpKind::EncAdd, 1);
        self.wrap(self.ev.add(a, b))
    }

    fn mul(&self, role: Role, a: &SlotCipher, b: &SlotCipher) -> Result<SlotCipher> {
        self.note(role, OpKind::EncMul, 1);
        self.wrap(self.ev.mul(a, b))
    }

    fn mul_plain(&self, role: Role, a: &SlotCipher, p: &PreparedPlain) -> Result<SlotCipher> {
        self.note(role, OpKind::PlainMul, 1);
        self.wrap(self.ev.mul_prepared(a, p))
    }

    fn rotate(&self, role: Role, a: &SlotCipher, steps: i64) -> Result<SlotCipher> {
        let switches = self.wrap(self.ev.rotation_cost(steps))?;
        if switches == 0 {
            return Ok(a.clone());
        }
        self.note(role, OpKind::Rotation, 1);
        self.note(role, OpKind::KeySwitch, switches as u64);
        self.wrap(self.ev.rotate(a, steps))
    }

    /// `res ← res + rotate(res, 2^j)` for `j < log2(k_hat)`: slot `j·k_hat` ends up holding its row's sum.
    pub fn rotate_sum(&self, ct: SlotCipher, k_hat: usize) -> Result<SlotCipher> {
        let mut res = ct;
        for j in 0..k_hat.trailing_zeros() {
            let rotated = self.rotate(Role::RotateSum, &res, 1i64 << j)?;
            res = self.add(Role::RotateSum, &res, &rotated)?;
        }
        Ok(res)
    }
}

/// Options for one forward evaluation.
#[derive(Clone, Copy, Default)]
pub struct ForwardOptions<'a> {
    /// Evaluate the chunks of a layer on the rayon pool.
    pub parallel: bool,
    pub tracer: Option<&'a Tracer>,
}

fn map_chunks<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Stacked plaintext input: `v` zero-padded to `k_hat`, repeated `rows_per_chunk` times.
pub fn stacked_input(v: &[f64], layout: &ChunkLayout, slots: usize) -> Vec<f64> {
    let mut out = vec![0.0; slots];
    for block in out.chunks_mut(layout.k_hat).take(layout.rows_per_chunk) {
        block[..v.len()].copy_from_slice(v);
    }
    out
}

/// First-layer product with a plaintext input; one plaintext product per chunk, then the rotation tree and bias.
pub fn matvec_enc_plain(
    ops: Ops<'_>,
    ctx: &HeContext,
    layer: &EncryptedLayer,
    v: &[f64],
    parallel: bool,
) -> Result<Vec<SlotCipher>> {
    let layout = &layer.layout;
    if v.len() != layout.d_in {
        return Err(EngineError::Dimension { what: "input length", expected: layout.d_in, got: v.len() });
    }
    let level = layer.weights.first().map_or(0, SlotCipher::level);
    let stacked = SlotPlain { values: stacked_input(v, layout, ctx.slot_count()), scale: ctx.params().scale() };
    let prepared = ops.wrap(ops.ev.prepare(&stacked, level))?;
    map_chunks(layout.n_c, parallel, |c| {
        let prod = ops.mul_plain(Role::Matvec, &layer.weights[c], &prepared)?;
        let summed = ops.rotate_sum(prod, layout.k_hat)?;
        ops.add(Role::Bias, &summed, &layer.biases[c])
    })
}

/// Checks, on the simulator only, that `ct` holds `copies` identical blocks of width `k_hat`.
fn check_replicated(ct: &SlotCipher, layout: &ChunkLayout) -> Result<()> {
    if let Some(values) = ct.simulator_values() {
        let first = &values[..layout.k_hat];
        for (b, block) in values.chunks(layout.k_hat).take(layout.copies()).enumerate() {
            if block != first {
                return Err(EngineError::Layout(format!("input block {b} differs from block 0")));
            }
        }
    }
    Ok(())
}

/// Encrypted-matrix, encrypted-vector product; `input` must be in replicated layout.
pub fn matvec_enc_enc(ops: Ops<'_>, layer: &EncryptedLayer, input: &SlotCipher, parallel: bool) -> Result<Vec<SlotCipher>> {
    let layout = &layer.layout;
    if cfg!(debug_assertions) {
        check_replicated(input, layout)?;
    }
    map_chunks(layout.n_c, parallel, |c| {
        let prod = ops.mul(Role::Matvec, &layer.weights[c], input)?;
        let summed = ops.rotate_sum(prod, layout.k_hat)?;
        ops.add(Role::Bias, &summed, &layer.biases[c])
    })
}

/// Fills `copies` consecutive blocks of width `block_width` with the first block, by rotation doubling.
/// Slots beyond the first block must be zero.
pub fn replicate(ops: Ops<'_>, ct: &SlotCipher, block_width: usize, copies: usize) -> Result<SlotCipher> {
    let slots = ct.slot_count();
    if !copies.is_power_of_two() || copies * block_width > slots {
        return Err(EngineError::Layout(format!(
            "cannot place {copies} copies of width {block_width} in {slots} slots"
        )));
    }
    let mut res = ct.clone();
    for j in 0..copies.trailing_zeros() {
        let shift = (block_width << j) as i64;
        let rotated = ops.rotate(Role::Replicate, &res, -shift)?;
        res = ops.add(Role::Replicate, &res, &rotated)?;
    }
    Ok(res)
}

pub fn square_activate(ops: Ops<'_>, ct: &SlotCipher) -> Result<SlotCipher> {
    ops.mul(Role::Square, ct, ct)
}

/// Gathers the strided row results of `chunks` into slots `0..rows`, zeroing everything else.
/// Each row is isolated by a one-hot plaintext mask and rotated to its global offset.
pub fn repack(ops: Ops<'_>, ctx: &HeContext, chunks: &[SlotCipher], layout: &ChunkLayout) -> Result<SlotCipher> {
    if chunks.len() != layout.n_c {
        return Err(EngineError::Layout(format!("expected {} chunks, got {}", layout.n_c, chunks.len())));
    }
    let level = chunks[0].level();
    let slots = ctx.slot_count();
    let scale = ctx.params().scale();
    let masks = (0..layout.rows_per_chunk.min(layout.d_out))
        .map(|j| {
            let mut mask = vec![0.0; j * layout.k_hat + 1];
            mask[j * layout.k_hat] = 1.0;
            ops.wrap(ops.ev.prepare(&SlotPlain { values: mask, scale }, level))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc: Option<SlotCipher> = None;
    for (c, chunk) in chunks.iter().enumerate() {
        for (j, mask) in masks.iter().enumerate().take(layout.rows_in_chunk(c)) {
            let source = j * layout.k_hat;
            let target = layout.global_row(c, j);
            let isolated = ops.mul_plain(Role::Repack, chunk, mask)?;
            let offset = (source as i64 - target as i64).rem_euclid(slots as i64);
            let moved = ops.rotate(Role::Repack, &isolated, offset)?;
            acc = Some(match acc {
                None => moved,
                Some(a) => ops.add(Role::Repack, &a, &moved)?,
            });
        }
    }
    Ok(acc.expect("at least one row"))
}

/// Encrypted logits left in the final layer's strided layout.
#[derive(Clone, Debug)]
pub struct EncryptedLogits {
    pub layout: ChunkLayout,
    pub chunks: Vec<SlotCipher>,
    /// Levels consumed from fresh weights to the output.
    pub levels_consumed: u32,
}

/// Runs the head on plaintext features. Layer 0: plaintext-input product and bias.
/// Later layers: repack the previous outputs, square, replicate, encrypted product and bias.
pub fn forward(
    head: &EncryptedHead,
    ctx: &HeContext,
    ev: Evaluator<'_>,
    features: &[f64],
    opts: ForwardOptions<'_>,
) -> Result<EncryptedLogits> {
    let top = ctx.depth();
    let first = &head.layers[0];
    let mut outputs = matvec_enc_plain(Ops::new(ev, opts.tracer, 0), ctx, first, features, opts.parallel)?;
    for (i, layer) in head.layers.iter().enumerate().skip(1) {
        let ops = Ops::new(ev, opts.tracer, i);
        let prev = &head.layers[i - 1].layout;
        let packed = repack(ops, ctx, &outputs, prev)?;
        let activated = square_activate(ops, &packed)?;
        let stacked = replicate(ops, &activated, layer.layout.k_hat, layer.layout.copies())?;
        outputs = matvec_enc_enc(ops, layer, &stacked, opts.parallel)?;
    }
    let layout = head.layers.last().expect("non-empty head").layout;
    let levels_consumed = top - outputs[0].level();
    Ok(EncryptedLogits { layout, chunks: outputs, levels_consumed })
}

/// Trusted-side decryption: reads each row's strided slot and takes the argmax.
pub fn decrypt_logits(logits: &EncryptedLogits, ctx: &HeContext, keys: &KeySet) -> Result<(Vec<f64>, usize)> {
    let layout = &logits.layout;
    let decrypted = logits
        .chunks
        .iter()
        .map(|ct| ctx.decrypt(ct, keys).map(|p| p.values))
        .collect::<he_core::Result<Vec<_>>>()?;
    let values: Vec<f64> = (0..layout.d_out)
        .map(|r| {
            let (c, slot) = layout.result_position(r);
            decrypted[c][slot]
        })
        .collect();
    let class = argmax(&values);
    Ok((values, class))
}

/// Multiplicative depth of the circuit for `layers` layers: one product in the first
/// layer, then a mask, a square and a product for each later layer.
pub fn counter_depth(layers: usize) -> u32 {
    (3 * layers - 2) as u32
}

/// Operation counts the circuit performs for `spec`, derived from the layout alone.
/// Rotations by a multiple of the slot count are free and not counted.
pub fn planned_counts(spec: &crate::layout::HeadSpec, slots: usize) -> Result<crate::trace::OpCounts> {
    use he_core::{plan_rotation, RotationKeys};
    let keyed = RotationKeys::PowersOfTwo.normalized(slots);
    let switches = |step: i64| plan_rotation(step, slots, &keyed).map(|p| p.len() as u64);
    let layouts = spec.layouts(slots)?;
    let mut counts = crate::trace::OpCounts::default();
    for (i, layout) in layouts.iter().enumerate() {
        let n_c = layout.n_c as u64;
        let log_k = layout.log_k_hat() as u64;
        if i == 0 {
            counts.add(i, Role::Matvec, OpKind::PlainMul, n_c);
        } else {
            let prev = &layouts[i - 1];
            let mut rows = 0u64;
            for c in 0..prev.n_c {
                for j in 0..prev.rows_in_chunk(c) {
                    let offset = (j * prev.k_hat) as i64 - prev.global_row(c, j) as i64;
                    let ks = switches(offset)?;
                    if ks > 0 {
                        counts.add(i, Role::Repack, OpKind::Rotation, 1);
                        counts.add(i, Role::Repack, OpKind::KeySwitch, ks);
                    }
                    rows += 1;
                }
            }
            counts.add(i, Role::Repack, OpKind::PlainMul, rows);
            counts.add(i, Role::Repack, OpKind::EncAdd, rows - 1);
            counts.add(i, Role::Square, OpKind::EncMul, 1);
            for j in 0..layout.copies().trailing_zeros() {
                counts.add(i, Role::Replicate, OpKind::Rotation, 1);
                counts.add(i, Role::Replicate, OpKind::KeySwitch, switches(-((layout.k_hat << j) as i64))?);
                counts.add(i, Role::Replicate, OpKind::EncAdd, 1);
            }
            counts.add(i, Role::Matvec, OpKind::EncMul, n_c);
        }
        counts.add(i, Role::RotateSum, OpKind::Rotation, n_c * log_k);
        counts.add(i, Role::RotateSum, OpKind::KeySwitch, n_c * log_k);
        counts.add(i, Role::RotateSum, OpKind::EncAdd, n_c * log_k);
        counts.add(i, Role::Bias, OpKind::EncAdd, n_c);
    }
    Ok(counts)
}
