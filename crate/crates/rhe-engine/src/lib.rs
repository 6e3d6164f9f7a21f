//! Encrypted-weight inference: a small fully connected head is encrypted once,
//! evaluated on plaintext features, and yields encrypted logits that only the
//! secret-key holder can read.

mod circuit;
mod error;
mod head;
mod layout;
mod plain;
mod trace;

pub use circuit::{
    counter_depth, decrypt_logits, forward, matvec_enc_enc, matvec_enc_plain, planned_counts, repack, replicate,
    square_activate, stacked_input, EncryptedLogits, ForwardOptions, Ops,
};
pub use error::{EngineError, Result};
pub use head::{bias_chunk, encrypt_head, weight_chunk, EncryptedHead, EncryptedLayer, HEAD_FORMAT_VERSION, HEAD_MAGIC};
pub use layout::{chunk_layout, pad_dim, ChunkLayout, HeadSpec, MAX_LAYERS};
pub use plain::{argmax, tree_sum, PlainHead, PlainLayer, HEAD_SCHEMA};
pub use trace::{OpCounts, OpKind, Role, Tracer};

use he_core::{BackendKind, HeContext, HeParams};

/// Runs the circuit for `spec` on the simulator with an all-zero head and returns
/// the recorded operation counts and consumed depth.
pub fn trace_circuit(spec: &HeadSpec, params: &HeParams) -> Result<(OpCounts, u32)> {
    let mut sim = params.clone().with_backend(BackendKind::Simulator);
    sim.depth_cap = None;
    let ctx = HeContext::new(sim)?;
    let keys = ctx.keygen(0);
    let head = encrypt_head(&PlainHead::zeros(spec), &ctx, &keys.public, 0)?;
    let ev = ctx.evaluator(&keys.public)?;
    let tracer = Tracer::new();
    let out = forward(&head, &ctx, ev, &vec![0.0; spec.input_dim()], ForwardOptions { parallel: false, tracer: Some(&tracer) })?;
    Ok((tracer.snapshot(), out.levels_consumed))
}
