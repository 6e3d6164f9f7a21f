//! Encrypted head: per-layer weight and bias chunk ciphertexts and the `RHE1` container.

use he_core::rng::stream;
use he_core::{HeContext, HeParams, PublicKeys, Reader, SlotCipher, SlotPlain, Writer};

use crate::error::{EngineError, Result};
use crate::layout::{ChunkLayout, HeadSpec};
use crate::plain::{PlainHead, PlainLayer};

pub const HEAD_MAGIC: &[u8; 4] = b"RHE1";
pub const HEAD_FORMAT_VERSION: u16 = 1;

const STREAM_WEIGHT: u64 = 0;
const STREAM_BIAS: u64 = 1;

#[derive(Clone, Debug)]
pub struct EncryptedLayer {
    pub layout: ChunkLayout,
    pub weights: Vec<SlotCipher>,
    pub biases: Vec<SlotCipher>,
}

#[derive(Clone, Debug)]
pub struct EncryptedHead {
    pub spec: HeadSpec,
    pub layers: Vec<EncryptedLayer>,
}

/// Chunk `c` of a layer: rows laid out row-major, each padded to `k_hat` slots.
pub fn weight_chunk(layer: &PlainLayer, layout: &ChunkLayout, c: usize) -> Vec<f64> {
    let mut slots = vec![0.0; layout.k_hat * layout.rows_in_chunk(c)];
    for j in 0..layout.rows_in_chunk(c) {
        let row = &layer.weights[layout.global_row(c, j)];
        slots[j * layout.k_hat..j * layout.k_hat + row.len()].copy_from_slice(row);
    }
    slots
}

/// Biases of chunk `c`, row `j` at slot `j·k_hat` where the matvec leaves its result.
pub fn bias_chunk(layer: &PlainLayer, layout: &ChunkLayout, c: usize) -> Vec<f64> {
    let rows = layout.rows_in_chunk(c);
    let mut slots = vec![0.0; layout.k_hat * (rows - 1) + 1];
    for j in 0..rows {
        slots[j * layout.k_hat] = layer.bias[layout.global_row(c, j)];
    }
    slots
}

fn encrypt_values(ctx: &HeContext, values: Vec<f64>, keys: &PublicKeys, seed: u64, path: &[u64]) -> Result<SlotCipher> {
    let pt = SlotPlain { values, scale: ctx.params().scale() };
    Ok(ctx.encrypt(&pt, keys, &mut stream(seed, path))?)
}

/// Encrypts every layer; each ciphertext draws from its own stream derived from `seed`.
pub fn encrypt_head(head: &PlainHead, ctx: &HeContext, keys: &PublicKeys, seed: u64) -> Result<EncryptedHead> {
    let spec = head.spec()?;
    let layouts = spec.layouts(ctx.slot_count())?;
    let layers = head
        .layers
        .iter()
        .zip(layouts)
        .enumerate()
        .map(|(l, (layer, layout))| {
            let weights = (0..layout.n_c)
                .map(|c| encrypt_values(ctx, weight_chunk(layer, &layout, c), keys, seed, &[l as u64, c as u64, STREAM_WEIGHT]))
                .collect::<Result<Vec<_>>>()?;
            let biases = (0..layout.n_c)
                .map(|c| encrypt_values(ctx, bias_chunk(layer, &layout, c), keys, seed, &[l as u64, c as u64, STREAM_BIAS]))
                .collect::<Result<Vec<_>>>()?;
            Ok(EncryptedLayer { layout, weights, biases })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncryptedHead { spec, layers })
}

impl EncryptedHead {
    pub fn to_bytes(&self, ctx: &HeContext) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(HEAD_MAGIC);
        w.u16(HEAD_FORMAT_VERSION);
        w.framed(ctx.params().to_json().as_bytes());
        w.u8(self.layers.len() as u8);
        for layer in &self.layers {
            let l = &layer.layout;
            for v in [l.d_in, l.d_out, l.k_hat, l.rows_per_chunk, l.n_c] {
                w.u32(v as u32);
            }
            for ct in layer.weights.iter().chain(&layer.biases) {
                w.bytes(&ctx.serialize_ciphertext(ct));
            }
        }
        w.finish()
    }

    /// Parameters embedded in a container, needed to build the context that reads it.
    pub fn read_params(bytes: &[u8]) -> Result<HeParams> {
        let mut r = Reader::new(bytes);
        read_header(&mut r)
    }

    pub fn from_bytes(ctx: &HeContext, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let params = read_header(&mut r)?;
        if &params != ctx.params() {
            return Err(EngineError::He(he_core::HeError::ParamsMismatch));
        }
        let count = r.u8()? as usize;
        let mut layers = Vec::with_capacity(count);
        let mut dims = Vec::with_capacity(count + 1);
        for l in 0..count {
            let mut field = || -> Result<usize> { Ok(r.u32()? as usize) };
            let (d_in, d_out, k_hat, rows_per_chunk, n_c) = (field()?, field()?, field()?, field()?, field()?);
            let layout = crate::layout::chunk_layout(d_out, d_in, ctx.slot_count())?;
            if layout != (ChunkLayout { d_in, d_out, k_hat, rows_per_chunk, n_c }) {
                return Err(EngineError::Format(format!("layer {l} layout fields are inconsistent")));
            }
            if l == 0 {
                dims.push(d_in);
            } else if dims[l] != d_in {
                return Err(EngineError::Format(format!("layer {l} input does not match the previous output")));
            }
            dims.push(d_out);
            let weights = (0..n_c).map(|_| ctx.read_ciphertext(&mut r)).collect::<he_core::Result<Vec<_>>>()?;
            let biases = (0..n_c).map(|_| ctx.read_ciphertext(&mut r)).collect::<he_core::Result<Vec<_>>>()?;
            layers.push(EncryptedLayer { layout, weights, biases });
        }
        r.finish()?;
        let spec = HeadSpec::new(dims)?;
        spec.validate(ctx.slot_count())?;
        Ok(EncryptedHead { spec, layers })
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<HeParams> {
    r.magic(HEAD_MAGIC)?;
    let version = r.u16()?;
    if version != HEAD_FORMAT_VERSION {
        return Err(EngineError::Format(format!("unsupported format version {version}")));
    }
    let json = std::str::from_utf8(r.framed()?).map_err(|e| EngineError::Format(e.to_string()))?;
    Ok(HeParams::from_json(json)?)
}
