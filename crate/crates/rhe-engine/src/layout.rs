//! Head shapes and the chunked row-major slot layout.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// Largest supported number of fully connected layers.
pub const MAX_LAYERS: usize = 3;

/// Smallest power of two `≥ d`.
pub fn pad_dim(d: usize) -> usize {
    d.max(1).next_power_of_two()
}

/// Layer widths `d_0, ..., d_L`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub dims: Vec<usize>,
}

impl HeadSpec {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        let spec = HeadSpec { dims };
        spec.check_shape()?;
        Ok(spec)
    }

    /// Parses `"2048,128,16"`.
    pub fn parse(text: &str) -> Result<Self> {
        let dims = text
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| EngineError::InvalidHead(format!("bad dimension {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims)
    }

    fn check_shape(&self) -> Result<()> {
        let layers = self.dims.len().saturating_sub(1);
        if !(1..=MAX_LAYERS).contains(&layers) {
            return Err(EngineError::InvalidHead(format!("{layers} layers; between 1 and {MAX_LAYERS} are supported")));
        }
        if self.dims.contains(&0) {
            return Err(EngineError::InvalidHead("every dimension must be at least 1".into()));
        }
        Ok(())
    }

    /// Shape rules plus the slot-capacity limit on every layer input.
    pub fn validate(&self, slots: usize) -> Result<()> {
        self.check_shape()?;
        for (layer, &d) in self.dims[..self.layers()].iter().enumerate() {
            let padded = pad_dim(d);
            if padded > slots {
                return Err(EngineError::Capacity { layer, padded, capacity: slots });
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.layers()]
    }

    pub fn max_input_dim(&self) -> usize {
        self.dims[..self.layers()].iter().copied().max().unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn layouts(&self, slots: usize) -> Result<Vec<ChunkLayout>> {
        self.validate(slots)?;
        self.dims.windows(2).map(|w| chunk_layout(w[1], w[0], slots)).collect()
    }
}

/// How one layer's rows are spread over ciphertext chunks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkLayout {
    pub d_in: usize,
    pub d_out: usize,
    pub k_hat: usize,
    pub rows_per_chunk: usize,
    pub n_c: usize,
}

/// Layout for a `rows × in_dim` layer at `slots = N_D / 2`.
pub fn chunk_layout(rows: usize, in_dim: usize, slots: usize) -> Result<ChunkLayout> {
    if rows == 0 || in_dim == 0 {
        return Err(EngineError::InvalidHead("layer dimensions must be at least 1".into()));
    }
    let k_hat = pad_dim(in_dim);
    if k_hat > slots {
        return Err(EngineError::Capacity { layer: 0, padded: k_hat, capacity: slots });
    }
    let rows_per_chunk = slots / k_hat;
    Ok(ChunkLayout { d_in: in_dim, d_out: rows, k_hat, rows_per_chunk, n_c: rows.div_ceil(rows_per_chunk) })
}

impl ChunkLayout {
    pub fn log_k_hat(&self) -> u32 {
        self.k_hat.trailing_zeros()
    }

    /// Rows held by chunk `c`; the last chunk may be partial.
    pub fn rows_in_chunk(&self, c: usize) -> usize {
        self.rows_per_chunk.min(self.d_out - c * self.rows_per_chunk)
    }

    /// Global row index of local row `j` in chunk `c`.
    pub fn global_row(&self, c: usize, j: usize) -> usize {
        c * self.rows_per_chunk + j
    }

    /// (chunk, slot) holding the result of global row `r`.
    pub fn result_position(&self, r: usize) -> (usize, usize) {
        (r / self.rows_per_chunk, (r % self.rows_per_chunk) * self.k_hat)
    }

    /// Input replicas a stacked input needs: enough blocks for the fullest chunk, rounded to a power of two.
    pub fn copies(&self) -> usize {
        pad_dim(self.rows_per_chunk.min(self.d_out))
    }
}
