//! Operation counting for the encrypted circuit.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::Serialize;

/// Primitive operation classes used by the cost model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum OpKind {
    PlainMul,
    PlainAdd,
    EncMul,
    EncAdd,
    Rotation,
    /// Key switches behind the logical rotations; a rotation by a non-keyed step costs several.
    KeySwitch,
}

impl OpKind {
    pub const PRIMITIVES: [OpKind; 5] = [OpKind::PlainMul, OpKind::PlainAdd, OpKind::EncMul, OpKind::EncAdd, OpKind::Rotation];
}

/// Circuit stage an operation belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Role {
    Matvec,
    RotateSum,
    Bias,
    Repack,
    Square,
    Replicate,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    counts: BTreeMap<(usize, Role, OpKind), u64>,
}

impl OpCounts {
    pub fn add(&mut self, layer: usize, role: Role, kind: OpKind, n: u64) {
        if n > 0 {
            *self.counts.entry((layer, role, kind)).or_default() += n;
        }
    }

    pub fn get(&self, layer: usize, role: Role, kind: OpKind) -> u64 {
        self.counts.get(&(layer, role, kind)).copied().unwrap_or(0)
    }

    pub fn layer_kind(&self, layer: usize, kind: OpKind) -> u64 {
        self.counts.iter().filter(|((l, _, k), _)| *l == layer && *k == kind).map(|(_, n)| n).sum()
    }

    pub fn kind(&self, kind: OpKind) -> u64 {
        self.counts.iter().filter(|((_, _, k), _)| *k == kind).map(|(_, n)| n).sum()
    }

    pub fn layers(&self) -> usize {
        self.counts.keys().map(|(l, _, _)| l + 1).max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, Role, OpKind), u64)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }
}

/// Thread-safe recorder shared by concurrently evaluated chunks.
#[derive(Debug, Default)]
pub struct Tracer {
    counts: Mutex<OpCounts>,
}

impl Tracer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, layer: usize, role: Role, kind: OpKind, n: u64) {
        self.counts.lock().expect("tracer lock").add(layer, role, kind, n);
    }

    pub fn snapshot(&self) -> OpCounts {
        self.counts.lock().expect("tracer lock").clone()
    }
}
