//! Slot-vector homomorphic encryption with two interchangeable backends.
//!
//! The simulator carries exact values with level and scale bookkeeping and no
//! secrecy; it is the reference for circuit semantics. The CKKS backend is a
//! real leveled RNS implementation with the same interface.

pub mod ckks;
mod context;
mod error;
mod keys;
mod params;
pub mod rng;
mod serial;
mod slots;

pub use context::{Evaluator, HeContext, SCALE_TOLERANCE};
pub use error::{HeError, Result};
pub use keys::{plan_rotation, KeySet, PublicKeys, RotationKeys, SecretKey};
pub use params::{security_bound, BackendKind, HeParams, PARAMS_SCHEMA, SECURITY_TABLE_128};
pub use serial::{Reader, Writer, CIPHER_MAGIC, PUBLIC_MAGIC, SECRET_MAGIC};
pub use slots::{PreparedPlain, SlotCipher, SlotPlain};
