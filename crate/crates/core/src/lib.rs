//! Downlink resource allocation for a three-cell OFDMA network, comparing
//! per-subcarrier dual decomposition, interference alignment over subcarrier
//! pairs, a hybrid of the two, and orthogonal frequency partitioning.

pub mod alloc;
pub mod channel;
pub mod error;
pub mod harness;
pub mod ia;
pub mod linalg;
pub mod rng;
pub mod schemes;

pub use error::{Error, Result};
