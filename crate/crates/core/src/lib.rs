//! Compression-distance clustering of text corpora.
//!
//! The crate measures how much a corpus' class structure rests on word
//! order versus keyword content: documents are masked and shuffled
//! ([`distortion`]), compared with the normalized compression distance
//! ([`ncd`]) under a context-order-parameterised PPM compressor ([`codec`]),
//! clustered into unrooted binary trees ([`dendro`]) and scored
//! ([`metrics`]). Grammar-generated control corpora ([`grammar`]) and 2-D
//! projections ([`projection`]) support the controlled experiments in
//! [`pipeline`].

pub mod codec;
pub mod dendro;
pub mod distortion;
pub mod error;
pub mod grammar;
pub mod metrics;
pub mod ncd;
pub mod pipeline;
pub mod projection;

pub use codec::{compressed_size, CodeLength, CodecSpec};
pub use error::{Error, Result};
pub use ncd::{ncd, ncd_matrix, DistanceMatrix, Document};
