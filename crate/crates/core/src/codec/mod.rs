//! Quadtree block codec with RD mode decision, LFNST-style secondary
//! transforms and scheme-dependent pair signaling.

mod block;
mod decoder;
mod encoder;
mod header;

use thiserror::Error;

use crate::classic::REDUCED_MODES;
use crate::entropy::BitstreamError;
use crate::plane::ImageError;
use crate::signaling::SignalingScheme;

pub use block::{reconstruct, write_block_syntax, BlockCoder, BlockDecision, BlockResult, PairSelection, PredMode};
pub use decoder::decode_image;
pub use encoder::{encode_image, EncodeOutput, EncodeStats};
pub use header::{StreamHeader, HEADER_BYTES, STREAM_MAGIC, STREAM_VERSION};

pub const CTU_SIZE: usize = 64;
pub const MIN_BLOCK: usize = 4;

/// Lagrangian multiplier for SSE + lambda * bits.
pub fn lambda(qp: u8) -> f64 {
    0.57 * 2f64.powf((qp as f64 - 12.0) / 3.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodecConfig {
    pub qp: u8,
    pub scheme: SignalingScheme,
    /// Classic modes searched by the encoder.
    pub classic_modes: Vec<u8>,
    /// Offer the NN mode (requires models).
    pub nn_enabled: bool,
    /// Offer one extra horizontal or vertical halving of quadtree leaves.
    pub rect_partitions: bool,
    /// How NN-mode blocks pick pairs during the search.
    pub pair_selection: PairSelection,
}

impl CodecConfig {
    pub fn new(qp: u8, scheme: SignalingScheme) -> Self {
        Self {
            qp,
            scheme,
            classic_modes: REDUCED_MODES.to_vec(),
            nn_enabled: true,
            rect_partitions: false,
            pair_selection: PairSelection::Signaled,
        }
    }

    pub fn with_full_search(mut self) -> Self {
        self.classic_modes = (0..crate::classic::MODE_COUNT).collect();
        self
    }

    pub fn lambda(&self) -> f64 {
        lambda(self.qp)
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Bitstream(#[from] BitstreamError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("stream header: {0}")]
    Header(String),
    #[error("{what} hash mismatch: stream {stream:016x}, provided {provided:016x}")]
    HashMismatch {
        what: &'static str,
        stream: u64,
        provided: u64,
    },
    #[error("stream requires neural models but none were provided")]
    MissingModels,
    #[error("picture dimensions {width}x{height} must be positive multiples of 4 below 65536")]
    Dimensions { width: usize, height: usize },
    #[error("configuration: {0}")]
    Config(&'static str),
}
