//! Primary DCT-II and the learned non-separable secondary transforms.

mod dct;
pub mod klt;
mod secondary;

use thiserror::Error;

pub use dct::{dct2_forward, dct2_inverse, dct_matrix};
pub use klt::{train_bank, BankSamples};
pub(crate) use secondary::hash_bytes;
pub use secondary::{
    gather_region, output_positions, scatter_region, KernelFamily, PairSpec, SecondaryMatrix, TransformBank,
    MATRICES_PER_SET, SECONDARY_OUTPUTS, SET_COUNT,
};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("transform group (family {family}, set {set}) has {have} samples, needs {need}")]
    InsufficientSamples {
        family: usize,
        set: u8,
        have: usize,
        need: usize,
    },
    #[error("bank file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
