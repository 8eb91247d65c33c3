use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty range")]
    EmptyRange,

    #[error("permutation length must be at least 1")]
    EmptyPermutation,

    #[error("not a permutation of 0..{0}")]
    NotAPermutation(usize),

    #[error("balanced flip vector requires even length, got {0}")]
    OddFlipLength(usize),

    #[error("flip vector is not balanced: {ones} ones out of {len}")]
    UnbalancedFlips { ones: usize, len: usize },

    #[error("flip vector entries must be 0 or 1")]
    NonBinaryFlip,

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("data length {len} does not match shape {shape:?}")]
    BadShape { shape: Vec<usize>, len: usize },

    #[error("image {width}x{height} is not divisible into {block}x{block} blocks")]
    NotDivisible {
        width: usize,
        height: usize,
        block: usize,
    },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("training diverged at epoch {0}")]
    Diverged(usize),
}
