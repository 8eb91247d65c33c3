//! Keyed block-wise image encryption and the matching transformation of a
//! Vision Transformer's patch and position embeddings.
//!
//! A model transformed with a key set behaves on images encrypted with the
//! same key set exactly as the untouched model behaves on plain images. The
//! crate is `no_std` and only needs `alloc`; file formats, the command line
//! front-end and anything touching the filesystem live in the `blockvit`
//! crate.
//!
//! Module map:
//!
//! - [`keyrand`]: SplitMix64, Fisher-Yates permutations and balanced flip
//!   vectors derived from a [`KeySet`].
//! - [`tensor`]: the dense `f32` array and the network primitives.
//! - [`image`]: the in-memory image, normalization and resizing.
//! - [`blockcrypt`]: segmentation, block permutation, pixel shuffling, bit
//!   flipping and their inverses.
//! - [`vit`]: the ViT forward pass and parameter container.
//! - [`modelcrypt`]: key-based transformation of the embeddings.
//! - [`train`]: backpropagation and the SGD trainer.
//! - [`eval`]: datasets, accuracy, attacks and equivalence checks.
//! - [`keyspace`]: exact key-space sizes.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod blockcrypt;
mod error;
pub mod eval;
pub mod image;
pub mod keyrand;
pub mod keyspace;
pub mod modelcrypt;
pub mod tensor;
pub mod train;
pub mod vit;

pub use error::{Error, Result};
pub use image::Image;
pub use keyrand::{FlipVector, KeySchedule, KeySet, PermutationVector};
pub use tensor::Tensor;
pub use vit::{VitConfig, VitModel};
