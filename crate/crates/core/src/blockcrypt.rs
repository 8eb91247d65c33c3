//! Block-wise image encryption: segmentation, block permutation, pixel
//! shuffling, bit flipping and block integration, plus the exact inverse.
//!
//! Blocks are indexed `i = w + h·W_b` and the pixels inside a block are
//! flattened as `k = c·M² + row·M + col`. Both conventions are shared with
//! [`crate::vit::flatten_patches`], which is what lets the model side
//! compensate the image side.

use alloc::vec::Vec;

use crate::image::{complement, Image};
use crate::keyrand::{gen_flipvector, gen_permutation, FlipVector, KeySchedule, KeySet, PermutationVector};
use crate::{Error, Result};

/// An image re-laid-out as `W_b × H_b` flattened blocks of `p_b = M²C` values.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockImage {
    blocks_w: usize,
    blocks_h: usize,
    block_size: usize,
    channels: usize,
    /// Blocks in `w + h·W_b` order, each `p_b` values.
    data: Vec<f32>,
}

impl BlockImage {
    /// Blocks across the width (`W_b`).
    pub fn blocks_w(&self) -> usize {
        self.blocks_w
    }

    /// Blocks across the height (`H_b`).
    pub fn blocks_h(&self) -> usize {
        self.blocks_h
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks_w * self.blocks_h
    }

    /// Values per block (`p_b`).
    pub fn block_len(&self) -> usize {
        self.block_size * self.block_size * self.channels
    }

    /// Block at linear index `i = w + h·W_b`.
    pub fn block(&self, i: usize) -> &[f32] {
        let n = self.block_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn block_at(&self, w: usize, h: usize) -> &[f32] {
        self.block(w + h * self.blocks_w)
    }

    pub fn get(&self, w: usize, h: usize, k: usize) -> f32 {
        self.block_at(w, h)[k]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn blocks(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.block_len())
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f32]> {
        let n = self.block_len();
        self.data.chunks_exact_mut(n)
    }

    fn check_len(&self, what: &'static str, got: usize, expected: usize) -> Result<()> {
        if got != expected {
            return Err(Error::LengthMismatch {
                what,
                expected,
                got,
            });
        }
        Ok(())
    }
}

fn check_divisible(width: usize, height: usize, block: usize) -> Result<()> {
    if block == 0 || !width.is_multiple_of(block) || !height.is_multiple_of(block) {
        return Err(Error::NotDivisible {
            width,
            height,
            block,
        });
    }
    Ok(())
}

/// Splits `img` into `M×M×C` blocks.
pub fn segment(img: &Image, block_size: usize) -> Result<BlockImage> {
    let (width, height, channels) = (img.width(), img.height(), img.channels());
    check_divisible(width, height, block_size)?;
    let m = block_size;
    let (bw, bh) = (width / m, height / m);
    let mut data = Vec::with_capacity(width * height * channels);
    for h in 0..bh {
        for w in 0..bw {
            for c in 0..channels {
                for row in 0..m {
                    for col in 0..m {
                        data.push(img.get(c, h * m + row, w * m + col));
                    }
                }
            }
        }
    }
    Ok(BlockImage {
        blocks_w: bw,
        blocks_h: bh,
        block_size: m,
        channels,
        data,
    })
}

/// Reassembles blocks into a `C×H×W` image; the exact inverse of [`segment`].
pub fn integrate(bimg: &BlockImage, block_size: usize) -> Result<Image> {
    if block_size != bimg.block_size {
        return Err(Error::InvalidDimensions(alloc::format!(
            "block image has block size {}, asked to integrate with {}",
            bimg.block_size,
            block_size
        )));
    }
    let m = block_size;
    let (width, height, channels) = (bimg.blocks_w * m, bimg.blocks_h * m, bimg.channels);
    let mut img = Image::filled(width, height, channels, 0.0)?;
    for (i, block) in bimg.blocks().enumerate() {
        let (w, h) = (i % bimg.blocks_w, i / bimg.blocks_w);
        for c in 0..channels {
            for row in 0..m {
                for col in 0..m {
                    img.set(c, h * m + row, w * m + col, block[c * m * m + row * m + col]);
                }
            }
        }
    }
    Ok(img)
}

/// Block permutation with an explicit vector: `y'[i] = y[v[i]]`.
pub fn permute_blocks_with(bimg: &BlockImage, perm: &PermutationVector) -> Result<BlockImage> {
    bimg.check_len("block permutation", perm.len(), bimg.num_blocks())?;
    let n = bimg.block_len();
    let mut data = Vec::with_capacity(bimg.data.len());
    for &src in perm.as_slice() {
        data.extend_from_slice(&bimg.data[src * n..(src + 1) * n]);
    }
    Ok(BlockImage { data, ..bimg.clone_shape() })
}

/// Inverse block permutation: `y[v[i]] = y'[i]`.
pub fn unpermute_blocks_with(bimg: &BlockImage, perm: &PermutationVector) -> Result<BlockImage> {
    bimg.check_len("block permutation", perm.len(), bimg.num_blocks())?;
    let n = bimg.block_len();
    let mut out = bimg.clone();
    for (i, &dst) in perm.as_slice().iter().enumerate() {
        out.data[dst * n..(dst + 1) * n].copy_from_slice(&bimg.data[i * n..(i + 1) * n]);
    }
    Ok(out)
}

/// Pixel shuffling with an explicit vector, shared by every block:
/// `x'(w, h, k) = x(w, h, v[k])`.
pub fn shuffle_pixels_with(bimg: &BlockImage, perm: &PermutationVector) -> Result<BlockImage> {
    bimg.check_len("pixel shuffle", perm.len(), bimg.block_len())?;
    let mut out = bimg.clone();
    for (dst, src) in out.blocks_mut().zip(bimg.blocks()) {
        for (d, &j) in dst.iter_mut().zip(perm.as_slice()) {
            *d = src[j];
        }
    }
    Ok(out)
}

/// Inverse pixel shuffling: `x(w, h, v[k]) = x'(w, h, k)`.
pub fn unshuffle_pixels_with(bimg: &BlockImage, perm: &PermutationVector) -> Result<BlockImage> {
    bimg.check_len("pixel shuffle", perm.len(), bimg.block_len())?;
    let mut out = bimg.clone();
    for (dst, src) in out.blocks_mut().zip(bimg.blocks()) {
        for (&v, &j) in src.iter().zip(perm.as_slice()) {
            dst[j] = v;
        }
    }
    Ok(out)
}

/// Negative-positive transform at every position `k` with `r_k = 1`.
/// It is its own inverse.
pub fn flip_bits_with(bimg: &BlockImage, flips: &FlipVector) -> Result<BlockImage> {
    bimg.check_len("flip vector", flips.len(), bimg.block_len())?;
    let mut out = bimg.clone();
    for block in out.blocks_mut() {
        for (v, &r) in block.iter_mut().zip(flips.as_slice()) {
            if r == 1 {
                *v = complement(*v);
            }
        }
    }
    Ok(out)
}

pub fn permute_blocks(bimg: &BlockImage, k1: u64) -> Result<BlockImage> {
    permute_blocks_with(bimg, &gen_permutation(k1, bimg.num_blocks())?)
}

pub fn shuffle_pixels(bimg: &BlockImage, k2: u64) -> Result<BlockImage> {
    shuffle_pixels_with(bimg, &gen_permutation(k2, bimg.block_len())?)
}

pub fn flip_bits(bimg: &BlockImage, k3: u64) -> Result<BlockImage> {
    flip_bits_with(bimg, &gen_flipvector(k3, bimg.block_len())?)
}

/// The key schedule an image of this geometry uses.
pub fn schedule_for(img: &Image, keys: &KeySet, block_size: usize) -> Result<KeySchedule> {
    check_divisible(img.width(), img.height(), block_size)?;
    let n_blocks = (img.width() / block_size) * (img.height() / block_size);
    let block_len = block_size * block_size * img.channels();
    KeySchedule::derive(keys, n_blocks, block_len)
}

/// Permutation, then shuffling, then flipping.
pub fn encrypt_with(img: &Image, block_size: usize, schedule: &KeySchedule) -> Result<Image> {
    let b = segment(img, block_size)?;
    let b = permute_blocks_with(&b, &schedule.perm_blocks)?;
    let b = shuffle_pixels_with(&b, &schedule.perm_pixels)?;
    let b = flip_bits_with(&b, &schedule.flips)?;
    integrate(&b, block_size)
}

pub fn decrypt_with(img: &Image, block_size: usize, schedule: &KeySchedule) -> Result<Image> {
    let b = segment(img, block_size)?;
    let b = flip_bits_with(&b, &schedule.flips)?;
    let b = unshuffle_pixels_with(&b, &schedule.perm_pixels)?;
    let b = unpermute_blocks_with(&b, &schedule.perm_blocks)?;
    integrate(&b, block_size)
}

pub fn encrypt_image(img: &Image, keys: &KeySet, block_size: usize) -> Result<Image> {
    encrypt_with(img, block_size, &schedule_for(img, keys, block_size)?)
}

pub fn decrypt_image(img: &Image, keys: &KeySet, block_size: usize) -> Result<Image> {
    decrypt_with(img, block_size, &schedule_for(img, keys, block_size)?)
}

impl BlockImage {
    fn clone_shape(&self) -> BlockImage {
        BlockImage {
            blocks_w: self.blocks_w,
            blocks_h: self.blocks_h,
            block_size: self.block_size,
            channels: self.channels,
            data: Vec::new(),
        }
    }
}
