//! Deterministic keyed randomness.
//!
//! Every secret vector in the crate comes from a raw 64-bit seed run through
//! SplitMix64, bounded by rejection sampling and shuffled with top-down
//! Fisher-Yates. The recipe is fixed so that an image encrypted by one party
//! and a model transformed by another derive byte-identical vectors from the
//! same [`KeySet`].

use alloc::vec::Vec;

use crate::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step. Returns the output and the advanced state.
pub fn splitmix64_next(state: u64) -> (u64, u64) {
    let state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31), state)
}

/// Unbiased draw in `0..bound`. Returns the value and the advanced state.
pub fn bounded_uniform(state: u64, bound: u64) -> Result<(u64, u64)> {
    if bound == 0 {
        return Err(Error::EmptyRange);
    }
    // Largest multiple of `bound` that fits in 2^64; draws at or above it are
    // rejected so every residue is equally likely.
    let limit = (1u128 << 64) / bound as u128 * bound as u128;
    let mut state = state;
    loop {
        let (v, next) = splitmix64_next(state);
        state = next;
        if (v as u128) < limit {
            return Ok((v % bound, state));
        }
    }
}

/// Stateful wrapper around [`splitmix64_next`].
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        let (v, s) = splitmix64_next(self.state);
        self.state = s;
        v
    }

    pub fn bounded(&mut self, bound: u64) -> Result<u64> {
        let (v, s) = bounded_uniform(self.state, bound)?;
        self.state = s;
        Ok(v)
    }

    /// Uniform `f32` in `[0, 1)` from the top 24 bits.
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    /// Uniform `f32` in `[-scale, scale)`.
    pub fn symmetric_f32(&mut self, scale: f32) -> f32 {
        scale * (2.0 * self.next_f32() - 1.0)
    }

    /// Top-down Fisher-Yates shuffle of `items` in place.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            // bound is i + 1 >= 2, so this cannot fail
            let j = self.bounded(i as u64 + 1).expect("non-empty range") as usize;
            items.swap(i, j);
        }
    }
}

/// The three secret seeds: block permutation, pixel shuffling, bit flipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeySet {
    pub k1: u64,
    pub k2: u64,
    pub k3: u64,
}

impl KeySet {
    pub fn new(k1: u64, k2: u64, k3: u64) -> Self {
        Self { k1, k2, k3 }
    }

    /// Splits one master seed into three sub-seeds with three SplitMix64
    /// steps.
    pub fn from_master_seed(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let k1 = rng.next_u64();
        let k2 = rng.next_u64();
        let k3 = rng.next_u64();
        Self { k1, k2, k3 }
    }
}

/// A bijection on `0..n`, stored as the image of each index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermutationVector(Vec<usize>);

impl PermutationVector {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Validates that `entries` is a permutation of `0..entries.len()`.
    pub fn from_vec(entries: Vec<usize>) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::EmptyPermutation);
        }
        let mut seen = alloc::vec![false; n];
        for &e in &entries {
            if e >= n || seen[e] {
                return Err(Error::NotAPermutation(n));
            }
            seen[e] = true;
        }
        Ok(Self(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = alloc::vec![0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            inv[v] = i;
        }
        Self(inv)
    }

    /// `out[i] = src[self[i]]`.
    pub fn gather<T: Clone>(&self, src: &[T]) -> Vec<T> {
        debug_assert_eq!(src.len(), self.0.len());
        self.0.iter().map(|&j| src[j].clone()).collect()
    }

    /// `out[self[i]] = src[i]`; the inverse of [`gather`](Self::gather).
    pub fn scatter<T: Clone>(&self, src: &[T]) -> Vec<T> {
        debug_assert_eq!(src.len(), self.0.len());
        let mut out = src.to_vec();
        for (i, &j) in self.0.iter().enumerate() {
            out[j] = src[i].clone();
        }
        out
    }
}

impl core::ops::Index<usize> for PermutationVector {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// Binary vector selecting which block positions get negated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlipVector(Vec<u8>);

impl FlipVector {
    /// Accepts only exactly balanced 0/1 vectors.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if !bits.len().is_multiple_of(2) {
            return Err(Error::OddFlipLength(bits.len()));
        }
        let fv = Self::from_bits_unbalanced(bits)?;
        let ones = fv.ones();
        if ones * 2 != fv.len() {
            return Err(Error::UnbalancedFlips {
                ones,
                len: fv.len(),
            });
        }
        Ok(fv)
    }

    /// Test hook: any 0/1 vector, balanced or not. Keys never produce these.
    pub fn from_bits_unbalanced(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::NonBinaryFlip);
        }
        Ok(Self(bits))
    }

    pub fn zeros(n: usize) -> Self {
        Self(alloc::vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn is_set(&self, k: usize) -> bool {
        self.0[k] == 1
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

/// Fisher-Yates permutation of `0..n` seeded directly with `seed`.
pub fn gen_permutation(seed: u64, n: usize) -> Result<PermutationVector> {
    if n == 0 {
        return Err(Error::EmptyPermutation);
    }
    let mut v: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut v);
    Ok(PermutationVector(v))
}

/// `n/2` zeros followed by `n/2` ones, shuffled exactly like
/// [`gen_permutation`].
pub fn gen_flipvector(seed: u64, n: usize) -> Result<FlipVector> {
    if !n.is_multiple_of(2) || n == 0 {
        return Err(Error::OddFlipLength(n));
    }
    let mut bits = alloc::vec![0u8; n];
    bits[n / 2..].fill(1);
    SplitMix64::new(seed).shuffle(&mut bits);
    let fv = FlipVector(bits);
    assert_eq!(fv.ones() * 2, n);
    Ok(fv)
}

/// The secret vectors derived from a [`KeySet`] for a given geometry:
/// `perm_blocks` over the block (patch) grid, `perm_pixels` and `flips`
/// over the flattened block (patch) length.
///
/// Image encryption and model transformation both consume this, so the two
/// sides agree by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySchedule {
    pub perm_blocks: PermutationVector,
    pub perm_pixels: PermutationVector,
    pub flips: FlipVector,
}

impl KeySchedule {
    pub fn derive(keys: &KeySet, n_blocks: usize, block_len: usize) -> Result<Self> {
        Ok(Self {
            perm_blocks: gen_permutation(keys.k1, n_blocks)?,
            perm_pixels: gen_permutation(keys.k2, block_len)?,
            flips: gen_flipvector(keys.k3, block_len)?,
        })
    }

    pub fn identity(n_blocks: usize, block_len: usize) -> Self {
        Self {
            perm_blocks: PermutationVector::identity(n_blocks),
            perm_pixels: PermutationVector::identity(block_len),
            flips: FlipVector::zeros(block_len),
        }
    }
}
