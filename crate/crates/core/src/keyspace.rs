//! Exact key-space sizes for block permutation, pixel shuffling and bit
//! flipping.

use alloc::string::{String, ToString};

use num_bigint::BigUint;
use num_traits::One;
use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeySpaceResult {
    #[serde(rename = "M")]
    pub block_size: usize,
    #[serde(rename = "C")]
    pub channels: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W_b")]
    pub blocks_w: usize,
    #[serde(rename = "H_b")]
    pub blocks_h: usize,
    #[serde(rename = "log2_OP")]
    pub log2_op: f64,
    #[serde(rename = "log2_OS")]
    pub log2_os: f64,
    #[serde(rename = "log2_OF")]
    pub log2_of: f64,
    #[serde(rename = "log2_O")]
    pub log2_o: f64,
    /// Exact values in decimal.
    #[serde(rename = "O_P")]
    pub op: String,
    #[serde(rename = "O_S")]
    pub os: String,
    #[serde(rename = "O_F")]
    pub of: String,
    #[serde(rename = "O")]
    pub o: String,
}

pub fn factorial(n: usize) -> BigUint {
    let mut acc = BigUint::one();
    for i in 2..=n as u64 {
        acc *= i;
    }
    acc
}

/// `log2(x)` from the top 64 bits of `x`; `x` must be non-zero.
pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        let v = x.iter_u64_digits().next().unwrap_or(0);
        return libm::log2(v as f64);
    }
    let shift = bits - 64;
    let top = (x >> shift).iter_u64_digits().next().unwrap_or(0);
    libm::log2(top as f64) + shift as f64
}

/// Key-space sizes for a `W×H×C` image in `M×M` blocks:
/// `O_P = (WH/M²)!`, `O_S = (M²C)!`, `O_F = (M²C)! / ((M²C/2)!)²`.
pub fn keyspace(block_size: usize, channels: usize, width: usize, height: usize) -> Result<KeySpaceResult> {
    if block_size == 0 || width == 0 || height == 0 || !width.is_multiple_of(block_size) || !height.is_multiple_of(block_size) {
        return Err(Error::NotDivisible {
            width,
            height,
            block: block_size,
        });
    }
    let pb = block_size * block_size * channels;
    if pb == 0 || !pb.is_multiple_of(2) {
        return Err(Error::OddFlipLength(pb));
    }
    let (bw, bh) = (width / block_size, height / block_size);
    let op = factorial(bw * bh);
    let os = factorial(pb);
    let half = factorial(pb / 2);
    let of = &os / (&half * &half);
    let o = &op * &os * &of;
    Ok(KeySpaceResult {
        block_size,
        channels,
        width,
        height,
        blocks_w: bw,
        blocks_h: bh,
        log2_op: log2_big(&op),
        log2_os: log2_big(&os),
        log2_of: log2_big(&of),
        log2_o: log2_big(&o),
        op: op.to_string(),
        os: os.to_string(),
        of: of.to_string(),
        o: o.to_string(),
    })
}
