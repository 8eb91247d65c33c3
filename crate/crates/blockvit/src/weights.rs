//! `VTW1` weight container.
//!
//! Layout, all integers and floats little-endian, no padding:
//!
//! ```text
//! "VTW1"                                  4 bytes
//! format version                          u32
//! W H C P D L heads mlp_dim classes       9 × u32
//! tensors                                 f32 each
//! ```
//!
//! Tensor order: `E`, `E_pos`, `cls_token`, then per layer `ln1_gain`,
//! `ln1_bias`, `wq`, `bq`, `wk`, `bk`, `wv`, `bv`, `wo`, `bo`, `ln2_gain`,
//! `ln2_bias`, `w1`, `b1`, `w2`, `b2`, then `final_ln_gain`,
//! `final_ln_bias`, `head`, `head_bias`. Matrices are row-major with the
//! input dimension first (`x·W`).

use blockvit_core::{VitConfig, VitModel};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"VTW1";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 9 * 4;

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("not a VTW1 file (magic {0:?})")]
    BadMagic(Vec<u8>),
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("truncated header: {got} of {HEADER_LEN} bytes")]
    Truncated { got: usize },
    #[error("header describes {expected} bytes of tensors, file has {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid config in header: {0}")]
    Config(blockvit_core::Error),
}

fn u32_at(bytes: &[u8], i: usize) -> u32 {
    u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap())
}

// Parameter count implied by a header, computed with checked arithmetic so a
// hostile header cannot trigger a huge allocation before the length check.
fn parameter_count(c: &VitConfig) -> Option<usize> {
    let d = c.dim;
    let tokens = (c.width / c.patch).checked_mul(c.height / c.patch)?.checked_add(1)?;
    let patch_len = c.patch.checked_mul(c.patch)?.checked_mul(c.channels)?;
    let dd = d.checked_mul(d)?;
    let dm = d.checked_mul(c.mlp_dim)?;
    let layer = dd
        .checked_mul(4)?
        .checked_add(d.checked_mul(9)?)?
        .checked_add(dm.checked_mul(2)?)?
        .checked_add(c.mlp_dim)?;
    patch_len
        .checked_mul(d)?
        .checked_add(tokens.checked_mul(d)?)?
        .checked_add(d)?
        .checked_add(layer.checked_mul(c.layers)?)?
        .checked_add(d.checked_mul(2)?)?
        .checked_add(d.checked_mul(c.classes)?)?
        .checked_add(c.classes)
}

pub fn save_model(model: &VitModel) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * model.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [c.width, c.height, c.channels, c.patch, c.dim, c.layers, c.heads, c.mlp_dim, c.classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for t in model.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_model(bytes: &[u8]) -> Result<VitModel, WeightsError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(WeightsError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(WeightsError::Truncated { got: bytes.len() });
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(WeightsError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let f = |i: usize| u32_at(bytes, 8 + 4 * i) as usize;
    let config = VitConfig {
        width: f(0),
        height: f(1),
        channels: f(2),
        patch: f(3),
        dim: f(4),
        layers: f(5),
        heads: f(6),
        mlp_dim: f(7),
        classes: f(8),
    };
    config.validate().map_err(WeightsError::Config)?;
    let body = &bytes[HEADER_LEN..];
    let expected = parameter_count(&config).and_then(|n| n.checked_mul(4)).unwrap_or(usize::MAX);
    if body.len() != expected {
        return Err(WeightsError::ShapeMismatch {
            expected,
            got: body.len(),
        });
    }
    let mut model = VitModel::zeros(config).map_err(WeightsError::Config)?;
    let mut floats = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    for t in model.tensors_mut() {
        for v in t.data_mut() {
            *v = floats.next().expect("length checked above");
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use blockvit_core::vit::random_init;

    fn tiny(dim: usize) -> VitConfig {
        VitConfig {
            width: 8,
            height: 8,
            channels: 1,
            patch: 4,
            dim,
            layers: 1,
            heads: 2,
            mlp_dim: 8,
            classes: 3,
        }
    }

    #[test]
    fn header_bytes() {
        let m = random_init(tiny(4), 1).unwrap();
        let b = save_model(&m);
        assert_eq!(&b[..4], b"VTW1");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        let fields: Vec<u32> = (0..9).map(|i| u32_at(&b, 8 + 4 * i)).collect();
        assert_eq!(fields, [8, 8, 1, 4, 4, 1, 2, 8, 3]);
        // first tensor is E, row-major
        let e0 = f32::from_le_bytes(b[HEADER_LEN..HEADER_LEN + 4].try_into().unwrap());
        assert_eq!(e0.to_bits(), m.patch_embedding.data()[0].to_bits());
        assert_eq!(b.len(), HEADER_LEN + 4 * m.num_parameters());
    }

    #[test]
    fn parameter_count_matches_model() {
        for cfg in [tiny(4), tiny(8), VitConfig::default()] {
            assert_eq!(parameter_count(&cfg), Some(VitModel::zeros(cfg).unwrap().num_parameters()));
        }
        let huge = VitConfig { dim: usize::MAX / 2, heads: 1, ..tiny(4) };
        assert_eq!(parameter_count(&huge), None);
    }

    #[test]
    fn errors() {
        let b = save_model(&random_init(tiny(4), 1).unwrap());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(load_model(&bad), Err(WeightsError::BadMagic(_))));
        let mut bad = b.clone();
        bad[4] = 2;
        assert_eq!(load_model(&bad).err(), Some(WeightsError::Version { found: 2, expected: 1 }));
        assert_eq!(load_model(&b[..20]).err(), Some(WeightsError::Truncated { got: 20 }));
        assert!(matches!(load_model(&b[..b.len() - 1]), Err(WeightsError::ShapeMismatch { .. })));
        // header claims D = 8 over a D = 4 body
        let mut bad = b.clone();
        bad[8 + 16..8 + 20].copy_from_slice(&8u32.to_le_bytes());
        assert!(matches!(load_model(&bad), Err(WeightsError::ShapeMismatch { .. })));
        let mut bad = b;
        bad[8 + 24..8 + 28].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(load_model(&bad), Err(WeightsError::Config(_))));
    }
}
