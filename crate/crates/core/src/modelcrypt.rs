//! Key-based transformation of a trained model.
//!
//! Only the patch embedding `E` and the patch rows of the position embedding
//! `E_pos` change. An encrypted image's token `i` carries the shuffled,
//! sign-flipped pixels of source block `v_A[i]`, so:
//!
//! - position row `i` (1-based) takes the old row `v_A[i-1] + 1`;
//! - embedding row `k` takes the old row `v_B[k]`, negated where `r_k = 1`.
//!
//! With those, each token of the encrypted image embeds to exactly the
//! vector its source block embeds to in the plain image, and the encoder's
//! indifference to token order does the rest.

use crate::keyrand::{FlipVector, KeySchedule, KeySet, PermutationVector};
use crate::tensor::Tensor;
use crate::vit::{VitConfig, VitModel};
use crate::{Error, Result};

/// The permutation and flip vectors realizing one model transformation.
pub type ModelTransform = KeySchedule;

/// Derives the vectors for a model; identical to what
/// [`crate::blockcrypt::schedule_for`] derives for an input image when the
/// block size equals the patch size.
pub fn derive_transform(keys: &KeySet, config: &VitConfig) -> Result<ModelTransform> {
    config.validate()?;
    KeySchedule::derive(keys, config.num_patches(), config.patch_len())
}

/// Row 0 stays; row `i ≥ 1` becomes old row `perm[i-1] + 1`.
pub fn transform_position_embedding(pos: &Tensor, perm_blocks: &PermutationVector) -> Result<Tensor> {
    let n = perm_blocks.len();
    if pos.shape().len() != 2 || pos.rows() != n + 1 {
        return Err(Error::LengthMismatch {
            what: "position embedding rows",
            expected: n + 1,
            got: pos.rows(),
        });
    }
    let mut out = pos.clone();
    for (i, &src) in perm_blocks.as_slice().iter().enumerate() {
        out.row_mut(i + 1).copy_from_slice(pos.row(src + 1));
    }
    Ok(out)
}

/// Row `k` becomes old row `perm[k]`, negated where `flips[k] = 1`.
pub fn transform_patch_embedding(
    e: &Tensor,
    perm_pixels: &PermutationVector,
    flips: &FlipVector,
) -> Result<Tensor> {
    let n = perm_pixels.len();
    if e.shape().len() != 2 || e.rows() != n {
        return Err(Error::LengthMismatch {
            what: "patch embedding rows",
            expected: n,
            got: e.rows(),
        });
    }
    if flips.len() != n {
        return Err(Error::LengthMismatch {
            what: "flip vector",
            expected: n,
            got: flips.len(),
        });
    }
    let mut out = e.clone();
    for (k, &src) in perm_pixels.as_slice().iter().enumerate() {
        let negate = flips.is_set(k);
        for (dst, &v) in out.row_mut(k).iter_mut().zip(e.row(src)) {
            *dst = if negate { -v } else { v };
        }
    }
    Ok(out)
}

/// Returns a copy with `E` and `E_pos` transformed; everything else is
/// copied untouched.
pub fn transform_model_with(model: &VitModel, t: &ModelTransform) -> Result<VitModel> {
    let mut out = model.clone();
    out.position_embedding = transform_position_embedding(&model.position_embedding, &t.perm_blocks)?;
    out.patch_embedding = transform_patch_embedding(&model.patch_embedding, &t.perm_pixels, &t.flips)?;
    Ok(out)
}

pub fn transform_model(model: &VitModel, keys: &KeySet) -> Result<VitModel> {
    transform_model_with(model, &derive_transform(keys, &model.config)?)
}

/// Inverse of [`transform_model_with`] for the same vectors.
pub fn untransform_model_with(model: &VitModel, t: &ModelTransform) -> Result<VitModel> {
    let mut out = model.clone();
    out.position_embedding = transform_position_embedding(&model.position_embedding, &t.perm_blocks.inverse())?;
    let n = t.perm_pixels.len();
    // undo the signs in place first: they index the permuted rows
    let unflipped = transform_patch_embedding(&model.patch_embedding, &PermutationVector::identity(n), &t.flips)?;
    out.patch_embedding = transform_patch_embedding(&unflipped, &t.perm_pixels.inverse(), &FlipVector::zeros(n))?;
    Ok(out)
}
