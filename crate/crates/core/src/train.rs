//! Hand-derived backpropagation for the fixed ViT architecture and a
//! minibatch SGD-with-momentum trainer.
//!
//! Gradients are stored in a [`VitModel`] of the same shape, so the update
//! step walks the two parameter lists in lockstep.

use alloc::vec;
use alloc::vec::Vec;

use crate::eval::LabeledDataset;
use crate::image::Image;
use crate::keyrand::SplitMix64;
use crate::tensor::{gelu_grad_scalar, matmul_nt_into, matmul_tn_into, softmax_in_place, Tensor};
use crate::vit::{forward_traced, ForwardTrace, NormTrace, VitModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub momentum: f32,
    pub batch_size: usize,
    /// Seeds the per-epoch sample order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 16,
            seed: 1,
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f32>,
}

/// Softmax cross-entropy of one sample.
pub fn loss(model: &VitModel, img: &Image, label: usize) -> Result<f32> {
    let logits = forward_traced(model, img, None)?;
    Ok(cross_entropy(logits.data(), label).0)
}

fn cross_entropy(logits: &[f32], label: usize) -> (f32, Vec<f32>) {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    let loss = -libm::logf(p[label].max(f32::MIN_POSITIVE));
    p[label] -= 1.0;
    (loss, p)
}

/// Loss of one sample; adds its gradient into `grads`.
pub fn accumulate_gradients(model: &VitModel, img: &Image, label: usize, grads: &mut VitModel) -> Result<f32> {
    let cfg = model.config;
    if label >= cfg.classes {
        return Err(Error::LabelOutOfRange {
            label,
            classes: cfg.classes,
        });
    }
    let mut trace = ForwardTrace::default();
    let logits = forward_traced(model, img, Some(&mut trace))?;
    let (loss, dlogits) = cross_entropy(logits.data(), label);

    let d = cfg.dim;
    let t = cfg.tokens();
    let classes = cfg.classes;

    // head
    matmul_tn_into(&trace.cls_out, &dlogits, grads.head.data_mut(), 1, d, classes);
    add_into(grads.head_bias.data_mut(), &dlogits);
    let mut dcls = vec![0.0f32; d];
    matmul_nt_into(&dlogits, model.head.data(), &mut dcls, 1, classes, d);

    // final layer norm, classification row only
    let mut dz = vec![0.0f32; t * d];
    layernorm_backward(
        &dcls,
        &trace.final_ln,
        &model.final_ln_gain,
        &mut grads.final_ln_gain,
        &mut grads.final_ln_bias,
        &mut dz[..d],
    );

    for (li, layer) in model.layers.iter().enumerate().rev() {
        let lt = &trace.layers[li];
        let gl = &mut grads.layers[li];
        let mlp = cfg.mlp_dim;

        // z ← z + W2·gelu(W1·LN2(z))
        matmul_tn_into(&lt.g, &dz, gl.w2.data_mut(), t, mlp, d);
        add_col_sums(gl.b2.data_mut(), &dz, d);
        let mut du = vec![0.0f32; t * mlp];
        matmul_nt_into(&dz, layer.w2.data(), &mut du, t, d, mlp);
        for (g, &u) in du.iter_mut().zip(&lt.u) {
            *g *= gelu_grad_scalar(u);
        }
        matmul_tn_into(&lt.h2, &du, gl.w1.data_mut(), t, d, mlp);
        add_col_sums(gl.b1.data_mut(), &du, mlp);
        let mut dh2 = vec![0.0f32; t * d];
        matmul_nt_into(&du, layer.w1.data(), &mut dh2, t, mlp, d);
        layernorm_backward(&dh2, &lt.ln2, &layer.ln2_gain, &mut gl.ln2_gain, &mut gl.ln2_bias, &mut dz);

        // z ← z + Wo·MHSA(LN1(z))
        matmul_tn_into(&lt.o, &dz, gl.wo.data_mut(), t, d, d);
        add_col_sums(gl.bo.data_mut(), &dz, d);
        let mut d_o = vec![0.0f32; t * d];
        matmul_nt_into(&dz, layer.wo.data(), &mut d_o, t, d, d);

        let heads = cfg.heads;
        let dh = cfg.head_dim();
        let scale = 1.0 / libm::sqrtf(dh as f32);
        let mut dq = vec![0.0f32; t * d];
        let mut dk = vec![0.0f32; t * d];
        let mut dv = vec![0.0f32; t * d];
        let mut ds = vec![0.0f32; t];
        for h in 0..heads {
            let a = &lt.attn[h * t * t..(h + 1) * t * t];
            let cols = h * dh..(h + 1) * dh;
            for i in 0..t {
                let doi = &d_o[i * d..][cols.clone()];
                let ai = &a[i * t..(i + 1) * t];
                // dA[i, j] = do_i · v_j, and dv_j += A[i, j] do_i
                let mut dot = 0.0f32;
                for j in 0..t {
                    let vj = &lt.v[j * d..][cols.clone()];
                    let mut acc = 0.0f32;
                    for (x, y) in doi.iter().zip(vj) {
                        acc += x * y;
                    }
                    ds[j] = acc;
                    dot += ai[j] * acc;
                    let dvj = &mut dv[j * d..][cols.clone()];
                    for (g, &x) in dvj.iter_mut().zip(doi) {
                        *g += ai[j] * x;
                    }
                }
                // softmax backward, then the scaled dot product
                for j in 0..t {
                    let s = ai[j] * (ds[j] - dot) * scale;
                    let qi = &lt.q[i * d..][cols.clone()];
                    let kj = &lt.k[j * d..][cols.clone()];
                    let dqi = &mut dq[i * d..][cols.clone()];
                    for (g, &x) in dqi.iter_mut().zip(kj) {
                        *g += s * x;
                    }
                    let dkj = &mut dk[j * d..][cols.clone()];
                    for (g, &x) in dkj.iter_mut().zip(qi) {
                        *g += s * x;
                    }
                }
            }
        }
        let mut dh1 = vec![0.0f32; t * d];
        for (grad_in, w, gw, gb) in [
            (&dq, &layer.wq, &mut gl.wq, &mut gl.bq),
            (&dk, &layer.wk, &mut gl.wk, &mut gl.bk),
            (&dv, &layer.wv, &mut gl.wv, &mut gl.bv),
        ] {
            matmul_tn_into(&lt.h1, grad_in, gw.data_mut(), t, d, d);
            add_col_sums(gb.data_mut(), grad_in, d);
            matmul_nt_into(grad_in, w.data(), &mut dh1, t, d, d);
        }
        layernorm_backward(&dh1, &lt.ln1, &layer.ln1_gain, &mut gl.ln1_gain, &mut gl.ln1_bias, &mut dz);
    }

    // embedding
    add_into(grads.cls_token.data_mut(), &dz[..d]);
    add_into(grads.position_embedding.data_mut(), &dz);
    let n = cfg.num_patches();
    matmul_tn_into(&trace.patches, &dz[d..], grads.patch_embedding.data_mut(), n, cfg.patch_len(), d);

    Ok(loss)
}

/// Loss and gradient of one sample.
pub fn loss_and_gradients(model: &VitModel, img: &Image, label: usize) -> Result<(f32, VitModel)> {
    let mut grads = VitModel::zeros(model.config)?;
    let loss = accumulate_gradients(model, img, label, &mut grads)?;
    Ok((loss, grads))
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn add_col_sums(dst: &mut [f32], src: &[f32], width: usize) {
    for row in src.chunks_exact(width) {
        add_into(dst, row);
    }
}

/// Accumulates gain/bias gradients and adds the input gradient into `dx`.
fn layernorm_backward(
    dy: &[f32],
    trace: &NormTrace,
    gain: &Tensor,
    dgain: &mut Tensor,
    dbias: &mut Tensor,
    dx: &mut [f32],
) {
    let d = gain.len();
    let g = gain.data();
    for (r, &rstd) in trace.rstd.iter().enumerate() {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &trace.xhat[r * d..(r + 1) * d];
        let mut sum_dxhat = 0.0f32;
        let mut sum_dxhat_xhat = 0.0f32;
        for j in 0..d {
            dgain.data_mut()[j] += dyr[j] * xh[j];
            dbias.data_mut()[j] += dyr[j];
            let dxh = dyr[j] * g[j];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[j];
        }
        let inv_d = 1.0 / d as f32;
        let dxr = &mut dx[r * d..(r + 1) * d];
        for j in 0..d {
            let dxh = dyr[j] * g[j];
            dxr[j] += rstd * (dxh - sum_dxhat * inv_d - xh[j] * sum_dxhat_xhat * inv_d);
        }
    }
}

/// Minibatch SGD with momentum on softmax cross-entropy. `v ← μv + g`,
/// `w ← w − lr·v`, with `g` the batch-mean gradient.
pub fn train_toy(model: &VitModel, dataset: &LabeledDataset, cfg: &TrainConfig) -> Result<(VitModel, TrainLog)> {
    let mut model = model.clone();
    let mut velocity = VitModel::zeros(model.config)?;
    let mut rng = SplitMix64::new(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = TrainLog::default();
    let batch_size = cfg.batch_size.max(1);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0f32;
        for batch in order.chunks(batch_size) {
            let mut grads = VitModel::zeros(model.config)?;
            for &i in batch {
                total += accumulate_gradients(&model, &dataset.images[i], dataset.labels[i], &mut grads)?;
            }
            let inv = 1.0 / batch.len() as f32;
            for ((w, v), g) in model
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grads.tensors())
            {
                for ((wi, vi), gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *vi = cfg.momentum * *vi + gi * inv;
                    *wi -= cfg.lr * *vi;
                }
            }
        }
        let mean = if dataset.is_empty() { 0.0 } else { total / dataset.len() as f32 };
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        log.epoch_loss.push(mean);
    }
    Ok((model, log))
}
