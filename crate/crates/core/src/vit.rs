//! A small Vision Transformer: patch flattening, patch and position
//! embedding with a classification token, a pre-norm transformer encoder and
//! a linear head on the classification token.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::image::{normalize, Image};
use crate::keyrand::SplitMix64;
use crate::tensor::{
    gelu_scalar, matmul_into, row_stats, softmax_in_place, Tensor, LAYERNORM_EPS,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct VitConfig {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub patch: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub classes: usize,
}

impl Default for VitConfig {
    /// 32×32×3 images, 8×8 patches, 16 tokens of width 64, 4 layers.
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            channels: 3,
            patch: 8,
            dim: 64,
            layers: 4,
            heads: 4,
            mlp_dim: 128,
            classes: 10,
        }
    }
}

impl VitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.width == 0 || self.height == 0 || self.patch == 0 {
            return bad(format!("zero image or patch size in {self:?}"));
        }
        if !self.width.is_multiple_of(self.patch) || !self.height.is_multiple_of(self.patch) {
            return bad(format!(
                "patch {} does not divide {}x{}",
                self.patch, self.width, self.height
            ));
        }
        if !(self.channels == 1 || self.channels == 3) {
            return bad(format!("{} channels", self.channels));
        }
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return bad(format!("dim {} not divisible by {} heads", self.dim, self.heads));
        }
        if self.mlp_dim == 0 || self.classes == 0 {
            return bad(format!("mlp_dim {} classes {}", self.mlp_dim, self.classes));
        }
        Ok(())
    }

    /// `N = H·W / P²`.
    pub fn num_patches(&self) -> usize {
        (self.width / self.patch) * (self.height / self.patch)
    }

    /// `P²C`.
    pub fn patch_len(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    /// Sequence length including the classification token.
    pub fn tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Weights of one pre-norm encoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl EncoderLayer {
    fn zeros(cfg: &VitConfig) -> Self {
        let d = cfg.dim;
        let h = cfg.mlp_dim;
        Self {
            ln1_gain: Tensor::zeros(&[d]),
            ln1_bias: Tensor::zeros(&[d]),
            wq: Tensor::zeros(&[d, d]),
            bq: Tensor::zeros(&[d]),
            wk: Tensor::zeros(&[d, d]),
            bk: Tensor::zeros(&[d]),
            wv: Tensor::zeros(&[d, d]),
            bv: Tensor::zeros(&[d]),
            wo: Tensor::zeros(&[d, d]),
            bo: Tensor::zeros(&[d]),
            ln2_gain: Tensor::zeros(&[d]),
            ln2_bias: Tensor::zeros(&[d]),
            w1: Tensor::zeros(&[d, h]),
            b1: Tensor::zeros(&[h]),
            w2: Tensor::zeros(&[h, d]),
            b2: Tensor::zeros(&[d]),
        }
    }

    fn tensors(&self) -> [&Tensor; 16] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Full parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct VitModel {
    pub config: VitConfig,
    /// `E`, `(P²C) × D`.
    pub patch_embedding: Tensor,
    /// `E_pos`, `(N+1) × D`; row 0 belongs to the classification token.
    pub position_embedding: Tensor,
    /// `x_class`, length `D`.
    pub cls_token: Tensor,
    pub layers: Vec<EncoderLayer>,
    pub final_ln_gain: Tensor,
    pub final_ln_bias: Tensor,
    /// `D × classes`.
    pub head: Tensor,
    pub head_bias: Tensor,
}

impl VitModel {
    /// Every parameter zero, including layer-norm gains.
    pub fn zeros(config: VitConfig) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        Ok(Self {
            config,
            patch_embedding: Tensor::zeros(&[config.patch_len(), d]),
            position_embedding: Tensor::zeros(&[config.tokens(), d]),
            cls_token: Tensor::zeros(&[d]),
            layers: (0..config.layers).map(|_| EncoderLayer::zeros(&config)).collect(),
            final_ln_gain: Tensor::zeros(&[d]),
            final_ln_bias: Tensor::zeros(&[d]),
            head: Tensor::zeros(&[d, config.classes]),
            head_bias: Tensor::zeros(&[config.classes]),
        })
    }

    /// All tensors in the canonical order: `E`, `E_pos`, `x_class`, each
    /// layer (ln1 gain/bias, Wq, bq, Wk, bk, Wv, bv, Wo, bo, ln2 gain/bias,
    /// W1, b1, W2, b2), final layer-norm gain/bias, head, head bias.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.patch_embedding, &self.position_embedding, &self.cls_token];
        for layer in &self.layers {
            out.extend(layer.tensors());
        }
        out.extend([
            &self.final_ln_gain,
            &self.final_ln_bias,
            &self.head,
            &self.head_bias,
        ]);
        out
    }

    /// Same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.patch_embedding,
            &mut self.position_embedding,
            &mut self.cls_token,
        ];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.extend([
            &mut self.final_ln_gain,
            &mut self.final_ln_bias,
            &mut self.head,
            &mut self.head_bias,
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Deterministic initialization: weight matrices uniform in
/// `±1/sqrt(fan_in)`, biases zero, layer-norm gains one.
pub fn random_init(config: VitConfig, seed: u64) -> Result<VitModel> {
    let mut model = VitModel::zeros(config)?;
    let mut rng = SplitMix64::new(seed);
    let mut fill = |t: &mut Tensor, fan_in: usize| {
        let s = 1.0 / libm::sqrtf(fan_in as f32);
        for v in t.data_mut() {
            *v = rng.symmetric_f32(s);
        }
    };
    let d = config.dim;
    fill(&mut model.patch_embedding, config.patch_len());
    fill(&mut model.position_embedding, config.tokens());
    fill(&mut model.cls_token, d);
    for layer in &mut model.layers {
        layer.ln1_gain = Tensor::filled(&[d], 1.0);
        layer.ln2_gain = Tensor::filled(&[d], 1.0);
        fill(&mut layer.wq, d);
        fill(&mut layer.wk, d);
        fill(&mut layer.wv, d);
        fill(&mut layer.wo, d);
        fill(&mut layer.w1, d);
        fill(&mut layer.w2, config.mlp_dim);
    }
    model.final_ln_gain = Tensor::filled(&[d], 1.0);
    fill(&mut model.head, d);
    Ok(model)
}

/// Flattens a `C×H×W` tensor into `N` patches of `P²C` values, patches in
/// row-major order and values as `k = c·P² + row·P + col`.
pub fn flatten_patches(x: &Tensor, patch: usize) -> Result<Tensor> {
    let (c, h, w) = match x.shape() {
        [c, h, w] => (*c, *h, *w),
        s => {
            return Err(Error::InvalidDimensions(format!(
                "expected C×H×W tensor, got shape {s:?}"
            )))
        }
    };
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::NotDivisible {
            width: w,
            height: h,
            block: patch,
        });
    }
    let per_row = w / patch;
    let n = per_row * (h / patch);
    let len = patch * patch * c;
    let src = x.data();
    let mut out = Vec::with_capacity(n * len);
    for i in 0..n {
        let (y0, x0) = ((i / per_row) * patch, (i % per_row) * patch);
        for ch in 0..c {
            for row in 0..patch {
                let start = (ch * h + y0 + row) * w + x0;
                out.extend_from_slice(&src[start..start + patch]);
            }
        }
    }
    Tensor::new(&[n, len], out)
}

/// `z0`: row 0 is `x_class + e⁰_pos`, row `i` is `x_p[i-1]·E + eⁱ_pos`.
pub fn embed(patches: &Tensor, model: &VitModel) -> Result<Tensor> {
    let cfg = &model.config;
    let (n, len, d) = (cfg.num_patches(), cfg.patch_len(), cfg.dim);
    if patches.shape() != [n, len] {
        return Err(Error::ShapeMismatch {
            left: patches.shape().to_vec(),
            right: vec![n, len],
        });
    }
    let mut z = vec![0.0f32; (n + 1) * d];
    z[..d].copy_from_slice(model.cls_token.data());
    matmul_into(
        patches.data(),
        model.patch_embedding.data(),
        &mut z[d..],
        n,
        len,
        d,
    );
    for (v, p) in z.iter_mut().zip(model.position_embedding.data()) {
        *v += p;
    }
    Tensor::new(&[n + 1, d], z)
}

/// Per-row layer-norm statistics kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct NormTrace {
    /// Normalized input before gain and bias.
    pub xhat: Vec<f32>,
    pub rstd: Vec<f32>,
}

fn layernorm_traced(x: &[f32], d: usize, gain: &Tensor, bias: &Tensor) -> (Vec<f32>, NormTrace) {
    let rows = x.len() / d;
    let mut out = vec![0.0f32; x.len()];
    let mut trace = NormTrace {
        xhat: vec![0.0; x.len()],
        rstd: vec![0.0; rows],
    };
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let (mean, rstd) = row_stats(row, LAYERNORM_EPS);
        trace.rstd[r] = rstd;
        for j in 0..d {
            let xh = (row[j] - mean) * rstd;
            trace.xhat[r * d + j] = xh;
            out[r * d + j] = xh * gain.data()[j] + bias.data()[j];
        }
    }
    (out, trace)
}

/// Intermediates of one encoder block.
#[derive(Debug, Clone, Default)]
pub(crate) struct LayerTrace {
    pub ln1: NormTrace,
    pub h1: Vec<f32>,
    pub q: Vec<f32>,
    pub k: Vec<f32>,
    pub v: Vec<f32>,
    /// Attention weights, `heads × T × T`.
    pub attn: Vec<f32>,
    /// Concatenated head outputs before the output projection.
    pub o: Vec<f32>,
    pub ln2: NormTrace,
    pub h2: Vec<f32>,
    /// MLP pre-activation.
    pub u: Vec<f32>,
    /// MLP activation.
    pub g: Vec<f32>,
}

/// Intermediates of a whole forward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct ForwardTrace {
    pub patches: Vec<f32>,
    pub layers: Vec<LayerTrace>,
    pub final_ln: NormTrace,
    /// Final normalized classification-token row.
    pub cls_out: Vec<f32>,
}

fn linear(x: &[f32], w: &Tensor, b: &Tensor, rows: usize) -> Vec<f32> {
    let (k, n) = (w.shape()[0], w.shape()[1]);
    let mut out = vec![0.0f32; rows * n];
    matmul_into(x, w.data(), &mut out, rows, k, n);
    for row in out.chunks_exact_mut(n) {
        for (o, bv) in row.iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
    out
}

fn layer_forward(z: &mut [f32], layer: &EncoderLayer, cfg: &VitConfig, trace: Option<&mut LayerTrace>) {
    let d = cfg.dim;
    let t = z.len() / d;
    let heads = cfg.heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / libm::sqrtf(dh as f32);

    let (h1, ln1) = layernorm_traced(z, d, &layer.ln1_gain, &layer.ln1_bias);
    let q = linear(&h1, &layer.wq, &layer.bq, t);
    let k = linear(&h1, &layer.wk, &layer.bk, t);
    let v = linear(&h1, &layer.wv, &layer.bv, t);

    let mut attn = vec![0.0f32; heads * t * t];
    let mut o = vec![0.0f32; t * d];
    for h in 0..heads {
        let a = &mut attn[h * t * t..(h + 1) * t * t];
        for i in 0..t {
            let qi = &q[i * d + h * dh..i * d + (h + 1) * dh];
            let row = &mut a[i * t..(i + 1) * t];
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k[j * d + h * dh..j * d + (h + 1) * dh];
                let mut acc = 0.0f32;
                for (x, y) in qi.iter().zip(kj) {
                    acc += x * y;
                }
                *s = acc * scale;
            }
            softmax_in_place(row);
            let oi = &mut o[i * d + h * dh..i * d + (h + 1) * dh];
            for (j, &w) in row.iter().enumerate() {
                let vj = &v[j * d + h * dh..j * d + (h + 1) * dh];
                for (acc, x) in oi.iter_mut().zip(vj) {
                    *acc += w * x;
                }
            }
        }
    }
    let proj = linear(&o, &layer.wo, &layer.bo, t);
    for (zi, p) in z.iter_mut().zip(&proj) {
        *zi += p;
    }

    let (h2, ln2) = layernorm_traced(z, d, &layer.ln2_gain, &layer.ln2_bias);
    let u = linear(&h2, &layer.w1, &layer.b1, t);
    let g: Vec<f32> = u.iter().map(|&x| gelu_scalar(x)).collect();
    let m = linear(&g, &layer.w2, &layer.b2, t);
    for (zi, mi) in z.iter_mut().zip(&m) {
        *zi += mi;
    }

    if let Some(tr) = trace {
        *tr = LayerTrace {
            ln1,
            h1,
            q,
            k,
            v,
            attn,
            o,
            ln2,
            h2,
            u,
            g,
        };
    }
}

/// `L` pre-norm blocks followed by the final layer norm.
pub fn encoder_forward(z0: &Tensor, model: &VitModel) -> Result<Tensor> {
    let d = model.config.dim;
    if z0.shape().len() != 2 || z0.last_dim() != d {
        return Err(Error::ShapeMismatch {
            left: z0.shape().to_vec(),
            right: vec![z0.rows(), d],
        });
    }
    let mut z = z0.data().to_vec();
    for layer in &model.layers {
        layer_forward(&mut z, layer, &model.config, None);
    }
    let (out, _) = layernorm_traced(&z, d, &model.final_ln_gain, &model.final_ln_bias);
    Tensor::new(z0.shape(), out)
}

fn check_image(model: &VitModel, img: &Image) -> Result<()> {
    let cfg = &model.config;
    if (img.width(), img.height(), img.channels()) != (cfg.width, cfg.height, cfg.channels) {
        return Err(Error::InvalidDimensions(format!(
            "image {}x{}x{} does not match model input {}x{}x{}",
            img.width(),
            img.height(),
            img.channels(),
            cfg.width,
            cfg.height,
            cfg.channels
        )));
    }
    Ok(())
}

pub(crate) fn forward_traced(model: &VitModel, img: &Image, trace: Option<&mut ForwardTrace>) -> Result<Tensor> {
    check_image(model, img)?;
    let cfg = &model.config;
    let d = cfg.dim;
    let patches = flatten_patches(&normalize(img), cfg.patch)?;
    let mut z = embed(&patches, model)?.into_data();

    let mut layer_traces = Vec::new();
    let tracing = trace.is_some();
    for layer in &model.layers {
        if tracing {
            let mut lt = LayerTrace::default();
            layer_forward(&mut z, layer, cfg, Some(&mut lt));
            layer_traces.push(lt);
        } else {
            layer_forward(&mut z, layer, cfg, None);
        }
    }
    // Only the classification row reaches the head.
    let (cls, final_ln) = layernorm_traced(&z[..d], d, &model.final_ln_gain, &model.final_ln_bias);
    let logits = linear(&cls, &model.head, &model.head_bias, 1);
    if let Some(tr) = trace {
        *tr = ForwardTrace {
            patches: patches.into_data(),
            layers: layer_traces,
            final_ln,
            cls_out: cls,
        };
    }
    Tensor::new(&[cfg.classes], logits)
}

/// Logits for one image.
pub fn forward(model: &VitModel, img: &Image) -> Result<Tensor> {
    forward_traced(model, img, None)
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}
