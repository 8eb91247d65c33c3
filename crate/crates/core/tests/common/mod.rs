//! Naive f64 ViT used as an independent oracle. Everything is written with
//! explicit index loops against the documented layout, sharing no code with
//! the crate except parameter access.

#![allow(dead_code)]

use blockvit_core::{Image, VitConfig, VitModel};

/// Parameters as f64 vectors, in the model's canonical tensor order.
pub fn params_of(model: &VitModel) -> Vec<Vec<f64>> {
    model
        .tensors()
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect()
}

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let s = 1.0 / (var + 1e-6).sqrt();
    (0..x.len()).map(|j| (x[j] - mean) * s * gain[j] + bias[j]).collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

// x (len k) times row-major w (k × n) plus b
fn affine(x: &[f64], w: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|col| b[col] + x.iter().enumerate().map(|(r, xv)| xv * w[r * n + col]).sum::<f64>())
        .collect()
}

/// Logits of `img` under the parameters `p`.
pub fn reference_logits(cfg: &VitConfig, p: &[Vec<f64>], img: &Image) -> Vec<f64> {
    let (pp, c, d) = (cfg.patch, cfg.channels, cfg.dim);
    let per_row = cfg.width / pp;
    let n = per_row * (cfg.height / pp);
    let (e, pos, cls) = (&p[0], &p[1], &p[2]);

    let mut tokens: Vec<Vec<f64>> = Vec::new();
    tokens.push((0..d).map(|j| cls[j] + pos[j]).collect());
    for i in 0..n {
        let (py, px) = (i / per_row, i % per_row);
        let mut patch = Vec::new();
        for ch in 0..c {
            for r in 0..pp {
                for col in 0..pp {
                    let v = img.get(ch, py * pp + r, px * pp + col) as f64;
                    patch.push((v - 0.5) / 0.5);
                }
            }
        }
        let zero = vec![0.0; d];
        let mut tok = affine(&patch, e, &zero, d);
        for j in 0..d {
            tok[j] += pos[(i + 1) * d + j];
        }
        tokens.push(tok);
    }

    let t = tokens.len();
    let dh = d / cfg.heads;
    for l in 0..cfg.layers {
        let w = &p[3 + 16 * l..3 + 16 * (l + 1)];
        let h1: Vec<Vec<f64>> = tokens.iter().map(|z| layer_norm(z, &w[0], &w[1])).collect();
        let q: Vec<Vec<f64>> = h1.iter().map(|h| affine(h, &w[2], &w[3], d)).collect();
        let k: Vec<Vec<f64>> = h1.iter().map(|h| affine(h, &w[4], &w[5], d)).collect();
        let v: Vec<Vec<f64>> = h1.iter().map(|h| affine(h, &w[6], &w[7], d)).collect();
        let mut o = vec![vec![0.0; d]; t];
        for head in 0..cfg.heads {
            let cols = head * dh..(head + 1) * dh;
            for i in 0..t {
                let scores: Vec<f64> = (0..t)
                    .map(|j| cols.clone().map(|m| q[i][m] * k[j][m]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                let total: f64 = ex.iter().sum();
                for j in 0..t {
                    for m in cols.clone() {
                        o[i][m] += ex[j] / total * v[j][m];
                    }
                }
            }
        }
        for i in 0..t {
            let proj = affine(&o[i], &w[8], &w[9], d);
            for j in 0..d {
                tokens[i][j] += proj[j];
            }
        }
        for tok in tokens.iter_mut() {
            let h2 = layer_norm(tok, &w[10], &w[11]);
            let u: Vec<f64> = affine(&h2, &w[12], &w[13], cfg.mlp_dim).into_iter().map(gelu).collect();
            let m = affine(&u, &w[14], &w[15], d);
            for j in 0..d {
                tok[j] += m[j];
            }
        }
    }
    let base = 3 + 16 * cfg.layers;
    let y = layer_norm(&tokens[0], &p[base], &p[base + 1]);
    affine(&y, &p[base + 2], &p[base + 3], cfg.classes)
}

pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + mx;
    lse - logits[label]
}

/// Image with levels drawn from a simple LCG, independent of the crate's RNG.
pub fn lcg_image(seed: u64, w: usize, h: usize, c: usize) -> Image {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let levels: Vec<u8> = (0..w * h * c)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 56) as u8
        })
        .collect();
    Image::from_levels(w, h, c, &levels).unwrap()
}

pub fn tiny_config() -> VitConfig {
    VitConfig {
        width: 8,
        height: 8,
        channels: 1,
        patch: 4,
        dim: 4,
        layers: 1,
        heads: 2,
        mlp_dim: 8,
        classes: 3,
    }
}
