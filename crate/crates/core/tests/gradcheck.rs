mod common;

use blockvit_core::keyrand::SplitMix64;
use blockvit_core::train::{accumulate_gradients, loss};
use blockvit_core::vit::random_init;
use blockvit_core::VitModel;
use common::{cross_entropy, lcg_image, params_of, reference_logits, tiny_config};

const NAMES: [&str; 16] = [
    "ln1_gain", "ln1_bias", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_gain", "ln2_bias", "w1", "b1", "w2",
    "b2",
];

fn tensor_name(i: usize, layers: usize) -> String {
    match i {
        0 => "patch_embedding".into(),
        1 => "position_embedding".into(),
        2 => "cls_token".into(),
        _ if i < 3 + 16 * layers => format!("layer{}.{}", (i - 3) / 16, NAMES[(i - 3) % 16]),
        _ => ["final_ln_gain", "final_ln_bias", "head", "head_bias"][i - 3 - 16 * layers].into(),
    }
}

fn perturbed(seed: u64) -> VitModel {
    let mut model = random_init(tiny_config(), seed).unwrap();
    let mut rng = SplitMix64::new(seed.wrapping_add(77));
    for t in model.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.symmetric_f32(0.3);
        }
    }
    model
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// Analytic f32 gradients against central differences of the f64 reference.
#[test]
fn gradients_match_central_differences() {
    let cfg = tiny_config();
    for seed in 0..3u64 {
        let model = perturbed(seed);
        let img = lcg_image(seed + 11, 8, 8, 1);
        let label = seed as usize % cfg.classes;

        let mut grads = VitModel::zeros(cfg).unwrap();
        let l = accumulate_gradients(&model, &img, label, &mut grads).unwrap();
        assert!((l - loss(&model, &img, label).unwrap()).abs() < 1e-6);

        let base = params_of(&model);
        let eps = 1e-5;
        for (ti, g) in grads.tensors().iter().enumerate() {
            let analytic: Vec<f64> = g.data().iter().map(|&v| v as f64).collect();
            let numeric: Vec<f64> = (0..base[ti].len())
                .map(|j| {
                    let mut p = base.clone();
                    p[ti][j] += eps;
                    let up = cross_entropy(&reference_logits(&cfg, &p, &img), label);
                    p[ti][j] -= 2.0 * eps;
                    let down = cross_entropy(&reference_logits(&cfg, &p, &img), label);
                    (up - down) / (2.0 * eps)
                })
                .collect();
            let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
            let scale = norm(&numeric).max(norm(&analytic));
            let name = tensor_name(ti, cfg.layers);
            if scale < 1e-5 {
                // e.g. the key bias: softmax is shift-invariant, so its gradient vanishes
                assert!(norm(&diff) < 1e-6, "{name}: {analytic:?} vs {numeric:?}");
            } else {
                let rel = norm(&diff) / scale;
                assert!(rel <= 1e-3, "{name}: relative error {rel}\n{analytic:?}\n{numeric:?}");
            }
        }
    }
}
