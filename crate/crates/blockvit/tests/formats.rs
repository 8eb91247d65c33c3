use blockvit::keyfile::{keys_from_json, keys_to_json};
use blockvit::ppm::{read_ppm, write_ppm};
use blockvit::weights::{load_model, save_model};
use blockvit_core::vit::random_init;
use blockvit_core::{Image, KeySet, VitConfig};
use proptest::prelude::*;

proptest! {
    #[test]
    fn ppm_round_trip_is_bit_exact(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        let mut s = seed;
        let levels: Vec<u8> = (0..w * h * 3).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); (s >> 56) as u8 }).collect();
        let img = Image::from_levels(w, h, 3, &levels).unwrap();
        let bytes = write_ppm(&img).unwrap();
        let back = read_ppm(&bytes).unwrap();
        prop_assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        img.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(write_ppm(&back).unwrap(), bytes);
    }

    #[test]
    fn weights_round_trip_is_bit_exact(seed in any::<u64>(), layers in 0usize..3, heads in prop::sample::select(vec![1usize, 2, 4])) {
        let cfg = VitConfig { width: 8, height: 8, channels: 3, patch: 4, dim: 8, layers, heads, mlp_dim: 6, classes: 5 };
        let m = random_init(cfg, seed).unwrap();
        let bytes = save_model(&m);
        let back = load_model(&bytes).unwrap();
        for (a, b) in m.tensors().iter().zip(back.tensors()) {
            prop_assert_eq!(a.shape(), b.shape());
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(back.config, cfg);
        prop_assert_eq!(save_model(&back), bytes);
    }

    #[test]
    fn key_file_round_trip(k in any::<(u64, u64, u64)>()) {
        let keys = KeySet::new(k.0, k.1, k.2);
        prop_assert_eq!(keys_from_json(&keys_to_json(&keys)).unwrap(), keys);
    }
}

// Special float patterns must survive the container untouched.
#[test]
fn weights_keep_nan_payloads_and_signed_zero() {
    let cfg = VitConfig { width: 4, height: 4, channels: 1, patch: 2, dim: 2, layers: 1, heads: 1, mlp_dim: 2, classes: 2 };
    let mut m = random_init(cfg, 1).unwrap();
    m.head_bias.data_mut()[0] = f32::from_bits(0x7fc0_1234);
    m.head_bias.data_mut()[1] = -0.0;
    let back = load_model(&save_model(&m)).unwrap();
    assert_eq!(back.head_bias.data()[0].to_bits(), 0x7fc0_1234);
    assert_eq!(back.head_bias.data()[1].to_bits(), (-0.0f32).to_bits());
}
