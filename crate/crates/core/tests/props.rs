//! Property tests for the operator and pipeline invariants.

mod support;

use mope_core::distortion::{add_gaussian_noise, DistortionConfig};
use mope_core::graph::{ParamKey, ParamRole, ParamStore};
use mope_core::tensor::{
    box_filter3, conv_transpose2d, instance_norm, resize, ConvParams, ResizeMode, Shape, Tensor,
};
use mope_core::training::{gan_loss, gate_loss_batch};
use mope_core::weights::{load_weights, save_weights};
use mope_core::MopeRng;
use proptest::prelude::*;
use rand::SeedableRng;

fn tensor_strategy(n: usize, c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-1.0f32..1.0, n * c * h * w)
        .prop_map(move |data| Tensor::from_vec(Shape::new(n, c, h, w), data).unwrap())
}

fn image_strategy(h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0.0f32..=1.0, 3 * h * w)
        .prop_map(move |data| Tensor::from_vec(Shape::new(1, 3, h, w), data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transpose_shape_formula_holds(
        h_in in 1usize..10,
        w_in in 1usize..10,
        stride in 1usize..=2,
        pad in 0usize..=1,
        kernel_pick in 0usize..=1,
    ) {
        let k = [1usize, 3][kernel_pick];
        // geometry must admit a non-empty output
        prop_assume!((h_in - 1) * stride + k > 2 * pad);
        prop_assume!((w_in - 1) * stride + k > 2 * pad);
        let input = Tensor::filled(Shape::new(1, 2, h_in, w_in), 0.3);
        let weight = Tensor::filled(Shape::new(2, 3, k, k), 0.1);
        let p = ConvParams::new(weight, vec![0.0; 3], stride, pad).unwrap();
        let out = conv_transpose2d(&input, &p).unwrap();
        prop_assert_eq!(out.shape().h, (h_in - 1) * stride + k - 2 * pad);
        prop_assert_eq!(out.shape().w, (w_in - 1) * stride + k - 2 * pad);
    }

    #[test]
    fn box_filter_preserves_global_mean(t in tensor_strategy(1, 2, 6, 7)) {
        let out = box_filter3(&t);
        prop_assert!((t.mean() - out.mean()).abs() < 1e-6);
    }

    #[test]
    fn instance_norm_standardizes_planes(t in tensor_strategy(2, 2, 5, 5)) {
        // skip degenerate (near-constant) planes
        for n in 0..2 {
            for c in 0..2 {
                let plane = t.plane(n, c);
                let mean: f32 = plane.iter().sum::<f32>() / plane.len() as f32;
                let var: f32 = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>()
                    / plane.len() as f32;
                prop_assume!(var > 1e-3);
            }
        }
        let out = instance_norm(&t, &[1.0; 2], &[0.0; 2], 1e-5).unwrap();
        for n in 0..2 {
            for c in 0..2 {
                let plane = out.plane(n, c);
                let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64;
                let var = plane.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>()
                    / plane.len() as f64;
                prop_assert!(mean.abs() < 1e-5);
                prop_assert!((var - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn noise_respects_unit_interval_and_zero_sigma_is_identity(
        img in image_strategy(6, 6),
        sigma in 0.0f32..0.5,
        seed in 0u64..1000,
    ) {
        let mut rng = MopeRng::seed_from_u64(seed);
        let noisy = add_gaussian_noise(&img, sigma, &mut rng).unwrap();
        for &v in noisy.data() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let mut rng = MopeRng::seed_from_u64(seed);
        let same = add_gaussian_noise(&img, 0.0, &mut rng).unwrap();
        prop_assert_eq!(same, img);
    }

    #[test]
    fn distortion_streams_are_seed_deterministic(seed in 0u64..500) {
        let img = Tensor::filled(Shape::new(1, 3, 8, 8), 0.5);
        let cfg = DistortionConfig { seed, ..DistortionConfig::default() };
        let draw = |s: u64| {
            let mut rng = MopeRng::seed_from_u64(s);
            mope_core::distortion::sample_training_pair(&img, &cfg, &mut rng).unwrap()
        };
        let (b1, n1, s1) = draw(seed);
        let (b2, n2, s2) = draw(seed);
        prop_assert_eq!(b1, b2);
        prop_assert_eq!(n1, n2);
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn weight_roundtrip_is_bit_exact(
        values in prop::collection::vec(prop::num::f32::NORMAL, 1..40),
        layer in 0usize..12,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.mope");
        let mut store = ParamStore::new();
        let len = values.len();
        store.insert(
            ParamKey::new(layer, ParamRole::Bias),
            Tensor::from_vec(Shape::new(1, 1, 1, len), values).unwrap(),
        );
        save_weights(&store, &path).unwrap();
        let loaded = load_weights(&path).unwrap();
        prop_assert_eq!(store, loaded);
    }

    #[test]
    fn losses_are_batch_permutation_invariant(
        vals in prop::collection::vec(0.05f32..0.95, 8),
    ) {
        // two batches that are permutations of each other
        let fwd = Tensor::from_vec(Shape::new(4, 1, 1, 2), vals.clone()).unwrap();
        let mut rev_vals: Vec<f32> = Vec::new();
        for k in (0..4).rev() {
            rev_vals.extend_from_slice(&vals[k * 2..(k + 1) * 2]);
        }
        let rev = Tensor::from_vec(Shape::new(4, 1, 1, 2), rev_vals).unwrap();

        let (d1, g1) = gan_loss(&fwd, &fwd);
        let (d2, g2) = gan_loss(&rev, &rev);
        prop_assert!((d1 - d2).abs() < 1e-9);
        prop_assert!((g1 - g2).abs() < 1e-9);

        let (l1, _, _) = gate_loss_batch(&fwd, &fwd).unwrap();
        let (l2, _, _) = gate_loss_batch(&rev, &rev).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-9);
    }

    #[test]
    fn bilinear_resize_stays_in_input_range(
        t in tensor_strategy(1, 1, 4, 5),
        oh in 1usize..12,
        ow in 1usize..12,
    ) {
        let lo = t.data().iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = t.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let out = resize(&t, oh, ow, ResizeMode::Bilinear).unwrap();
        for &v in out.data() {
            prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
        }
    }
}
