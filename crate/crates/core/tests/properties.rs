use proptest::prelude::*;
use vqat_core::ops::{self, AttentionShape};
use vqat_core::Tensor;

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(row in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let mut r = row.clone();
        ops::softmax_in_place(&mut r);
        prop_assert!(r.iter().all(|&p| p >= 0.0));
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn attention_is_causal(
        qkv in prop::collection::vec(-2.0f64..2.0, 6 * 12),
        t in 0usize..5,
        delta in -3.0f64..3.0,
    ) {
        let s = AttentionShape::new(1, 6, 4, 2).unwrap();
        let (a, _) = ops::causal_attention(&qkv, s).unwrap();
        let mut changed = qkv.clone();
        for v in &mut changed[(t + 1) * 12..] {
            *v += delta;
        }
        let (b, _) = ops::causal_attention(&changed, s).unwrap();
        prop_assert_eq!(&a[..(t + 1) * 4], &b[..(t + 1) * 4]);
    }

    #[test]
    fn conv_adjoint_with_exact_tiling(
        c in 1usize..3, o in 1usize..3, half in 1usize..4, seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // 4x4 kernel, stride 2, pad 1 tiles any even extent.
        let (h, w) = (2 * half, 2 * half + 2);
        let x = Tensor::<f64>::from_fn([1, c, h, w], |_| rng.gen_range(-1.0..1.0));
        let k = Tensor::<f64>::from_fn([o, c, 4, 4], |_| rng.gen_range(-1.0..1.0));
        let cx = ops::conv2d(&x, &k, 2, 1).unwrap();
        let y = Tensor::<f64>::from_fn(cx.shape().to_vec(), |_| rng.gen_range(-1.0..1.0));
        let ty = ops::conv_transpose2d(&y, &k, 2, 1).unwrap();
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-6);
    }
}
