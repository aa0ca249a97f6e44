use proptest::prelude::*;
use vqat_core::rng::{seeded, standard_normal};
use vqat_core::Tensor;
use vqat_eval::*;

fn cloud(n: usize, d: usize, offset: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = seeded(seed);
    (0..n).map(|_| (0..d).map(|j| standard_normal(&mut r) + if j == 0 { offset } else { 0.0 }).collect()).collect()
}

fn raw() -> EvalConfig {
    EvalConfig { pca_dims: 0, ..Default::default() }
}

#[test]
fn identical_sets_score_high() {
    let a = cloud(500, 2, 0.0, 1);
    let s = evaluate_features(&a, &a, &raw()).unwrap();
    assert!(s.fidelity >= 0.9 && s.diversity >= 0.9, "{s:?}");
    assert_eq!(s.fidelity, s.diversity);
}

/// Independent draws land on the confidence level on average; single
/// draws scatter around it by the binomial standard error (~0.013).
#[test]
fn same_distribution_scores_near_confidence() {
    let (mut f, mut d) = (0.0, 0.0);
    for seed in 0..10 {
        let s = evaluate_features(&cloud(500, 2, 0.0, 2 * seed), &cloud(500, 2, 0.0, 2 * seed + 1), &raw()).unwrap();
        assert!(s.fidelity >= 0.85 && s.diversity >= 0.85, "{s:?}");
        f += s.fidelity / 10.0;
        d += s.diversity / 10.0;
    }
    assert!(f >= 0.88 && d >= 0.88, "mean fidelity {f}, diversity {d}");
}

#[test]
fn disjoint_sets_score_low() {
    let s = evaluate_features(&cloud(500, 2, 0.0, 1), &cloud(500, 2, 20.0, 2), &raw()).unwrap();
    assert!(s.fidelity < 0.05 && s.diversity < 0.05, "{s:?}");
    assert_eq!(top_f1(0.0, 0.0), 0.0);
}

#[test]
fn single_mode_fakes_halve_diversity() {
    let mut real = cloud(250, 2, -15.0, 1);
    real.extend(cloud(250, 2, 15.0, 2));
    let fake = cloud(500, 2, 15.0, 3);
    let h = scott_bandwidth(&cloud(500, 2, 0.0, 9)).unwrap();
    let fake_support = kde_support(&fake, h, 0.9).unwrap();
    let d = diversity(&real, &fake_support).unwrap();
    assert!((d - 0.5).abs() <= 0.1, "diversity {d}");
}

#[test]
fn isotropic_pca_needs_all_axes() {
    let x = cloud(5000, 50, 0.0, 4);
    let k = pca_explained_variance(&x, 0.99).unwrap();
    assert!((49..=51).contains(&k), "n99 {k}");
}

#[test]
fn pipeline_identity_and_unconditioned() {
    let mut r = seeded(5);
    let items: Vec<Tensor<f32>> = (0..12)
        .map(|_| Tensor::from_fn([1, 64, 88], |_| (standard_normal(&mut r) * 0.1 + 0.5) as f32))
        .collect();
    let labels: Vec<u8> = (0..12).map(|i| (i % 10) as u8).collect();
    let clf = Classifier::<f32>::new(ClassifierConfig::default());
    let cfg = EvalConfig::default();
    let rep = evaluate_pipeline(
        EvalInputs { real: &items, real_labels: Some(&labels), fake: &items, fake_labels: Some(&labels), classifier: Some(&clf) },
        &cfg,
    )
    .unwrap();
    assert!(rep.fidelity >= cfg.confidence && rep.diversity >= cfg.confidence);
    assert_eq!(rep.accuracy, rep.real_accuracy);
    let unc = evaluate_pipeline(
        EvalInputs { real: &items, real_labels: Some(&labels), fake: &items, fake_labels: None, classifier: Some(&clf) },
        &cfg,
    )
    .unwrap();
    assert!(unc.accuracy.is_none());
    assert!(!serde_json::to_string(&unc).unwrap().contains("\"accuracy\""));
    let short = evaluate_pipeline(
        EvalInputs { real: &items, real_labels: None, fake: &items[..3], fake_labels: None, classifier: None },
        &cfg,
    );
    assert!(matches!(short, Err(EvalError::Usage(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_stay_in_unit_interval(seed in 0u64..1000, shift in 0.0f64..8.0) {
        let s = evaluate_features(&cloud(60, 3, 0.0, seed), &cloud(60, 3, shift, seed + 1), &raw()).unwrap();
        for v in [s.fidelity, s.diversity, top_f1(s.fidelity, s.diversity)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn far_fake_never_raises_fidelity(seed in 0u64..1000, shift in 0.0f64..3.0) {
        let real = cloud(80, 2, 0.0, seed);
        let mut fake = cloud(40, 2, shift, seed + 7);
        let support = kde_support(&real, scott_bandwidth(&real).unwrap(), 0.9).unwrap();
        let before = fidelity(&fake, &support).unwrap();
        fake.push(vec![1e3, -1e3]);
        prop_assert!(fidelity(&fake, &support).unwrap() <= before);
    }

    #[test]
    fn membership_ignores_reference_order(seed in 0u64..1000, qx in -4.0f64..4.0, qy in -4.0f64..4.0) {
        let pts = cloud(40, 2, 0.0, seed);
        let mut rev = pts.clone();
        rev.reverse();
        let a = kde_support(&pts, 0.7, 0.9).unwrap();
        let b = kde_support(&rev, 0.7, 0.9).unwrap();
        prop_assert_eq!(a.threshold, b.threshold);
        prop_assert_eq!(a.contains(&[qx, qy]).unwrap(), b.contains(&[qx, qy]).unwrap());
    }

    #[test]
    fn swapping_identical_sets_is_symmetric(seed in 0u64..1000) {
        let a = cloud(50, 2, 0.0, seed);
        let s = evaluate_features(&a, &a, &raw()).unwrap();
        prop_assert_eq!(s.fidelity, s.diversity);
    }

    #[test]
    fn pca_count_is_minimal(seed in 0u64..1000, d in 2usize..8, t in 0.5f64..0.999) {
        let mut r = seeded(seed);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..d).map(|j| standard_normal(&mut r) * (j + 1) as f64).collect())
            .collect();
        let k = pca_explained_variance(&x, t).unwrap();
        let ev = eigenvalues(&x).unwrap();
        let total: f64 = ev.iter().sum();
        prop_assert!(ev[..k].iter().sum::<f64>() >= t * total);
        prop_assert!(ev[..k - 1].iter().sum::<f64>() < t * total);
    }
}
