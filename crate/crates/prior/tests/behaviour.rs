use rand::Rng;
use vqat_core::rng::seeded;
use vqat_prior::{
    class_token, sample_sequence, ConstantModel, PriorConfig, PriorTrainer, TokenModel, Transformer, BOS,
};

fn small(context: usize) -> PriorConfig {
    PriorConfig { context, embed_dim: 32, mlp_dim: 64, batch_size: 8, lr: 3e-3, ..Default::default() }
}

fn softmax(l: &[f64], t: f64) -> Vec<f64> {
    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = l.iter().map(|v| ((v - m) / t).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

#[test]
fn extending_a_prefix_never_changes_earlier_logits() {
    let model = Transformer::<f32>::new(small(24), &mut seeded(11)).unwrap();
    let mut rng = seeded(12);
    for _ in 0..100 {
        let len = rng.gen_range(2..=24);
        let mut seq = vec![BOS];
        seq.extend((1..len).map(|_| rng.gen_range(0..256)));
        let cut = rng.gen_range(1..len);
        let v = model.vocab();
        let (full, _) = model.forward(&seq, 1).unwrap();
        let (short, _) = model.forward(&seq[..cut], 1).unwrap();
        assert_eq!(&full[..cut * v], &short[..], "prefix {cut} of {len}");
    }
}

#[test]
fn toy_sampler_matches_tempered_softmax() {
    let logits = vec![1.0, 0.0, -1.0];
    let n = 100_000;
    for t in [0.5, 1.0, 2.0] {
        let mut m = ConstantModel { logits: logits.clone(), context: n + 1 };
        let body = sample_sequence(&mut m, 0, n, t, &mut seeded(7)).unwrap();
        let want = softmax(&logits, t);
        for (k, p) in want.iter().enumerate() {
            let f = body.iter().filter(|&&x| x as usize == k).count() as f64 / n as f64;
            assert!((f - p).abs() < 0.01, "T={t} token {k}: {f} vs {p}");
        }
    }
}

#[test]
fn conditioned_case_two_sample_has_no_control_tokens() {
    let cfg = PriorConfig { conditioned: true, ..small(353) };
    let model = Transformer::<f32>::new(cfg, &mut seeded(1)).unwrap();
    let mut g = model.generator();
    assert_eq!(g.context(), 353);
    let a = sample_sequence(&mut g, class_token(3), 352, 1.0, &mut seeded(4)).unwrap();
    let b = sample_sequence(&mut g, class_token(3), 352, 1.0, &mut seeded(4)).unwrap();
    assert_eq!(a.len(), 352);
    assert!(a.iter().all(|&t| t < 256));
    assert_eq!(a, b);
}

#[test]
fn repeated_sequence_is_memorized() {
    let mut rng = seeded(3);
    let mut seq = vec![BOS];
    seq.extend((0..15).map(|_| rng.gen_range(0..256)));
    let data = vec![seq.clone(); 32];
    let mut t = PriorTrainer::new(PriorConfig { batch_size: 32, ..small(16) }).unwrap();
    for _ in 0..300 {
        let batch: Vec<&[usize]> = data.iter().map(Vec::as_slice).collect();
        t.step(&batch).unwrap();
    }
    let ce = t.evaluate(&data).unwrap();
    assert!(ce < 0.01, "ce {ce}");
    let mut g = t.model.generator();
    let body = sample_sequence(&mut g, BOS, 15, 0.0, &mut seeded(0)).unwrap();
    assert!(body.iter().map(|&x| x as usize).eq(seq[1..].iter().copied()));
}

#[test]
fn equiprobable_branch_converges_to_ln2() {
    let a = vec![BOS, 10, 20, 30, 40];
    let b = vec![BOS, 10, 20, 30, 50];
    let data: Vec<Vec<usize>> = (0..8).map(|i| if i % 2 == 0 { a.clone() } else { b.clone() }).collect();
    let mut t = PriorTrainer::new(small(5)).unwrap();
    for _ in 0..300 {
        let batch: Vec<&[usize]> = data.iter().map(Vec::as_slice).collect();
        t.step(&batch).unwrap();
    }
    let logits = t.model.next_token_logits(&a[..4]).unwrap();
    let p = softmax(&logits, 1.0);
    let ce = -0.5 * (p[40].ln() + p[50].ln());
    assert!((ce - 2f64.ln()).abs() < 0.02, "branch ce {ce}");
}

#[test]
fn untrained_full_size_loss_is_uniform() {
    let model = Transformer::<f32>::new(PriorConfig::default(), &mut seeded(0)).unwrap();
    let mut rng = seeded(1);
    let mut seq = vec![BOS];
    seq.extend((0..64).map(|_| rng.gen_range(0..256)));
    let ce = model.loss(&[&seq]).unwrap();
    assert!((ce - 267f64.ln()).abs() < 0.1, "ce {ce}");
}
