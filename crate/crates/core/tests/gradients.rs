//! Finite-difference checks of every differentiable kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqat_core::gradcheck::grad_check;
use vqat_core::layers::{Conv2d, ConvTranspose2d, Embedding, LayerNorm, Linear};
use vqat_core::ops::{self, AttentionShape};
use vqat_core::Tensor;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
const INSTANCES: u64 = 3;

fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn conv2d_input_and_kernel() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::new([2, 2, 5, 6], rand_vec(120, &mut rng)).unwrap();
        let k = Tensor::new([3, 2, 3, 3], rand_vec(54, &mut rng)).unwrap();
        let r = rand_vec(ops::conv2d(&x, &k, 2, 1).unwrap().numel(), &mut rng);
        let loss =
            |x: &Tensor<f64>, k: &Tensor<f64>| dot(ops::conv2d(x, k, 2, 1).unwrap().data(), &r);
        let dy = Tensor::new([2, 3, 3, 3], r.clone()).unwrap();
        let (dx, dk) = ops::conv2d_backward(&x, &k, &dy, 2, 1).unwrap();
        let ex = grad_check(
            |p| {
                (
                    loss(&Tensor::new(x.shape().to_vec(), p.to_vec()).unwrap(), &k),
                    dx.data().to_vec(),
                )
            },
            x.data(),
            EPS,
        );
        let ek = grad_check(
            |p| {
                (
                    loss(&x, &Tensor::new(k.shape().to_vec(), p.to_vec()).unwrap()),
                    dk.data().to_vec(),
                )
            },
            k.data(),
            EPS,
        );
        assert!(ex < TOL && ek < TOL, "conv2d errors {ex} {ek}");
    }
}

#[test]
fn conv_transpose2d_input_and_kernel() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
        let x = Tensor::new([2, 3, 3, 4], rand_vec(72, &mut rng)).unwrap();
        let k = Tensor::new([3, 2, 4, 4], rand_vec(96, &mut rng)).unwrap();
        let out = ops::conv_transpose2d(&x, &k, 2, 1).unwrap();
        assert_eq!(out.shape(), &[2, 2, 6, 8]);
        let r = rand_vec(out.numel(), &mut rng);
        let loss = |x: &Tensor<f64>, k: &Tensor<f64>| {
            dot(ops::conv_transpose2d(x, k, 2, 1).unwrap().data(), &r)
        };
        let dy = Tensor::new(out.shape().to_vec(), r.clone()).unwrap();
        let (dx, dk) = ops::conv_transpose2d_backward(&x, &k, &dy, 2, 1).unwrap();
        let ex = grad_check(
            |p| {
                (
                    loss(&Tensor::new(x.shape().to_vec(), p.to_vec()).unwrap(), &k),
                    dx.data().to_vec(),
                )
            },
            x.data(),
            EPS,
        );
        let ek = grad_check(
            |p| {
                (
                    loss(&x, &Tensor::new(k.shape().to_vec(), p.to_vec()).unwrap()),
                    dk.data().to_vec(),
                )
            },
            k.data(),
            EPS,
        );
        assert!(ex < TOL && ek < TOL, "conv_transpose2d errors {ex} {ek}");
    }
}

#[test]
fn conv_layers_with_bias() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(20 + seed);
        let mut conv = Conv2d::<f64>::new("c", 2, 3, 3, 1, 1, &mut rng);
        conv.bias.value = Tensor::new([3], rand_vec(3, &mut rng)).unwrap();
        let x = Tensor::new([1, 2, 4, 4], rand_vec(32, &mut rng)).unwrap();
        let r = rand_vec(48, &mut rng);
        conv.backward(&x, &Tensor::new([1, 3, 4, 4], r.clone()).unwrap())
            .unwrap();
        let base = conv.clone();
        let err = grad_check(
            |p| {
                let mut c = base.clone();
                c.bias.value = Tensor::new([3], p.to_vec()).unwrap();
                (
                    dot(c.forward(&x).unwrap().data(), &r),
                    base.bias.grad.clone(),
                )
            },
            base.bias.value.data(),
            EPS,
        );
        assert!(err < TOL, "conv bias error {err}");

        let mut up = ConvTranspose2d::<f64>::new("u", 2, 1, 4, 2, 1, &mut rng);
        up.bias.value = Tensor::new([1], rand_vec(1, &mut rng)).unwrap();
        let x = Tensor::new([1, 2, 3, 3], rand_vec(18, &mut rng)).unwrap();
        let r = rand_vec(36, &mut rng);
        up.backward(&x, &Tensor::new([1, 1, 6, 6], r.clone()).unwrap())
            .unwrap();
        let base = up.clone();
        let err = grad_check(
            |p| {
                let mut c = base.clone();
                c.bias.value = Tensor::new([1], p.to_vec()).unwrap();
                (
                    dot(c.forward(&x).unwrap().data(), &r),
                    base.bias.grad.clone(),
                )
            },
            base.bias.value.data(),
            EPS,
        );
        assert!(err < TOL, "conv-transpose bias error {err}");
    }
}

#[test]
fn linear_layer() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(30 + seed);
        let mut lin = Linear::<f64>::new("l", 5, 4, &mut rng);
        lin.bias.value = Tensor::new([4], rand_vec(4, &mut rng)).unwrap();
        let x = rand_vec(15, &mut rng);
        let r = rand_vec(12, &mut rng);
        let dx = lin.backward_rows(&x, &r, 3);
        let base = lin.clone();
        let ex = grad_check(|p| (dot(&base.forward_rows(p, 3), &r), dx.clone()), &x, EPS);
        let ew = grad_check(
            |p| {
                let mut l = base.clone();
                l.weight.value = Tensor::new([4, 5], p.to_vec()).unwrap();
                (dot(&l.forward_rows(&x, 3), &r), base.weight.grad.clone())
            },
            base.weight.value.data(),
            EPS,
        );
        let eb = grad_check(
            |p| {
                let mut l = base.clone();
                l.bias.value = Tensor::new([4], p.to_vec()).unwrap();
                (dot(&l.forward_rows(&x, 3), &r), base.bias.grad.clone())
            },
            base.bias.value.data(),
            EPS,
        );
        assert!(
            ex < TOL && ew < TOL && eb < TOL,
            "linear errors {ex} {ew} {eb}"
        );
    }
}

#[test]
fn layer_norm() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
        let mut ln = LayerNorm::<f64>::new("n", 6);
        ln.gamma.value = Tensor::new([6], rand_vec(6, &mut rng)).unwrap();
        ln.beta.value = Tensor::new([6], rand_vec(6, &mut rng)).unwrap();
        let x = rand_vec(18, &mut rng);
        let r = rand_vec(18, &mut rng);
        let dx = ln.backward_rows(&x, &r);
        let base = ln.clone();
        let ex = grad_check(|p| (dot(&base.forward_rows(p), &r), dx.clone()), &x, EPS);
        let eg = grad_check(
            |p| {
                let mut l = base.clone();
                l.gamma.value = Tensor::new([6], p.to_vec()).unwrap();
                (dot(&l.forward_rows(&x), &r), base.gamma.grad.clone())
            },
            base.gamma.value.data(),
            EPS,
        );
        assert!(ex < TOL && eg < TOL, "layer norm errors {ex} {eg}");
    }
}

#[test]
fn pointwise_activations() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let x: Vec<f64> = rand_vec(20, &mut rng).iter().map(|v| 3.0 * v).collect();
        let r = rand_vec(20, &mut rng);
        let eg = grad_check(
            |p| (dot(&ops::gelu(p), &r), ops::gelu_backward(p, &r)),
            &x,
            EPS,
        );
        let er = grad_check(
            |p| (dot(&ops::relu(p), &r), ops::relu_backward(p, &r)),
            &x,
            EPS,
        );
        let es = grad_check(
            |p| {
                let y = ops::sigmoid(p);
                (dot(&y, &r), ops::sigmoid_backward(&y, &r))
            },
            &x,
            EPS,
        );
        assert!(
            eg < TOL && er < TOL && es < TOL,
            "activation errors {eg} {er} {es}"
        );
    }
}

#[test]
fn softmax_cross_entropy_of_linear_map() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(60 + seed);
        let (n, d, v) = (4, 5, 7);
        let x = rand_vec(n * d, &mut rng);
        let w = rand_vec(v * d, &mut rng);
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..v)).collect();
        let mut lin = Linear::<f64>::new("w", d, v, &mut rng);
        lin.weight.value = Tensor::new([v, d], w.clone()).unwrap();
        let (_, dlogits) = ops::cross_entropy(&lin.forward_rows(&x, n), v, &targets).unwrap();
        lin.backward_rows(&x, &dlogits, n);
        let base = lin.clone();
        let err = grad_check(
            |p| {
                let mut l = base.clone();
                l.weight.value = Tensor::new([v, d], p.to_vec()).unwrap();
                let (loss, _) = ops::cross_entropy(&l.forward_rows(&x, n), v, &targets).unwrap();
                (loss, base.weight.grad.clone())
            },
            &w,
            EPS,
        );
        assert!(err < TOL, "cross-entropy error {err}");
    }
}

#[test]
fn mse_loss() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(70 + seed);
        let t = rand_vec(9, &mut rng);
        let x = rand_vec(9, &mut rng);
        let err = grad_check(|p| ops::mse(p, &t).unwrap(), &x, EPS);
        assert!(err < TOL);
    }
}

#[test]
fn embedding_lookup() {
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let mut emb = Embedding::<f64>::new("e", 5, 3, &mut rng);
    let ids = [1, 4, 1, 0];
    let r = rand_vec(12, &mut rng);
    emb.backward(&ids, &r);
    let base = emb.clone();
    let err = grad_check(
        |p| {
            let mut e = base.clone();
            e.weight.value = Tensor::new([5, 3], p.to_vec()).unwrap();
            (dot(&e.forward(&ids).unwrap(), &r), base.weight.grad.clone())
        },
        base.weight.value.data(),
        EPS,
    );
    assert!(err < TOL);
    assert!(emb.forward(&[5]).is_err());
}

#[test]
fn causal_attention() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(90 + seed);
        let s = AttentionShape::new(2, 5, 8, 2).unwrap();
        let qkv = rand_vec(2 * 5 * 24, &mut rng);
        let r = rand_vec(2 * 5 * 8, &mut rng);
        let (_, probs) = ops::causal_attention(&qkv, s).unwrap();
        let dq = ops::causal_attention_backward(&qkv, &probs, &r, s).unwrap();
        let err = grad_check(
            |p| (dot(&ops::causal_attention(p, s).unwrap().0, &r), dq.clone()),
            &qkv,
            EPS,
        );
        assert!(err < TOL, "attention error {err}");
    }
}
