//! Frozen-assignment check of the straight-through gradient. With the
//! quantization offset `c = z_q - z` held fixed,
//! `L_R(D(E(x) + c)) + beta * MSE(E(x), z_q)` is smooth in the weights and
//! its finite-difference gradient must equal the straight-through one.

use rand::Rng;
use vqat_core::rng::seeded;
use vqat_core::{Module, Tensor};

use crate::config::{Case, VqvaeConfig};
use crate::error::Result;
use crate::model::VqVae;
use crate::quantize::{quantize_nearest, to_rows};

#[derive(Clone, Copy, Debug)]
pub struct StraightThroughReport {
    /// Worst error over sampled encoder/decoder coordinates, relative to
    /// `max(|analytic|, 1e-3 * largest |analytic|)`.
    pub network: f64,
    /// Worst relative error of the codebook gradient.
    pub codebook: f64,
    pub coords: usize,
}

fn flat(m: &VqVae<f64>, grad: bool) -> Vec<f64> {
    let mut v = Vec::new();
    m.visit(&mut |p| v.extend_from_slice(if grad { &p.grad } else { p.value.data() }));
    v
}

fn set(m: &mut VqVae<f64>, v: &[f64]) {
    let mut off = 0;
    m.visit_mut(&mut |p| {
        let n = p.value.numel();
        p.value.data_mut().copy_from_slice(&v[off..off + n]);
        off += n;
    });
}

fn mse(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.numel() as f64
}

/// Runs the check on a narrow (hidden width 4) f64 model.
pub fn straight_through_check(case: Case, seed: u64) -> Result<StraightThroughReport> {
    let cfg = VqvaeConfig {
        case,
        hidden: 4,
        beta: 0.25,
        ..Default::default()
    };
    let mut m = VqVae::<f64>::new(cfg, &mut seeded(seed))?;
    let mut r = seeded(seed.wrapping_add(1));
    m.codebook
        .vectors
        .value
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = r.gen_range(-0.5..0.5));
    // Zero biases put some ReLU inputs exactly on the kink; move them off.
    m.visit_mut(&mut |p| {
        if p.name.ends_with(".bias") {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = r.gen_range(-0.05..0.05));
        }
    });
    let x = Tensor::from_fn([1, 1, 64, 88], |_| r.gen_range(0.0..1.0));
    let beta = m.config.beta;
    let z0 = m.encode(&x)?;
    let q0 = quantize_nearest(&z0, &m.codebook)?;
    let offset: Vec<f64> = q0
        .z_q
        .data()
        .iter()
        .zip(z0.data())
        .map(|(q, z)| q - z)
        .collect();
    let n_codes = m.codebook.vectors.value.numel();

    m.zero_grad();
    m.forward_backward(&x, &mut seeded(0))?;
    let analytic = flat(&m, true);
    let theta0 = flat(&m, false);
    let n_net = theta0.len() - n_codes;

    let surrogate = |m: &mut VqVae<f64>, th: &[f64]| -> Result<f64> {
        set(m, th);
        let z = m.encode(&x)?;
        let mut zq = z.clone();
        zq.data_mut()
            .iter_mut()
            .zip(&offset)
            .for_each(|(v, c)| *v += c);
        Ok(mse(&m.decode(&zq)?, &x) + beta * mse(&z, &q0.z_q))
    };

    // Three coordinates from every encoder and decoder tensor.
    let mut coords = Vec::new();
    let mut off = 0;
    m.visit(&mut |p| {
        let n = p.value.numel();
        if off < n_net {
            for _ in 0..3 {
                coords.push(off + r.gen_range(0..n));
            }
        }
        off += n;
    });
    // At 1e-5 some perturbations cross ReLU kinks and bias the central
    // difference; 1e-6 avoids that at this model size.
    let eps = 1e-6;
    let scale = coords
        .iter()
        .map(|&i| analytic[i].abs())
        .fold(0.0, f64::max);
    let mut network = 0.0f64;
    for &i in &coords {
        let mut th = theta0.clone();
        th[i] += eps;
        let plus = surrogate(&mut m, &th)?;
        th[i] -= 2.0 * eps;
        let minus = surrogate(&mut m, &th)?;
        let numeric = (plus - minus) / (2.0 * eps);
        network = network.max((analytic[i] - numeric).abs() / analytic[i].abs().max(1e-3 * scale));
    }
    set(&mut m, &theta0);

    // Codebook: unit-weight MSE(sg(z), e_token) with assignments frozen.
    let dim = m.codebook.dim();
    let zr = to_rows(&z0)?;
    let codebook_term = |e: &[f64]| -> f64 {
        let mut s = 0.0;
        for (j, &t) in q0.tokens.iter().enumerate() {
            for k in 0..dim {
                s += (zr[j * dim + k] - e[t * dim + k]).powi(2);
            }
        }
        s / zr.len() as f64
    };
    let e0 = m.codebook.vectors.value.data().to_vec();
    let mut codebook = 0.0f64;
    for &t in q0.tokens.iter().take(4) {
        for k in [0, dim / 3, dim - 1] {
            let i = t * dim + k;
            let mut e = e0.clone();
            e[i] += eps;
            let plus = codebook_term(&e);
            e[i] -= 2.0 * eps;
            let numeric = (plus - codebook_term(&e)) / (2.0 * eps);
            let a = analytic[n_net + i];
            codebook = codebook.max((a - numeric).abs() / a.abs().max(1e-12));
        }
    }
    Ok(StraightThroughReport {
        network,
        codebook,
        coords: coords.len(),
    })
}
