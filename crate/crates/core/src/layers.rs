//! Parameterised layers. Forward passes are pure; backward passes take the
//! forward input back and accumulate into each parameter's gradient.

use rand::Rng;

use crate::error::{dim_err, Result};
use crate::ops::{self, MatMut, MatRef};
use crate::rng::standard_normal;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A trainable tensor with its gradient and Adam moment estimates.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Vec<T>,
    pub(crate) first_moment: Vec<T>,
    pub(crate) second_moment: Vec<T>,
    pub(crate) step: u64,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let n = value.numel();
        Self {
            name: name.into(),
            value,
            grad: vec![T::zero(); n],
            first_moment: vec![T::zero(); n],
            second_moment: vec![T::zero(); n],
            step: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn accumulate(&mut self, g: &[T]) {
        debug_assert_eq!(g.len(), self.grad.len());
        self.grad.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn set_state(&mut self, first: Vec<T>, second: Vec<T>, step: u64) -> Result<()> {
        if first.len() != self.value.numel() || second.len() != self.value.numel() {
            return dim_err(format!(
                "optimizer state does not match parameter `{}`",
                self.name
            ));
        }
        self.first_moment = first;
        self.second_moment = second;
        self.step = step;
        Ok(())
    }
}

/// Anything that owns parameters.
pub trait Module<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.value.numel());
        n
    }
}

/// Kaiming-uniform with `a = sqrt(5)`, i.e. `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn kaiming_uniform<T: Scalar, R: Rng>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| {
        T::from_f64(rng.gen_range(-bound..bound))
    })
}

pub fn normal_init<T: Scalar, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| T::from_f64(std * standard_normal(rng)))
}

/// Fully connected layer `y = x W^T + b` over the trailing axis.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                kaiming_uniform(&[out_dim, in_dim], in_dim, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros([out_dim])),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    /// Applies the layer to `rows` consecutive input vectors.
    pub fn forward_rows(&self, x: &[T], rows: usize) -> Vec<T> {
        let (i, o) = (self.in_dim(), self.out_dim());
        assert_eq!(x.len(), rows * i, "linear input width mismatch");
        let mut y = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            y.extend_from_slice(self.bias.value.data());
        }
        ops::gemm(
            T::one(),
            MatRef::new(x, rows, i),
            MatRef::new(self.weight.value.data(), o, i).t(),
            T::one(),
            MatMut::new(&mut y, rows, o),
        );
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward_rows(&mut self, x: &[T], dy: &[T], rows: usize) -> Vec<T> {
        let (i, o) = (self.in_dim(), self.out_dim());
        ops::gemm(
            T::one(),
            MatRef::new(dy, rows, o).t(),
            MatRef::new(x, rows, i),
            T::one(),
            MatMut::new(&mut self.weight.grad, o, i),
        );
        for row in dy.chunks(o) {
            self.bias.accumulate(row);
        }
        let mut dx = vec![T::zero(); rows * i];
        ops::gemm(
            T::one(),
            MatRef::new(dy, rows, o),
            MatRef::new(self.weight.value.data(), o, i),
            T::zero(),
            MatMut::new(&mut dx, rows, i),
        );
        dx
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (rows, mut shape) = self.rows_of(x)?;
        *shape.last_mut().unwrap() = self.out_dim();
        Tensor::new(shape, self.forward_rows(x.data(), rows))
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (rows, _) = self.rows_of(x)?;
        if dy.numel() != rows * self.out_dim() {
            return dim_err("linear upstream gradient has the wrong size");
        }
        Tensor::new(
            x.shape().to_vec(),
            self.backward_rows(x.data(), dy.data(), rows),
        )
    }

    fn rows_of(&self, x: &Tensor<T>) -> Result<(usize, Vec<usize>)> {
        let last = *x.shape().last().unwrap();
        if last != self.in_dim() {
            return dim_err(format!(
                "linear layer `{}` expects width {}, got {last}",
                self.weight.name,
                self.in_dim()
            ));
        }
        Ok((x.numel() / last, x.shape().to_vec()))
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_c * kernel * kernel;
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                kaiming_uniform(&[out_c, in_c, kernel, kernel], fan_in, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros([out_c])),
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = ops::conv2d(x, &self.weight.value, self.stride, self.pad)?;
        ops::conv::add_channel_bias(&mut y, self.bias.value.data())?;
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (dx, dk) = ops::conv2d_backward(x, &self.weight.value, dy, self.stride, self.pad)?;
        self.weight.accumulate(dk.data());
        self.bias.accumulate(&ops::conv::channel_bias_grad(dy)?);
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        // Fan-in as seen by the adjoint forward convolution.
        let fan_in = out_c * kernel * kernel;
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                kaiming_uniform(&[in_c, out_c, kernel, kernel], fan_in, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros([out_c])),
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = ops::conv_transpose2d(x, &self.weight.value, self.stride, self.pad)?;
        ops::conv::add_channel_bias(&mut y, self.bias.value.data())?;
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (dx, dk) =
            ops::conv_transpose2d_backward(x, &self.weight.value, dy, self.stride, self.pad)?;
        self.weight.accumulate(dk.data());
        self.bias.accumulate(&ops::conv::channel_bias_grad(dy)?);
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for ConvTranspose2d<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub eps: f64,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full([dim], T::one())),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros([dim])),
            eps: 1e-5,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.numel()
    }

    pub fn forward_rows(&self, x: &[T]) -> Vec<T> {
        ops::layer_norm(
            x,
            self.dim(),
            self.gamma.value.data(),
            self.beta.value.data(),
            self.eps,
        )
    }

    pub fn backward_rows(&mut self, x: &[T], dy: &[T]) -> Vec<T> {
        let (dx, dg, db) =
            ops::layer_norm_backward(x, self.dim(), self.gamma.value.data(), dy, self.eps);
        self.gamma.accumulate(&dg);
        self.beta.accumulate(&db);
        dx
    }
}

impl<T: Scalar> Module<T> for LayerNorm<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.gamma);
        f(&self.beta);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Lookup table `[vocab, dim]`.
#[derive(Clone, Debug)]
pub struct Embedding<T> {
    pub weight: Param<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new<R: Rng>(name: &str, vocab: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                normal_init(&[vocab, dim], 0.02, rng),
            ),
        }
    }

    pub fn vocab(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, ids: &[usize]) -> Result<Vec<T>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= self.vocab() {
                return dim_err(format!("id {id} outside table of {}", self.vocab()));
            }
            out.extend_from_slice(&self.weight.value.data()[id * d..(id + 1) * d]);
        }
        Ok(out)
    }

    pub fn backward(&mut self, ids: &[usize], dy: &[T]) {
        let d = self.dim();
        for (&id, g) in ids.iter().zip(dy.chunks(d)) {
            self.weight.grad[id * d..(id + 1) * d]
                .iter_mut()
                .zip(g)
                .for_each(|(a, &b)| *a += b);
        }
    }
}

impl<T: Scalar> Module<T> for Embedding<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
    }
}
