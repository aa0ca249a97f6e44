use rand::Rng;
use vqat_core::{Module, Param, Scalar, Tensor};

/// `N` codewords of length `dim`, plus EMA statistics.
#[derive(Clone, Debug)]
pub struct Codebook<T> {
    pub vectors: Param<T>,
    pub ema_cluster_size: Vec<f64>,
    /// Row-major `N x dim`.
    pub ema_embed_sum: Vec<f64>,
}

impl<T: Scalar> Codebook<T> {
    /// Uniform initialisation in `(-1/N, 1/N)`.
    pub fn uniform<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / n as f64;
        let v = Tensor::from_fn([n, dim], |_| T::from_f64(rng.gen_range(-bound..bound)));
        Self::from_tensor(v)
    }

    pub fn from_tensor(vectors: Tensor<T>) -> Self {
        assert_eq!(vectors.rank(), 2, "codebook must be N x dim");
        let (n, dim) = (vectors.shape()[0], vectors.shape()[1]);
        Self {
            vectors: Param::new("codebook", vectors),
            ema_cluster_size: vec![0.0; n],
            ema_embed_sum: vec![0.0; n * dim],
        }
    }

    pub fn size(&self) -> usize {
        self.vectors.value.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.vectors.value.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.vectors.value.data()[i * d..(i + 1) * d]
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.value.is_finite()
    }
}

impl<T: Scalar> Module<T> for Codebook<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.vectors);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.vectors);
    }
}
