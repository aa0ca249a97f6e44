use rand::Rng;
use vqat_core::layers::{Conv2d, ConvTranspose2d};
use vqat_core::ops::{relu_backward, sigmoid, sigmoid_backward};
use vqat_core::{Module, Param, Scalar, Tensor};

use crate::codebook::Codebook;
use crate::config::{
    Case, QuantizerMode, VqvaeConfig, CODEBOOK_SIZE, INPUT_H, INPUT_W, LATENT_DIM,
};
use crate::error::{Result, VqError};
use crate::loss::{vqvae_loss, LossParts};
use crate::quantize::{
    self, from_rows, kl_to_uniform, kl_to_uniform_backward, quantize_nearest, quantize_stochastic,
    to_rows, Quantized,
};

fn relu_t<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

fn relu_back_t<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    Tensor::new(x.shape().to_vec(), relu_backward(x.data(), dy.data())).expect("same shape")
}

fn add_into<T: Scalar>(a: &mut Tensor<T>, b: &Tensor<T>) {
    a.data_mut()
        .iter_mut()
        .zip(b.data())
        .for_each(|(x, &y)| *x += y);
}

/// `x + conv2(relu(conv1(relu(x))))`, both convolutions 3x3.
#[derive(Clone, Debug)]
pub struct ResBlock<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
}

#[derive(Clone, Debug)]
pub struct ResCache<T> {
    x: Tensor<T>,
    h1: Tensor<T>,
    a: Tensor<T>,
    h2: Tensor<T>,
}

impl<T: Scalar> ResBlock<T> {
    pub fn new<R: Rng>(name: &str, channels: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), channels, hidden, 3, 1, 1, rng),
            conv2: Conv2d::new(&format!("{name}.conv2"), hidden, channels, 3, 1, 1, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ResCache<T>)> {
        let h1 = relu_t(x);
        let a = self.conv1.forward(&h1)?;
        let h2 = relu_t(&a);
        let mut y = self.conv2.forward(&h2)?;
        add_into(&mut y, x);
        Ok((
            y,
            ResCache {
                x: x.clone(),
                h1,
                a,
                h2,
            },
        ))
    }

    pub fn backward(&mut self, c: &ResCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let dh2 = self.conv2.backward(&c.h2, dy)?;
        let da = relu_back_t(&c.a, &dh2);
        let dh1 = self.conv1.backward(&c.h1, &da)?;
        let mut dx = relu_back_t(&c.x, &dh1);
        add_into(&mut dx, dy);
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for ResBlock<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.conv1.visit(f);
        self.conv2.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv1.visit_mut(f);
        self.conv2.visit_mut(f);
    }
}

/// Three convolutions followed by three residual blocks.
#[derive(Clone, Debug)]
pub struct Encoder<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub res: Vec<ResBlock<T>>,
}

#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    x: Tensor<T>,
    a1: Tensor<T>,
    h1: Tensor<T>,
    a2: Tensor<T>,
    h2: Tensor<T>,
    res: Vec<ResCache<T>>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new<R: Rng>(case: Case, hidden: usize, latent: usize, rng: &mut R) -> Self {
        let conv2 = match case {
            Case::Two => Conv2d::new("enc.conv2", hidden, hidden, 4, 2, 1, rng),
            Case::One => Conv2d::new("enc.conv2", hidden, hidden, 3, 1, 1, rng),
        };
        Self {
            conv1: Conv2d::new("enc.conv1", 1, hidden, 4, 2, 1, rng),
            conv2,
            conv3: Conv2d::new("enc.conv3", hidden, latent, 3, 1, 1, rng),
            res: (0..3)
                .map(|i| ResBlock::new(&format!("enc.res{i}"), latent, hidden, rng))
                .collect(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, EncoderCache<T>)> {
        let a1 = self.conv1.forward(x)?;
        let h1 = relu_t(&a1);
        let a2 = self.conv2.forward(&h1)?;
        let h2 = relu_t(&a2);
        let mut z = self.conv3.forward(&h2)?;
        let mut res = Vec::with_capacity(self.res.len());
        for block in &self.res {
            let (y, c) = block.forward(&z)?;
            res.push(c);
            z = y;
        }
        Ok((
            z,
            EncoderCache {
                x: x.clone(),
                a1,
                h1,
                a2,
                h2,
                res,
            },
        ))
    }

    pub fn backward(&mut self, c: &EncoderCache<T>, dz: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = dz.clone();
        for (block, rc) in self.res.iter_mut().zip(&c.res).rev() {
            g = block.backward(rc, &g)?;
        }
        let dh2 = self.conv3.backward(&c.h2, &g)?;
        let dh1 = self.conv2.backward(&c.h1, &relu_back_t(&c.a2, &dh2))?;
        Ok(self.conv1.backward(&c.x, &relu_back_t(&c.a1, &dh1))?)
    }
}

impl<T: Scalar> Module<T> for Encoder<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.conv1.visit(f);
        self.conv2.visit(f);
        self.conv3.visit(f);
        self.res.iter().for_each(|r| r.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv1.visit_mut(f);
        self.conv2.visit_mut(f);
        self.conv3.visit_mut(f);
        self.res.iter_mut().for_each(|r| r.visit_mut(f));
    }
}

/// Mirror of [`Encoder`]: residual blocks, three transposed convolutions
/// and a sigmoid.
#[derive(Clone, Debug)]
pub struct Decoder<T> {
    pub res: Vec<ResBlock<T>>,
    pub deconv1: ConvTranspose2d<T>,
    pub deconv2: ConvTranspose2d<T>,
    pub deconv3: ConvTranspose2d<T>,
}

#[derive(Clone, Debug)]
pub struct DecoderCache<T> {
    res: Vec<ResCache<T>>,
    r: Tensor<T>,
    h0: Tensor<T>,
    a1: Tensor<T>,
    h1: Tensor<T>,
    a2: Tensor<T>,
    h2: Tensor<T>,
    y: Tensor<T>,
}

impl<T: Scalar> Decoder<T> {
    pub fn new<R: Rng>(case: Case, hidden: usize, latent: usize, rng: &mut R) -> Self {
        let deconv2 = match case {
            Case::Two => ConvTranspose2d::new("dec.deconv2", hidden, hidden, 4, 2, 1, rng),
            Case::One => ConvTranspose2d::new("dec.deconv2", hidden, hidden, 3, 1, 1, rng),
        };
        Self {
            res: (0..3)
                .map(|i| ResBlock::new(&format!("dec.res{i}"), latent, hidden, rng))
                .collect(),
            deconv1: ConvTranspose2d::new("dec.deconv1", latent, hidden, 3, 1, 1, rng),
            deconv2,
            deconv3: ConvTranspose2d::new("dec.deconv3", hidden, 1, 4, 2, 1, rng),
        }
    }

    pub fn forward(&self, z_q: &Tensor<T>) -> Result<(Tensor<T>, DecoderCache<T>)> {
        let mut r = z_q.clone();
        let mut res = Vec::with_capacity(self.res.len());
        for block in &self.res {
            let (y, c) = block.forward(&r)?;
            res.push(c);
            r = y;
        }
        let h0 = relu_t(&r);
        let a1 = self.deconv1.forward(&h0)?;
        let h1 = relu_t(&a1);
        let a2 = self.deconv2.forward(&h1)?;
        let h2 = relu_t(&a2);
        let a3 = self.deconv3.forward(&h2)?;
        let y = Tensor::new(a3.shape().to_vec(), sigmoid(a3.data()))?;
        Ok((
            y.clone(),
            DecoderCache {
                res,
                r,
                h0,
                a1,
                h1,
                a2,
                h2,
                y,
            },
        ))
    }

    pub fn backward(&mut self, c: &DecoderCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let da3 = Tensor::new(dy.shape().to_vec(), sigmoid_backward(c.y.data(), dy.data()))?;
        let dh2 = self.deconv3.backward(&c.h2, &da3)?;
        let dh1 = self.deconv2.backward(&c.h1, &relu_back_t(&c.a2, &dh2))?;
        let dh0 = self.deconv1.backward(&c.h0, &relu_back_t(&c.a1, &dh1))?;
        let mut g = relu_back_t(&c.r, &dh0);
        for (block, rc) in self.res.iter_mut().zip(&c.res).rev() {
            g = block.backward(rc, &g)?;
        }
        Ok(g)
    }
}

impl<T: Scalar> Module<T> for Decoder<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.res.iter().for_each(|r| r.visit(f));
        self.deconv1.visit(f);
        self.deconv2.visit(f);
        self.deconv3.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.res.iter_mut().for_each(|r| r.visit_mut(f));
        self.deconv1.visit_mut(f);
        self.deconv2.visit_mut(f);
        self.deconv3.visit_mut(f);
    }
}

/// Output of one forward/backward pass over a batch.
#[derive(Clone, Debug)]
pub struct StepOutput<T> {
    pub loss: LossParts,
    pub tokens: Vec<usize>,
    /// Encoder output as channel-last rows, for EMA statistics.
    pub z_rows: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct VqVae<T> {
    pub config: VqvaeConfig,
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
    pub codebook: Codebook<T>,
}

impl<T: Scalar> VqVae<T> {
    pub fn new<R: Rng>(config: VqvaeConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(config.case, config.hidden, LATENT_DIM, rng);
        let decoder = Decoder::new(config.case, config.hidden, LATENT_DIM, rng);
        let codebook = Codebook::uniform(CODEBOOK_SIZE, LATENT_DIM, rng);
        Ok(Self {
            config,
            encoder,
            decoder,
            codebook,
        })
    }

    pub fn case(&self) -> Case {
        self.config.case
    }

    pub fn latent_shape(&self, batch: usize) -> [usize; 4] {
        let (h, w) = self.case().grid();
        [batch, self.codebook.dim(), h, w]
    }

    fn check_input(x: &Tensor<T>) -> Result<usize> {
        match x.shape() {
            &[b, 1, INPUT_H, INPUT_W] => Ok(b),
            s => Err(VqError::Dimension(format!(
                "expected input [B, 1, {INPUT_H}, {INPUT_W}], got {s:?}"
            ))),
        }
    }

    fn check_latent(&self, z: &Tensor<T>) -> Result<usize> {
        let b = z.shape().first().copied().unwrap_or(0);
        if z.shape() != self.latent_shape(b) {
            return Err(VqError::Dimension(format!(
                "expected latent {:?}, got {:?}",
                self.latent_shape(b),
                z.shape()
            )));
        }
        Ok(b)
    }

    pub fn encode(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Self::check_input(x)?;
        Ok(self.encoder.forward(x)?.0)
    }

    pub fn decode(&self, z_q: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_latent(z_q)?;
        Ok(self.decoder.forward(z_q)?.0)
    }

    /// Deterministic quantization used outside training. Stochastic mode
    /// takes the most probable codeword.
    pub fn quantize(&self, z: &Tensor<T>) -> Result<Quantized<T>> {
        quantize_nearest(z, &self.codebook)
    }

    pub fn encode_tokens(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(self.quantize(&self.encode(x)?)?.tokens)
    }

    pub fn reconstruct(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.decode(&self.quantize(&self.encode(x)?)?.z_q)
    }

    /// Forward pass with loss, then backward into every parameter gradient.
    /// Gradients accumulate; the caller zeroes them.
    pub fn forward_backward<R: Rng>(
        &mut self,
        x: &Tensor<T>,
        rng: &mut R,
    ) -> Result<StepOutput<T>> {
        Self::check_input(x)?;
        let cfg = self.config.clone();
        let (z, enc_cache) = self.encoder.forward(x)?;
        let q = match cfg.quantizer {
            QuantizerMode::Stochastic => {
                quantize_stochastic(&z, &self.codebook, cfg.temperature, Some(rng))?
            }
            _ => quantize_nearest(&z, &self.codebook)?,
        };
        let (x_hat, dec_cache) = self.decoder.forward(&q.z_q)?;
        let z_rows = to_rows(&z)?;
        let kl = q
            .probs
            .as_ref()
            .map(|p| (cfg.kl_weight, kl_to_uniform(p, self.codebook.size())));
        let loss = vqvae_loss(x, &x_hat, &z, &q.z_q, cfg.beta, kl)?;

        let numel = x.numel() as f64;
        let dx_hat = x_hat
            .data()
            .iter()
            .zip(x.data())
            .map(|(&a, &b)| (a - b) * T::from_f64(2.0 / numel))
            .collect();
        let dz_q = self
            .decoder
            .backward(&dec_cache, &Tensor::new(x_hat.shape().to_vec(), dx_hat)?)?;

        // Straight-through: the reconstruction gradient at z_q is copied to z.
        let latent_n = z.numel() as f64;
        let commit = T::from_f64(2.0 * cfg.beta / latent_n);
        let mut dz = dz_q;
        dz.data_mut()
            .iter_mut()
            .zip(z.data().iter().zip(q.z_q.data()))
            .for_each(|(g, (&a, &b))| *g += commit * (a - b));

        let dim = self.codebook.dim();
        let mut de = vec![0.0f64; self.codebook.vectors.value.numel()];
        if cfg.quantizer != QuantizerMode::Ema {
            // Codebook term ||sg(z) - e||^2 at unit weight.
            let zq_rows = to_rows(&q.z_q)?;
            for (j, &t) in q.tokens.iter().enumerate() {
                for k in 0..dim {
                    let i = j * dim + k;
                    de[t * dim + k] += 2.0 / latent_n * (zq_rows[i].as_f64() - z_rows[i].as_f64());
                }
            }
        }
        if let Some(probs) = &q.probs {
            let (dz_kl, de_kl) = kl_to_uniform_backward(
                &z_rows,
                &self.codebook,
                probs,
                cfg.temperature,
                cfg.kl_weight,
            );
            let dz_kl: Vec<T> = dz_kl.into_iter().map(T::from_f64).collect();
            add_into(
                &mut dz,
                &from_rows(&dz_kl, self.latent_shape(z.shape()[0]))?,
            );
            de.iter_mut().zip(de_kl).for_each(|(a, b)| *a += b);
        }
        let de: Vec<T> = de.into_iter().map(T::from_f64).collect();
        self.codebook.vectors.accumulate(&de);
        self.encoder.backward(&enc_cache, &dz)?;
        Ok(StepOutput {
            loss,
            tokens: q.tokens,
            z_rows,
        })
    }

    /// Plain autoencoder step that bypasses the quantizer; returns the
    /// reconstruction MSE.
    pub fn forward_backward_continuous(&mut self, x: &Tensor<T>) -> Result<f64> {
        Self::check_input(x)?;
        let (z, enc_cache) = self.encoder.forward(x)?;
        let (x_hat, dec_cache) = self.decoder.forward(&z)?;
        let (loss, dx_hat) = vqat_core::ops::mse(x_hat.data(), x.data())?;
        let dz = self
            .decoder
            .backward(&dec_cache, &Tensor::new(x_hat.shape().to_vec(), dx_hat)?)?;
        self.encoder.backward(&enc_cache, &dz)?;
        Ok(loss)
    }

    /// Applies the EMA codebook step when the quantizer is in EMA mode.
    pub fn ema_step(&mut self, out: &StepOutput<T>) {
        if self.config.quantizer == QuantizerMode::Ema {
            quantize::ema_update(
                &mut self.codebook,
                &out.z_rows,
                &out.tokens,
                self.config.ema_decay,
            );
        }
    }

    pub fn cast<U: Scalar>(&self) -> VqVae<U> {
        fn conv<T: Scalar, U: Scalar>(p: &Param<T>) -> Param<U> {
            Param::new(p.name.clone(), p.value.cast())
        }
        let mut out = VqVae::<U>::new(self.config.clone(), &mut vqat_core::rng::seeded(0))
            .expect("validated config");
        let mut src = Vec::new();
        self.visit(&mut |p| src.push(conv::<T, U>(p)));
        let mut it = src.into_iter();
        out.visit_mut(&mut |p| *p = it.next().expect("same architecture"));
        out.codebook.ema_cluster_size = self.codebook.ema_cluster_size.clone();
        out.codebook.ema_embed_sum = self.codebook.ema_embed_sum.clone();
        out
    }
}

impl<T: Scalar> Module<T> for VqVae<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.encoder.visit(f);
        self.decoder.visit(f);
        self.codebook.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.encoder.visit_mut(f);
        self.decoder.visit_mut(f);
        self.codebook.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vqat_core::rng::seeded;

    fn small(case: Case) -> VqVae<f32> {
        let cfg = VqvaeConfig {
            case,
            hidden: 8,
            ..Default::default()
        };
        VqVae::new(cfg, &mut seeded(1)).unwrap()
    }

    #[test]
    fn latent_shapes_per_case() {
        let x = Tensor::<f32>::full([2, 1, 64, 88], 0.5);
        assert_eq!(
            small(Case::Two).encode(&x).unwrap().shape(),
            &[2, 64, 16, 22]
        );
        let x1 = Tensor::<f32>::full([1, 1, 64, 88], 0.5);
        assert_eq!(
            small(Case::One).encode(&x1).unwrap().shape(),
            &[1, 64, 32, 44]
        );
    }

    #[test]
    fn decode_restores_input_shape() {
        for case in [Case::One, Case::Two] {
            let m = small(case);
            let x = Tensor::<f32>::full([1, 1, 64, 88], 0.25);
            let y = m.reconstruct(&x).unwrap();
            assert_eq!(y.shape(), x.shape());
            assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn zero_inputs_stay_finite() {
        let m = small(Case::Two);
        assert!(m
            .encode(&Tensor::zeros([1, 1, 64, 88]))
            .unwrap()
            .is_finite());
        assert!(m
            .decode(&Tensor::zeros([1, 64, 16, 22]))
            .unwrap()
            .is_finite());
    }

    #[test]
    fn wrong_shapes_are_dimension_errors() {
        let m = small(Case::Two);
        assert!(matches!(
            m.encode(&Tensor::zeros([1, 1, 64, 80])),
            Err(VqError::Dimension(_))
        ));
        assert!(matches!(
            m.decode(&Tensor::zeros([1, 64, 32, 44])),
            Err(VqError::Dimension(_))
        ));
    }

    #[test]
    fn cast_preserves_parameters() {
        let m = small(Case::Two);
        let d: VqVae<f64> = m.cast();
        let x = Tensor::<f32>::full([1, 1, 64, 88], 0.3);
        let a = m.encode(&x).unwrap();
        let b = d.encode(&x.cast()).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((*u as f64 - v).abs() < 1e-4);
        }
    }
}
