//! 2-D convolution (cross-correlation) and its transpose via im2col + GEMM.
//!
//! Kernel layouts follow the usual convention: `conv2d` takes
//! `[out, in, kH, kW]`, `conv_transpose2d` takes `[in, out, kH, kW]`, so the
//! same kernel tensor makes the two operators adjoint.

use crate::error::{dim_err, Result};
use crate::ops::matmul::{gemm, MatMut, MatRef};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Shape bookkeeping of a forward convolution `[C, H, W] -> [O, OH, OW]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return dim_err("convolution stride must be >= 1");
        }
        if kh > in_h + 2 * pad || kw > in_w + 2 * pad {
            return dim_err(format!(
                "kernel {kh}x{kw} larger than padded input {}x{}",
                in_h + 2 * pad,
                in_w + 2 * pad
            ));
        }
        Ok(Self {
            in_c,
            in_h,
            in_w,
            out_c,
            kh,
            kw,
            stride,
            pad,
            out_h: (in_h + 2 * pad - kh) / stride + 1,
            out_w: (in_w + 2 * pad - kw) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }
}

/// Unfolds one `[C, H, W]` sample into a `[C*kH*kW, OH*OW]` patch matrix.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry, col: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.in_c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let seg = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src = &x[(c * g.in_h + iy as usize) * g.in_w..][..g.in_w];
                    for (ox, v) in seg.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.in_w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch matrix back into a `[C, H, W]` buffer.
fn col2im<T: Scalar>(col: &[T], g: &ConvGeometry, x: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.in_c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut x[(c * g.in_h + iy as usize) * g.in_w..][..g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_geometry<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(usize, ConvGeometry)> {
    let (b, c, h, w) = input.dims4()?;
    let (o, kc, kh, kw) = kernel.dims4()?;
    if kc != c {
        return dim_err(format!(
            "conv2d kernel expects {kc} input channels, input has {c}"
        ));
    }
    Ok((b, ConvGeometry::new(c, h, w, o, kh, kw, stride, pad)?))
}

/// Geometry of the forward convolution whose adjoint is the requested
/// transposed convolution.
fn transpose_geometry<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(usize, ConvGeometry)> {
    let (b, c, h, w) = input.dims4()?;
    let (kc, o, kh, kw) = kernel.dims4()?;
    if kc != c {
        return dim_err(format!(
            "conv_transpose2d kernel expects {kc} input channels, input has {c}"
        ));
    }
    if stride == 0 {
        return dim_err("convolution stride must be >= 1");
    }
    let oh = ((h - 1) * stride + kh)
        .checked_sub(2 * pad)
        .filter(|&v| v > 0);
    let ow = ((w - 1) * stride + kw)
        .checked_sub(2 * pad)
        .filter(|&v| v > 0);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return dim_err("conv_transpose2d padding leaves an empty output");
    };
    let g = ConvGeometry::new(o, oh, ow, c, kh, kw, stride, pad)?;
    debug_assert_eq!((g.out_h, g.out_w), (h, w));
    Ok((b, g))
}

pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (batch, g) = conv_geometry(input, kernel, stride, pad)?;
    let mut out = vec![T::zero(); batch * g.out_len()];
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let k = MatRef::new(kernel.data(), g.out_c, g.col_rows());
    for b in 0..batch {
        im2col(&input.data()[b * g.in_len()..][..g.in_len()], &g, &mut col);
        gemm(
            T::one(),
            k,
            MatRef::new(&col, g.col_rows(), g.col_cols()),
            T::zero(),
            MatMut::new(
                &mut out[b * g.out_len()..][..g.out_len()],
                g.out_c,
                g.col_cols(),
            ),
        );
    }
    Tensor::new([batch, g.out_c, g.out_h, g.out_w], out)
}

/// Returns `(d input, d kernel)`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (batch, g) = conv_geometry(input, kernel, stride, pad)?;
    if grad_out.shape() != [batch, g.out_c, g.out_h, g.out_w] {
        return dim_err(format!(
            "conv2d upstream gradient has shape {:?}",
            grad_out.shape()
        ));
    }
    let mut dx = vec![T::zero(); input.numel()];
    let mut dk = vec![T::zero(); kernel.numel()];
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let k = MatRef::new(kernel.data(), g.out_c, g.col_rows());
    for b in 0..batch {
        let x = &input.data()[b * g.in_len()..][..g.in_len()];
        let dy = MatRef::new(
            &grad_out.data()[b * g.out_len()..][..g.out_len()],
            g.out_c,
            g.col_cols(),
        );
        im2col(x, &g, &mut col);
        gemm(
            T::one(),
            dy,
            MatRef::new(&col, g.col_rows(), g.col_cols()).t(),
            T::one(),
            MatMut::new(&mut dk, g.out_c, g.col_rows()),
        );
        gemm(
            T::one(),
            k.t(),
            dy,
            T::zero(),
            MatMut::new(&mut col, g.col_rows(), g.col_cols()),
        );
        col2im(&col, &g, &mut dx[b * g.in_len()..][..g.in_len()]);
    }
    Ok((
        Tensor::new(input.shape().to_vec(), dx)?,
        Tensor::new(kernel.shape().to_vec(), dk)?,
    ))
}

pub fn conv_transpose2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (batch, g) = transpose_geometry(input, kernel, stride, pad)?;
    // `g` maps the output space back onto the input space.
    let mut out = vec![T::zero(); batch * g.in_len()];
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let k = MatRef::new(kernel.data(), g.out_c, g.col_rows());
    for b in 0..batch {
        let x = MatRef::new(
            &input.data()[b * g.out_len()..][..g.out_len()],
            g.out_c,
            g.col_cols(),
        );
        gemm(
            T::one(),
            k.t(),
            x,
            T::zero(),
            MatMut::new(&mut col, g.col_rows(), g.col_cols()),
        );
        col2im(&col, &g, &mut out[b * g.in_len()..][..g.in_len()]);
    }
    Tensor::new([batch, g.in_c, g.in_h, g.in_w], out)
}

/// Returns `(d input, d kernel)`.
pub fn conv_transpose2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (batch, g) = transpose_geometry(input, kernel, stride, pad)?;
    if grad_out.shape() != [batch, g.in_c, g.in_h, g.in_w] {
        return dim_err(format!(
            "conv_transpose2d upstream gradient has shape {:?}",
            grad_out.shape()
        ));
    }
    let mut dx = vec![T::zero(); input.numel()];
    let mut dk = vec![T::zero(); kernel.numel()];
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let k = MatRef::new(kernel.data(), g.out_c, g.col_rows());
    for b in 0..batch {
        im2col(
            &grad_out.data()[b * g.in_len()..][..g.in_len()],
            &g,
            &mut col,
        );
        let colm = MatRef::new(&col, g.col_rows(), g.col_cols());
        gemm(
            T::one(),
            k,
            colm,
            T::zero(),
            MatMut::new(
                &mut dx[b * g.out_len()..][..g.out_len()],
                g.out_c,
                g.col_cols(),
            ),
        );
        gemm(
            T::one(),
            MatRef::new(
                &input.data()[b * g.out_len()..][..g.out_len()],
                g.out_c,
                g.col_cols(),
            ),
            colm.t(),
            T::one(),
            MatMut::new(&mut dk, g.out_c, g.col_rows()),
        );
    }
    Ok((
        Tensor::new(input.shape().to_vec(), dx)?,
        Tensor::new(kernel.shape().to_vec(), dk)?,
    ))
}

/// Adds a per-channel bias to a `[B, C, H, W]` tensor.
pub fn add_channel_bias<T: Scalar>(x: &mut Tensor<T>, bias: &[T]) -> Result<()> {
    let (_, c, h, w) = x.dims4()?;
    if bias.len() != c {
        return dim_err(format!("bias has {} entries for {c} channels", bias.len()));
    }
    for (i, chunk) in x.data_mut().chunks_mut(h * w).enumerate() {
        let bv = bias[i % c];
        chunk.iter_mut().for_each(|v| *v += bv);
    }
    Ok(())
}

/// Gradient of [`add_channel_bias`] with respect to the bias.
pub fn channel_bias_grad<T: Scalar>(grad_out: &Tensor<T>) -> Result<Vec<T>> {
    let (_, c, h, w) = grad_out.dims4()?;
    let mut g = vec![T::zero(); c];
    for (i, chunk) in grad_out.data().chunks(h * w).enumerate() {
        g[i % c] += chunk.iter().copied().sum::<T>();
    }
    Ok(g)
}
