//! Forward and backward kernels for the operations the network needs.
//!
//! Everything here works on raw [`Tensor`]s; [`crate::Graph`] wires them
//! together for differentiation. Layout is NCHW throughout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Batch-norm epsilon added to the variance.
pub const BN_EPS: f64 = 1e-5;
/// Running statistics update: `new = momentum * old + (1 - momentum) * batch`.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        weight: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (n, c, h, w) = match *input {
            [n, c, h, w] => (n, c, h, w),
            _ => return Err(shape_err("conv2d", format!("input must be NCHW, got {input:?}"))),
        };
        let (out_c, wc, kh, kw) = match *weight {
            [o, c, kh, kw] => (o, c, kh, kw),
            _ => {
                return Err(shape_err(
                    "conv2d",
                    format!("weight must be OxCxkxk, got {weight:?}"),
                ))
            }
        };
        if wc != c {
            return Err(shape_err(
                "conv2d",
                format!("weight input channels {wc} != input channels {c}"),
            ));
        }
        if stride == 0 {
            return Err(shape_err("conv2d", "stride must be positive".into()));
        }
        let oh = (h + 2 * padding) as isize - kh as isize;
        let ow = (w + 2 * padding) as isize - kw as isize;
        if oh < 0 || ow < 0 || kh == 0 || kw == 0 {
            return Err(Error::EmptyOutput {
                op: "conv2d",
                height: if oh < 0 { oh } else { 0 },
                width: if ow < 0 { ow } else { 0 },
            });
        }
        Ok(Self {
            n,
            c,
            h,
            w,
            out_c,
            kh,
            kw,
            stride,
            padding,
            oh: oh as usize / stride + 1,
            ow: ow as usize / stride + 1,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }

    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col<T: Scalar>(g: &ConvGeometry, x: &[T], cols: &mut [T]) {
    let p = g.col_cols();
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let out_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *o = if ix < 0 || ix >= g.w as isize {
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

fn col2im<T: Scalar>(g: &ConvGeometry, cols: &[T], dx: &mut [T]) {
    let p = g.col_cols();
    for ci in 0..g.c {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded cross-correlation.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.out_c] {
            return Err(shape_err(
                "conv2d",
                format!("bias shape {:?} != [{}]", b.shape(), g.out_c),
            ));
        }
    }
    let (k, p) = (g.col_rows(), g.col_cols());
    let in_len = g.c * g.h * g.w;
    let out_len = g.out_c * p;
    let mut out = vec![T::zero(); g.n * out_len];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    for b in 0..g.n {
        let x = &input.data()[b * in_len..(b + 1) * in_len];
        let cols_ref: &[T] = if g.is_pointwise() {
            x
        } else {
            im2col(&g, x, &mut cols);
            &cols
        };
        let y = &mut out[b * out_len..(b + 1) * out_len];
        T::gemm(g.out_c, k, p, weight.data(), false, cols_ref, false, T::zero(), y);
        if let Some(bias) = bias {
            for (o, plane) in y.chunks_mut(p).enumerate() {
                let bo = bias.data()[o];
                plane.iter_mut().for_each(|v| *v += bo);
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.n, g.out_c, g.oh, g.ow], out))
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

/// Gradients of [`conv2d`]; only the requested ones are computed.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
    grad_out: &Tensor<T>,
    want_input: bool,
    want_weight: bool,
    want_bias: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    let (k, p) = (g.col_rows(), g.col_cols());
    let in_len = g.c * g.h * g.w;
    let out_len = g.out_c * p;
    let mut dx = want_input.then(|| vec![T::zero(); input.numel()]);
    let mut dw = want_weight.then(|| vec![T::zero(); weight.numel()]);
    let mut db = want_bias.then(|| vec![T::zero(); g.out_c]);
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * p] };
    for b in 0..g.n {
        let x = &input.data()[b * in_len..(b + 1) * in_len];
        let dy = &grad_out.data()[b * out_len..(b + 1) * out_len];
        if let Some(db) = db.as_mut() {
            for (o, plane) in dy.chunks(p).enumerate() {
                db[o] += plane.iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            let cols_ref: &[T] = if pointwise {
                x
            } else {
                im2col(&g, x, &mut cols);
                &cols
            };
            // dW (O x K) += dY (O x P) . cols^T (P x K)
            T::gemm(g.out_c, p, k, dy, false, cols_ref, true, T::one(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * in_len..(b + 1) * in_len];
            if pointwise {
                // dX (C x P) = W^T (C x O) . dY (O x P)
                T::gemm(k, g.out_c, p, weight.data(), true, dy, false, T::zero(), dxb);
            } else {
                T::gemm(k, g.out_c, p, weight.data(), true, dy, false, T::zero(), &mut cols);
                col2im(&g, &cols, dxb);
            }
        }
    }
    Ok(ConvGrads {
        input: dx.map(|d| Tensor::from_parts(input.shape().to_vec(), d)),
        weight: dw.map(|d| Tensor::from_parts(weight.shape().to_vec(), d)),
        bias: db.map(|d| Tensor::from_parts(vec![g.out_c], d)),
    })
}

/// Output of a batch-norm forward pass with what backward needs.
pub struct BatchNormForward<T> {
    pub output: Tensor<T>,
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
    /// Batch mean and population variance (train mode only).
    pub batch_stats: Option<(Vec<T>, Vec<T>)>,
}

pub fn batch_norm2d<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: Mode,
) -> Result<BatchNormForward<T>> {
    let [n, c, h, w] = input.dims4("batch_norm2d")?;
    for (name, t) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running_mean", running_mean),
        ("running_var", running_var),
    ] {
        if t.shape() != [c] {
            return Err(shape_err(
                "batch_norm2d",
                format!("{name} shape {:?} != [{c}] channels", t.shape()),
            ));
        }
    }
    let hw = h * w;
    let count = n * hw;
    let eps = T::lit(BN_EPS);
    let x = input.data();
    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            let inv_count = T::one() / T::lit(count.max(1) as f64);
            for ch in 0..c {
                let mut s = T::zero();
                for b in 0..n {
                    let off = (b * c + ch) * hw;
                    s += x[off..off + hw].iter().copied().sum::<T>();
                }
                let m = s * inv_count;
                let mut sq = T::zero();
                for b in 0..n {
                    let off = (b * c + ch) * hw;
                    sq += x[off..off + hw].iter().map(|&v| (v - m) * (v - m)).sum::<T>();
                }
                mean[ch] = m;
                var[ch] = sq * inv_count;
            }
            (mean, var)
        }
        Mode::Eval => (running_mean.data().to_vec(), running_var.data().to_vec()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut normalized = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            let (m, is, ga, be) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
            for i in off..off + hw {
                let xh = (x[i] - m) * is;
                normalized[i] = xh;
                out[i] = ga * xh + be;
            }
        }
    }
    let shape = input.shape().to_vec();
    Ok(BatchNormForward {
        output: Tensor::from_parts(shape.clone(), out),
        normalized: Tensor::from_parts(shape, normalized),
        inv_std,
        batch_stats: (mode == Mode::Train).then_some((mean, var)),
    })
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn batch_norm2d_backward<T: Scalar>(
    normalized: &Tensor<T>,
    inv_std: &[T],
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
    mode: Mode,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = normalized.dims4("batch_norm2d").expect("checked in forward");
    let hw = h * w;
    let xh = normalized.data();
    let dy = grad_out.data();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            for i in off..off + hw {
                dbeta[ch] += dy[i];
                dgamma[ch] += dy[i] * xh[i];
            }
        }
    }
    let mut dx = vec![T::zero(); xh.len()];
    let m = T::lit((n * hw).max(1) as f64);
    for ch in 0..c {
        let scale = gamma.data()[ch] * inv_std[ch];
        let (sum_dy, sum_dy_xh) = (dbeta[ch] / m, dgamma[ch] / m);
        for b in 0..n {
            let off = (b * c + ch) * hw;
            for i in off..off + hw {
                dx[i] = match mode {
                    Mode::Train => scale * (dy[i] - sum_dy - xh[i] * sum_dy_xh),
                    Mode::Eval => scale * dy[i],
                };
            }
        }
    }
    (
        Tensor::from_parts(normalized.shape().to_vec(), dx),
        Tensor::from_parts(vec![c], dgamma),
        Tensor::from_parts(vec![c], dbeta),
    )
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Per-pixel softmax across the channel axis, max-subtracted.
pub fn softmax_channels<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4("softmax_channels")?;
    if c == 0 {
        return Err(shape_err("softmax_channels", "needs at least one channel".into()));
    }
    let hw = h * w;
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for b in 0..n {
        let base = b * c * hw;
        for px in 0..hw {
            let mut max = T::neg_infinity();
            for ch in 0..c {
                max = max.max(src[base + ch * hw + px]);
            }
            let mut sum = T::zero();
            for ch in 0..c {
                let e = (src[base + ch * hw + px] - max).exp();
                out[base + ch * hw + px] = e;
                sum += e;
            }
            let inv = T::one() / sum;
            for ch in 0..c {
                out[base + ch * hw + px] *= inv;
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

pub fn softmax_channels_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = y.dims4("softmax_channels").expect("checked in forward");
    let hw = h * w;
    let (yv, gv) = (y.data(), dy.data());
    let mut dx = vec![T::zero(); yv.len()];
    for b in 0..n {
        let base = b * c * hw;
        for px in 0..hw {
            let mut dot = T::zero();
            for ch in 0..c {
                let i = base + ch * hw + px;
                dot += yv[i] * gv[i];
            }
            for ch in 0..c {
                let i = base + ch * hw + px;
                dx[i] = yv[i] * (gv[i] - dot);
            }
        }
    }
    Tensor::from_parts(y.shape().to_vec(), dx)
}

/// 2x2 average pooling with stride 2.
pub fn avg_pool2d<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4("avg_pool2d")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddDimensions {
            op: "avg_pool2d",
            height: h,
            width: w,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    let src = x.data();
    let mut out = vec![T::zero(); n * c * oh * ow];
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            let r0 = &s[2 * oy * w..(2 * oy + 1) * w];
            let r1 = &s[(2 * oy + 1) * w..(2 * oy + 2) * w];
            for ox in 0..ow {
                d[oy * ow + ox] =
                    (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * quarter;
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, c, oh, ow], out))
}

pub fn avg_pool2d_backward<T: Scalar>(input_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let q = T::lit(0.25);
    let mut dx = upsample_raw(dy, h, w);
    dx.iter_mut().for_each(|v| *v *= q);
    Tensor::from_parts(input_shape.to_vec(), dx)
}

fn upsample_raw<T: Scalar>(x: &Tensor<T>, oh: usize, ow: usize) -> Vec<T> {
    let [n, c, h, w] = x.dims4("upsample").expect("NCHW");
    let src = x.data();
    let mut out = vec![T::zero(); n * c * oh * ow];
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            let row = &s[(oy / 2) * w..(oy / 2 + 1) * w];
            for (ox, v) in d[oy * ow..(oy + 1) * ow].iter_mut().enumerate() {
                *v = row[ox / 2];
            }
        }
    }
    out
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample_nearest2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4("upsample_nearest2x")?;
    Ok(Tensor::from_parts(
        vec![n, c, 2 * h, 2 * w],
        upsample_raw(x, 2 * h, 2 * w),
    ))
}

pub fn upsample_nearest2x_backward<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let [n, c, oh, ow] = dy.dims4("upsample_nearest2x").expect("NCHW");
    let (h, w) = (oh / 2, ow / 2);
    let src = dy.data();
    let mut dx = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        let s = &src[plane * oh * ow..(plane + 1) * oh * ow];
        let d = &mut dx[plane * h * w..(plane + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                d[(oy / 2) * w + ox / 2] += s[oy * ow + ox];
            }
        }
    }
    Tensor::from_parts(vec![n, c, h, w], dx)
}

pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c1, h, w] = a.dims4("concat_channels")?;
    let [n2, c2, h2, w2] = b.dims4("concat_channels")?;
    if (n, h, w) != (n2, h2, w2) {
        return Err(shape_err(
            "concat_channels",
            format!("batch/spatial {:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * c1 * hw..(i + 1) * c1 * hw]);
        data.extend_from_slice(&b.data()[i * c2 * hw..(i + 1) * c2 * hw]);
    }
    Ok(Tensor::from_parts(vec![n, c1 + c2, h, w], data))
}

/// Per-channel sum over batch and spatial axes: NxCxHxW -> C.
pub fn sum_channels<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4("sum_channels")?;
    let hw = h * w;
    let mut out = vec![T::zero(); c];
    for b in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            let off = (b * c + ch) * hw;
            *o += x.data()[off..off + hw].iter().copied().sum::<T>();
        }
    }
    Ok(Tensor::from_parts(vec![c], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn conv_scalar_multiply() {
        let y = conv2d(&t(&[1, 1, 1, 1], &[2.0]), &t(&[1, 1, 1, 1], &[3.0]), None, 1, 0).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn conv_identity_kernel_with_padding() {
        let x = Tensor::<f64>::from_fn(&[2, 1, 5, 4], |i| (i as f64 * 0.37).sin());
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let y = conv2d(&x, &t(&[1, 1, 3, 3], &k), None, 1, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_hand_cross_correlation() {
        let y = conv2d(
            &t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]),
            &t(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]),
            None,
            1,
            0,
        )
        .unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn conv_output_size_with_stride() {
        let x = Tensor::<f32>::zeros(&[1, 2, 64, 64]);
        let w = Tensor::<f32>::zeros(&[4, 2, 7, 7]);
        let y = conv2d(&x, &w, None, 2, 3).unwrap();
        assert_eq!(y.shape(), &[1, 4, 32, 32]);
    }

    #[test]
    fn conv_errors() {
        let x = Tensor::<f32>::zeros(&[1, 2, 3, 3]);
        let err = conv2d(&x, &Tensor::zeros(&[1, 3, 3, 3]), None, 1, 0).unwrap_err();
        assert!(format!("{err}").contains("weight input channels 3 != input channels 2"));
        let err = conv2d(&x, &Tensor::zeros(&[1, 2, 5, 5]), None, 1, 0).unwrap_err();
        assert!(matches!(err, Error::EmptyOutput { .. }));
        assert!(conv2d(&x, &Tensor::zeros(&[1, 2, 5, 5]), None, 1, 1).is_ok());
    }

    #[test]
    fn batch_norm_hand_values() {
        // channel values {1, 3}: mean 2, population variance 1
        let x = t(&[2, 1, 1, 1], &[1.0, 3.0]);
        let one = t(&[1], &[1.0]);
        let zero = t(&[1], &[0.0]);
        let out = batch_norm2d(&x, &one, &zero, &zero, &one, Mode::Train).unwrap();
        let s = 1.0 / (1.0 + BN_EPS).sqrt();
        assert!((out.output.data()[0] + s).abs() < 1e-12);
        assert!((out.output.data()[1] - s).abs() < 1e-12);
        let (m, v) = out.batch_stats.unwrap();
        assert_eq!((m[0], v[0]), (2.0, 1.0));
    }

    #[test]
    fn batch_norm_constant_and_annihilated() {
        let x = Tensor::<f64>::full(&[2, 3, 4, 4], 7.5);
        let ones = Tensor::full(&[3], 1.0);
        let zeros = Tensor::zeros(&[3]);
        let out = batch_norm2d(&x, &ones, &zeros, &zeros, &ones, Mode::Train).unwrap();
        assert!(out.output.data().iter().all(|v| v.abs() <= BN_EPS.sqrt()));

        let x = Tensor::<f64>::from_fn(&[2, 3, 4, 4], |i| i as f64);
        let fives = Tensor::full(&[3], 5.0);
        let out = batch_norm2d(&x, &zeros, &fives, &zeros, &ones, Mode::Train).unwrap();
        assert!(out.output.data().iter().all(|&v| v == 5.0));
        assert!(batch_norm2d(&x, &Tensor::zeros(&[2]), &fives, &zeros, &ones, Mode::Eval).is_err());
    }

    #[test]
    fn softmax_hand_values() {
        let x = t(&[1, 3, 1, 1], &[1f64.ln(), 2f64.ln(), 3f64.ln()]);
        let y = softmax_channels(&x).unwrap();
        for (got, want) in y.data().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let y = softmax_channels(&t(&[1, 3, 1, 1], &[0.0; 3])).unwrap();
        assert!(y.data().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_shift_invariant_and_stable() {
        let x = t(&[1, 3, 1, 2], &[1.0, 5.0, -2.0, 0.5, 3.0, 2.0]);
        let shifted = x.map(|v| v + 1000.0);
        let (a, b) = (softmax_channels(&x).unwrap(), softmax_channels(&shifted).unwrap());
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn pooling_hand_values() {
        let y = avg_pool2d(&t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[2.5]);
        let x = Tensor::<f64>::from_fn(&[1, 1, 4, 4], |i| i as f64);
        assert_eq!(avg_pool2d(&x).unwrap().data(), &[2.5, 4.5, 10.5, 12.5]);
        assert!(matches!(
            avg_pool2d(&Tensor::<f64>::zeros(&[1, 1, 3, 4])),
            Err(Error::OddDimensions { .. })
        ));
    }

    #[test]
    fn upsample_replicates_and_pool_inverts() {
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let up = upsample_nearest2x(&x).unwrap();
        assert_eq!(
            up.data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        assert_eq!(avg_pool2d(&up).unwrap(), x);
    }

    #[test]
    fn concat_ordering_and_empty() {
        let a = Tensor::<f32>::from_fn(&[1, 3, 8, 8], |i| i as f32);
        let b = Tensor::<f32>::from_fn(&[1, 5, 8, 8], |i| -(i as f32));
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.shape(), &[1, 8, 8, 8]);
        assert_eq!(y.slice_channels(0, 3).unwrap(), a);
        assert_eq!(y.slice_channels(3, 8).unwrap(), b);
        let empty = Tensor::<f32>::zeros(&[1, 0, 8, 8]);
        assert_eq!(concat_channels(&a, &empty).unwrap(), a);
        assert!(concat_channels(&a, &Tensor::zeros(&[1, 1, 4, 8])).is_err());
    }
}
