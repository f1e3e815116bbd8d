//! 2-d convolution kernels: forward, backward, and the transposed variant
//! the autoencoder decoder needs.
//!
//! All paths lower to im2col + gemm. Samples of a batch are independent and
//! processed in parallel; per-sample results are reduced in index order so
//! output is bit-deterministic.

use rayon::prelude::*;

use super::{Elem, Result, Tensor, TensorError};

fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if kernel == 0 || stride == 0 {
        return Err(TensorError::Invalid(
            "kernel and stride extents must be positive".into(),
        ));
    }
    if kernel > padded {
        return Err(TensorError::Invalid(format!(
            "kernel extent {kernel} exceeds padded input extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Lower one padded sample (C×Hp×Wp) to a (C·Kh·Kw) × (Oh·Ow) column matrix.
fn im2col<E: Elem>(
    sample: &[E],
    c: usize,
    hp: usize,
    wp: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    oh: usize,
    ow: usize,
) -> Vec<E> {
    let mut cols = vec![E::zero(); c * kh * kw * oh * ow];
    let spatial = oh * ow;
    for ch in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ch * kh + ky) * kw + kx) * spatial;
                for y in 0..oh {
                    let src = ch * hp * wp + (y * sh + ky) * wp + kx;
                    let dst = row + y * ow;
                    for x in 0..ow {
                        cols[dst + x] = sample[src + x * sw];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add a column matrix back into a padded sample buffer (inverse of
/// the im2col gather).
fn col2im<E: Elem>(
    cols: &[E],
    c: usize,
    hp: usize,
    wp: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    oh: usize,
    ow: usize,
) -> Vec<E> {
    let mut sample = vec![E::zero(); c * hp * wp];
    let spatial = oh * ow;
    for ch in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ch * kh + ky) * kw + kx) * spatial;
                for y in 0..oh {
                    let dst = ch * hp * wp + (y * sh + ky) * wp + kx;
                    let src = row + y * ow;
                    for x in 0..ow {
                        let d = dst + x * sw;
                        sample[d] = sample[d] + cols[src + x];
                    }
                }
            }
        }
    }
    sample
}

fn pad_sample<E: Elem>(sample: &[E], c: usize, h: usize, w: usize, ph: usize, pw: usize) -> Vec<E> {
    if ph == 0 && pw == 0 {
        return sample.to_vec();
    }
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let mut out = vec![E::zero(); c * hp * wp];
    for ch in 0..c {
        for y in 0..h {
            let src = ch * h * w + y * w;
            let dst = ch * hp * wp + (y + ph) * wp + pw;
            out[dst..dst + w].copy_from_slice(&sample[src..src + w]);
        }
    }
    out
}

fn unpad_sample<E: Elem>(
    padded: &[E],
    c: usize,
    hp: usize,
    wp: usize,
    ph: usize,
    pw: usize,
) -> Vec<E> {
    if ph == 0 && pw == 0 {
        return padded.to_vec();
    }
    let (h, w) = (hp - 2 * ph, wp - 2 * pw);
    let mut out = vec![E::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let src = ch * hp * wp + (y + ph) * wp + pw;
            let dst = ch * h * w + y * w;
            out[dst..dst + w].copy_from_slice(&padded[src..src + w]);
        }
    }
    out
}

/// Cross-correlation of an NCHW batch with OIKhKw weights.
pub fn conv2d<E: Elem>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor<E>> {
    let [n, c, h, w] = input.dims4("conv2d input")?;
    let [o, ci, kh, kw] = weight.dims4("conv2d weight")?;
    if ci != c {
        return Err(TensorError::DimMismatch {
            context: "conv2d input channels vs weight input channels",
            lhs: c,
            rhs: ci,
        });
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(TensorError::ShapeMismatch {
                context: "conv2d bias",
                expected: vec![o],
                got: b.shape().to_vec(),
            });
        }
    }
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    let oh = out_extent(h, kh, sh, ph)?;
    let ow = out_extent(w, kw, sw, pw)?;
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let spatial = oh * ow;
    let ck = c * kh * kw;

    let samples: Vec<Vec<E>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sample = &input.data()[i * c * h * w..(i + 1) * c * h * w];
            let padded = pad_sample(sample, c, h, w, ph, pw);
            let cols = im2col(&padded, c, hp, wp, kh, kw, sh, sw, oh, ow);
            let mut out = match bias {
                Some(b) => {
                    let mut buf = vec![E::zero(); o * spatial];
                    for (oc, chunk) in buf.chunks_mut(spatial).enumerate() {
                        chunk.fill(b.data()[oc]);
                    }
                    buf
                }
                None => vec![E::zero(); o * spatial],
            };
            E::gemm(o, ck, spatial, weight.data(), &cols, &mut out);
            out
        })
        .collect();

    let mut data = Vec::with_capacity(n * o * spatial);
    for s in samples {
        data.extend_from_slice(&s);
    }
    Tensor::from_vec(&[n, o, oh, ow], data)
}

/// Gradients of `sum(grad_out ⊙ conv2d(input, weight, bias))` w.r.t. input,
/// weight, and bias.
pub fn conv2d_backward<E: Elem>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    grad_out: &Tensor<E>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let [n, c, h, w] = input.dims4("conv2d_backward input")?;
    let [o, ci, kh, kw] = weight.dims4("conv2d_backward weight")?;
    if ci != c {
        return Err(TensorError::DimMismatch {
            context: "conv2d_backward input channels vs weight input channels",
            lhs: c,
            rhs: ci,
        });
    }
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    let oh = out_extent(h, kh, sh, ph)?;
    let ow = out_extent(w, kw, sw, pw)?;
    if grad_out.shape() != [n, o, oh, ow] {
        return Err(TensorError::ShapeMismatch {
            context: "conv2d_backward grad_out",
            expected: vec![n, o, oh, ow],
            got: grad_out.shape().to_vec(),
        });
    }
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let spatial = oh * ow;
    let ck = c * kh * kw;
    let weight_t = weight.reshape(&[o, ck])?.transpose2d()?;

    let per_sample: Vec<(Vec<E>, Vec<E>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sample = &input.data()[i * c * h * w..(i + 1) * c * h * w];
            let grad = &grad_out.data()[i * o * spatial..(i + 1) * o * spatial];
            let padded = pad_sample(sample, c, h, w, ph, pw);
            let cols = im2col(&padded, c, hp, wp, kh, kw, sh, sw, oh, ow);

            // grad_weight_i = G · colsᵀ via gemm on transposed cols
            let mut gw = vec![E::zero(); o * ck];
            let mut cols_t = vec![E::zero(); spatial * ck];
            for r in 0..ck {
                for s in 0..spatial {
                    cols_t[s * ck + r] = cols[r * spatial + s];
                }
            }
            E::gemm(o, spatial, ck, grad, &cols_t, &mut gw);

            // grad_input_i = col2im(Wᵀ · G)
            let mut gcols = vec![E::zero(); ck * spatial];
            E::gemm(ck, o, spatial, weight_t.data(), grad, &mut gcols);
            let gpadded = col2im(&gcols, c, hp, wp, kh, kw, sh, sw, oh, ow);
            let gi = unpad_sample(&gpadded, c, hp, wp, ph, pw);
            (gi, gw)
        })
        .collect();

    let mut grad_input = Vec::with_capacity(n * c * h * w);
    let mut grad_weight = vec![E::zero(); o * ck];
    for (gi, gw) in per_sample {
        grad_input.extend_from_slice(&gi);
        for (a, b) in grad_weight.iter_mut().zip(gw) {
            *a = *a + b;
        }
    }
    let mut grad_bias = vec![E::zero(); o];
    for i in 0..n {
        for oc in 0..o {
            let base = (i * o + oc) * spatial;
            for s in 0..spatial {
                grad_bias[oc] = grad_bias[oc] + grad_out.data()[base + s];
            }
        }
    }

    Ok((
        Tensor::from_vec(&[n, c, h, w], grad_input)?,
        Tensor::from_vec(&[o, c, kh, kw], grad_weight)?,
        Tensor::from_vec(&[o], grad_bias)?,
    ))
}

/// Transposed convolution (fractionally-strided). Weight layout is
/// IOKhKw (input channels first), matching the adjoint of [`conv2d`].
/// Output extent is `(H−1)·s − 2p + K + output_padding`.
pub fn conv_transpose2d<E: Elem>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    stride: (usize, usize),
    padding: (usize, usize),
    output_padding: (usize, usize),
) -> Result<Tensor<E>> {
    let [n, c, h, w] = input.dims4("conv_transpose2d input")?;
    let [ci, o, kh, kw] = weight.dims4("conv_transpose2d weight")?;
    if ci != c {
        return Err(TensorError::DimMismatch {
            context: "conv_transpose2d input channels vs weight input channels",
            lhs: c,
            rhs: ci,
        });
    }
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    let (oph, opw) = output_padding;
    if oph >= sh || opw >= sw {
        return Err(TensorError::Invalid(format!(
            "output padding ({oph},{opw}) must be smaller than stride ({sh},{sw})"
        )));
    }
    let full_h = (h - 1) * sh + kh + oph;
    let full_w = (w - 1) * sw + kw + opw;
    if full_h < 2 * ph + 1 || full_w < 2 * pw + 1 {
        return Err(TensorError::Invalid(format!(
            "padding ({ph},{pw}) swallows the whole {full_h}x{full_w} output"
        )));
    }
    let oh = full_h - 2 * ph;
    let ow = full_w - 2 * pw;
    let spatial_in = h * w;
    let ok = o * kh * kw;
    // weightᵀ: (O·Kh·Kw) × I from the I × (O·Kh·Kw) view
    let weight_t = weight.reshape(&[c, ok])?.transpose2d()?;

    let samples: Vec<Vec<E>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sample = &input.data()[i * c * spatial_in..(i + 1) * c * spatial_in];
            let mut cols = vec![E::zero(); ok * spatial_in];
            E::gemm(ok, c, spatial_in, weight_t.data(), sample, &mut cols);
            let full = col2im(&cols, o, full_h, full_w, kh, kw, sh, sw, h, w);
            // crop the symmetric padding; output padding stays (extra bottom/right)
            let mut out = crop_tl(&full, o, full_h, full_w, ph, pw, oh, ow);
            if let Some(b) = bias {
                for (oc, chunk) in out.chunks_mut(oh * ow).enumerate() {
                    let bv = b.data()[oc];
                    for v in chunk.iter_mut() {
                        *v = *v + bv;
                    }
                }
            }
            out
        })
        .collect();

    let mut data = Vec::with_capacity(n * o * oh * ow);
    for s in samples {
        data.extend_from_slice(&s);
    }
    Tensor::from_vec(&[n, o, oh, ow], data)
}

fn crop_tl<E: Elem>(
    full: &[E],
    c: usize,
    fh: usize,
    fw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
) -> Vec<E> {
    let mut out = vec![E::zero(); c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            let src = ch * fh * fw + (y + ph) * fw + pw;
            let dst = ch * oh * ow + y * ow;
            out[dst..dst + ow].copy_from_slice(&full[src..src + ow]);
        }
    }
    out
}

/// Gradients for [`conv_transpose2d`]. The input gradient is a plain
/// forward convolution of `grad_out`; the weight gradient reuses the
/// conv2d weight-gradient kernel with the roles of input and cotangent
/// swapped.
pub fn conv_transpose2d_backward<E: Elem>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    grad_out: &Tensor<E>,
    stride: (usize, usize),
    padding: (usize, usize),
    output_padding: (usize, usize),
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let [n, c, h, w] = input.dims4("conv_transpose2d_backward input")?;
    let [ci, o, kh, kw] = weight.dims4("conv_transpose2d_backward weight")?;
    if ci != c {
        return Err(TensorError::DimMismatch {
            context: "conv_transpose2d_backward channels",
            lhs: c,
            rhs: ci,
        });
    }
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    let (oph, opw) = output_padding;
    let oh = (h - 1) * sh + kh + oph - 2 * ph;
    let ow = (w - 1) * sw + kw + opw - 2 * pw;
    if grad_out.shape() != [n, o, oh, ow] {
        return Err(TensorError::ShapeMismatch {
            context: "conv_transpose2d_backward grad_out",
            expected: vec![n, o, oh, ow],
            got: grad_out.shape().to_vec(),
        });
    }

    // grad_input: correlate grad_out with the same weights (IOKhKw read as
    // an OIKhKw conv weight with output channels = I).
    let grad_input = conv2d(grad_out, weight, None, stride, padding)?;
    if grad_input.shape() != [n, c, h, w] {
        return Err(TensorError::ShapeMismatch {
            context: "conv_transpose2d_backward derived grad_input",
            expected: vec![n, c, h, w],
            got: grad_input.shape().to_vec(),
        });
    }

    // grad_weight[i,o,·,·]: conv2d weight-gradient with input := grad_out and
    // cotangent := the transpose-conv input.
    let (_, grad_weight, _) = conv2d_backward_weight_only(grad_out, input, stride, padding, (kh, kw))?;

    let mut grad_bias = vec![E::zero(); o];
    let spatial = oh * ow;
    for i in 0..n {
        for oc in 0..o {
            let base = (i * o + oc) * spatial;
            for s in 0..spatial {
                grad_bias[oc] = grad_bias[oc] + grad_out.data()[base + s];
            }
        }
    }

    Ok((grad_input, grad_weight, Tensor::from_vec(&[o], grad_bias)?))
}

/// Weight gradient of a conv whose input is `input` and whose output
/// cotangent is `grad`; returns (unused, O×C×Kh×Kw, unused) shaped
/// `grad.channels × input.channels × kh × kw`.
fn conv2d_backward_weight_only<E: Elem>(
    input: &Tensor<E>,
    grad: &Tensor<E>,
    stride: (usize, usize),
    padding: (usize, usize),
    kernel: (usize, usize),
) -> Result<((), Tensor<E>, ())> {
    let [n, c, h, w] = input.dims4("weight-grad input")?;
    let [n2, o, gh, gw_] = grad.dims4("weight-grad cotangent")?;
    if n != n2 {
        return Err(TensorError::DimMismatch {
            context: "weight-grad batch",
            lhs: n,
            rhs: n2,
        });
    }
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let spatial = gh * gw_;
    let ck = c * kh * kw;

    let per_sample: Vec<Vec<E>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sample = &input.data()[i * c * h * w..(i + 1) * c * h * w];
            let g = &grad.data()[i * o * spatial..(i + 1) * o * spatial];
            let padded = pad_sample(sample, c, h, w, ph, pw);
            let cols = im2col(&padded, c, hp, wp, kh, kw, sh, sw, gh, gw_);
            let mut cols_t = vec![E::zero(); spatial * ck];
            for r in 0..ck {
                for s in 0..spatial {
                    cols_t[s * ck + r] = cols[r * spatial + s];
                }
            }
            let mut gwv = vec![E::zero(); o * ck];
            E::gemm(o, spatial, ck, g, &cols_t, &mut gwv);
            gwv
        })
        .collect();

    let mut acc = vec![E::zero(); o * ck];
    for s in per_sample {
        for (a, b) in acc.iter_mut().zip(s) {
            *a = *a + b;
        }
    }
    Ok(((), Tensor::from_vec(&[o, c, kh, kw], acc)?, ()))
}
