//! Max pooling (with recorded argmax indices for the backward pass) and
//! global average pooling.

use super::{Elem, Result, Tensor, TensorError};

/// Flat argmax indices recorded by [`max_pool2d`], one per output cell,
/// addressing the *unpadded* input buffer.
#[derive(Debug, Clone)]
pub struct MaxPoolIndices {
    pub input_shape: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Max pooling over an NCHW batch. Padded cells act as −inf and can never
/// win; ties break toward the lowest flat index.
pub fn max_pool2d<E: Elem>(
    input: &Tensor<E>,
    window: (usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<(Tensor<E>, MaxPoolIndices)> {
    let [n, c, h, w] = input.dims4("max_pool2d input")?;
    let (wh, ww) = window;
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    if wh == 0 || ww == 0 || sh == 0 || sw == 0 {
        return Err(TensorError::Invalid(
            "pool window and stride must be positive".into(),
        ));
    }
    if wh > h + 2 * ph || ww > w + 2 * pw {
        return Err(TensorError::Invalid(format!(
            "pool window {wh}x{ww} exceeds padded input {}x{}",
            h + 2 * ph,
            w + 2 * pw
        )));
    }
    let oh = (h + 2 * ph - wh) / sh + 1;
    let ow = (w + 2 * pw - ww) / sw + 1;
    let mut out = vec![E::zero(); n * c * oh * ow];
    let mut indices = vec![0usize; n * c * oh * ow];
    for nc in 0..n * c {
        let base = nc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best: Option<(E, usize)> = None;
                for ky in 0..wh {
                    let y = (oy * sh + ky) as isize - ph as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kx in 0..ww {
                        let x = (ox * sw + kx) as isize - pw as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        let idx = base + y as usize * w + x as usize;
                        let v = input.data()[idx];
                        match best {
                            Some((bv, _)) if v <= bv => {}
                            _ => best = Some((v, idx)),
                        }
                    }
                }
                let (v, idx) = best.ok_or_else(|| {
                    TensorError::Invalid("pool window covers only padding".into())
                })?;
                let o = nc * oh * ow + oy * ow + ox;
                out[o] = v;
                indices[o] = idx;
            }
        }
    }
    Ok((
        Tensor::from_vec(&[n, c, oh, ow], out)?,
        MaxPoolIndices {
            input_shape: vec![n, c, h, w],
            indices,
        },
    ))
}

/// Routes each output cotangent back to the input cell that won the max.
pub fn max_pool2d_backward<E: Elem>(
    grad_out: &Tensor<E>,
    saved: &MaxPoolIndices,
) -> Result<Tensor<E>> {
    if grad_out.len() != saved.indices.len() {
        return Err(TensorError::DimMismatch {
            context: "max_pool2d_backward cotangent length vs saved indices",
            lhs: grad_out.len(),
            rhs: saved.indices.len(),
        });
    }
    let mut grad_input = Tensor::zeros(&saved.input_shape);
    for (&g, &idx) in grad_out.data().iter().zip(&saved.indices) {
        grad_input.data_mut()[idx] = grad_input.data_mut()[idx] + g;
    }
    Ok(grad_input)
}

/// Average over the spatial dims of an NCHW tensor, giving N×C.
pub fn global_avg_pool<E: Elem>(input: &Tensor<E>) -> Result<Tensor<E>> {
    let [n, c, h, w] = input.dims4("global_avg_pool input")?;
    let spatial = h * w;
    let inv = E::one() / E::from_usize(spatial);
    let mut out = vec![E::zero(); n * c];
    for nc in 0..n * c {
        let base = nc * spatial;
        let mut acc = E::zero();
        for s in 0..spatial {
            acc = acc + input.data()[base + s];
        }
        out[nc] = acc * inv;
    }
    Tensor::from_vec(&[n, c], out)
}

/// Backward of [`global_avg_pool`]: spread each cotangent uniformly over
/// the spatial cells.
pub fn global_avg_pool_backward<E: Elem>(
    grad_out: &Tensor<E>,
    spatial: (usize, usize),
) -> Result<Tensor<E>> {
    let [n, c] = grad_out.dims2("global_avg_pool_backward cotangent")?;
    let (h, w) = spatial;
    let inv = E::one() / E::from_usize(h * w);
    let mut out = vec![E::zero(); n * c * h * w];
    for nc in 0..n * c {
        let g = grad_out.data()[nc] * inv;
        out[nc * h * w..(nc + 1) * h * w].fill(g);
    }
    Tensor::from_vec(&[n, c, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_pool() {
        let input = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, _) = max_pool2d(&input, (2, 2), (2, 2), (0, 0)).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn ties_break_to_lowest_flat_index() {
        let input = Tensor::<f64>::full(&[1, 1, 2, 2], 7.0);
        let (_, saved) = max_pool2d(&input, (2, 2), (2, 2), (0, 0)).unwrap();
        assert_eq!(saved.indices, vec![0]);
    }

    #[test]
    fn backward_routes_to_argmax() {
        let input = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, saved) = max_pool2d(&input, (2, 2), (2, 2), (0, 0)).unwrap();
        let grad = Tensor::from_vec(&[1, 1, 1, 1], vec![5.0]).unwrap();
        let gi = max_pool2d_backward(&grad, &saved).unwrap();
        assert_eq!(gi.data(), &[0.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn global_pool_of_constant_field() {
        let input = Tensor::<f64>::full(&[1, 128, 7, 7], 3.0);
        let out = global_avg_pool(&input).unwrap();
        assert_eq!(out.shape(), &[1, 128]);
        assert!(out.data().iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn padded_pool_ignores_padding() {
        let input = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![-1.0, -2.0, -3.0, -4.0]).unwrap();
        let (out, _) = max_pool2d(&input, (3, 3), (2, 2), (1, 1)).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data(), &[-1.0]);
    }
}
