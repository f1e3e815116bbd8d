//! Convolution, batch-norm, and fully-connected layers.

use crate::tensor::{conv2d, conv2d_backward, Elem, Tensor};

use super::{NnError, ParamGrad, Result};

#[derive(Debug, Clone)]
pub struct ConvLayer<E: Elem> {
    pub weight: Tensor<E>,
    pub bias: Option<Tensor<E>>,
    pub grad_weight: Tensor<E>,
    pub grad_bias: Option<Tensor<E>>,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    cached_input: Option<Tensor<E>>,
}

impl<E: Elem> ConvLayer<E> {
    pub fn new(
        weight: Tensor<E>,
        bias: Option<Tensor<E>>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        let [_, _, kh, kw] = weight.dims4("conv layer weight")?;
        if kh == 0 || kw == 0 {
            return Err(NnError::Invalid("conv kernel extents must be positive".into()));
        }
        let grad_weight = Tensor::zeros(weight.shape());
        let grad_bias = bias.as_ref().map(|b| Tensor::zeros(b.shape()));
        Ok(Self {
            weight,
            bias,
            grad_weight,
            grad_bias,
            stride,
            padding,
            cached_input: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.padding)?)
    }

    pub fn forward_train(&mut self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let out = self.forward_infer(x)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let x = self.cached_input.as_ref().ok_or(NnError::NoCache)?;
        let (gi, gw, gb) =
            conv2d_backward(x, &self.weight, grad_out, self.stride, self.padding)?;
        self.grad_weight.add_assign(&gw)?;
        if let Some(ref mut acc) = self.grad_bias {
            acc.add_assign(&gb)?;
        }
        Ok(gi)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.data_mut().fill(E::zero());
        if let Some(ref mut b) = self.grad_bias {
            b.data_mut().fill(E::zero());
        }
    }

    pub fn params(&mut self) -> Vec<ParamGrad<'_, E>> {
        let mut out: Vec<ParamGrad<'_, E>> = vec![(&mut self.weight, &mut self.grad_weight)];
        if let (Some(b), Some(gb)) = (self.bias.as_mut(), self.grad_bias.as_mut()) {
            out.push((b, gb));
        }
        out
    }
}

struct BnCache<E: Elem> {
    x_hat: Tensor<E>,
    inv_std: Vec<E>,
}

/// Per-channel batch normalization over NCHW activations. Train mode uses
/// biased batch statistics and updates the running estimates; eval mode
/// uses the running estimates only.
pub struct BatchNormLayer<E: Elem> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    pub grad_gamma: Tensor<E>,
    pub grad_beta: Tensor<E>,
    pub running_mean: Tensor<E>,
    pub running_var: Tensor<E>,
    pub eps: E,
    pub momentum: E,
    cache: Option<BnCache<E>>,
}

impl<E: Elem> BatchNormLayer<E> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], E::one()),
            beta: Tensor::zeros(&[channels]),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], E::one()),
            eps: E::from_f64(1e-5),
            momentum: E::from_f64(0.1),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check_channels(&self, x: &Tensor<E>) -> Result<(usize, usize, usize, usize)> {
        let [n, c, h, w] = x.dims4("batchnorm input")?;
        if c != self.channels() {
            return Err(NnError::Invalid(format!(
                "batchnorm expects {} channels, input has {c}",
                self.channels()
            )));
        }
        Ok((n, c, h, w))
    }

    pub fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (n, c, h, w) = self.check_channels(x)?;
        let spatial = h * w;
        let mut out = Tensor::zeros(x.shape());
        for ch in 0..c {
            let inv_std = E::one() / (self.running_var.data()[ch] + self.eps).sqrt();
            let mean = self.running_mean.data()[ch];
            let g = self.gamma.data()[ch];
            let b = self.beta.data()[ch];
            for i in 0..n {
                let base = (i * c + ch) * spatial;
                for s in 0..spatial {
                    let xv = x.data()[base + s];
                    out.data_mut()[base + s] = (xv - mean) * inv_std * g + b;
                }
            }
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (n, c, h, w) = self.check_channels(x)?;
        let spatial = h * w;
        let count = n * spatial;
        if count < 2 {
            return Err(NnError::DegenerateBatch(count));
        }
        let inv_count = E::one() / E::from_usize(count);
        let mut out = Tensor::zeros(x.shape());
        let mut x_hat = Tensor::zeros(x.shape());
        let mut inv_stds = Vec::with_capacity(c);
        for ch in 0..c {
            let mut mean = E::zero();
            for i in 0..n {
                let base = (i * c + ch) * spatial;
                for s in 0..spatial {
                    mean = mean + x.data()[base + s];
                }
            }
            mean = mean * inv_count;
            let mut var = E::zero();
            for i in 0..n {
                let base = (i * c + ch) * spatial;
                for s in 0..spatial {
                    let d = x.data()[base + s] - mean;
                    var = var + d * d;
                }
            }
            var = var * inv_count; // biased
            let inv_std = E::one() / (var + self.eps).sqrt();
            inv_stds.push(inv_std);
            let g = self.gamma.data()[ch];
            let b = self.beta.data()[ch];
            for i in 0..n {
                let base = (i * c + ch) * spatial;
                for s in 0..spatial {
                    let xh = (x.data()[base + s] - mean) * inv_std;
                    x_hat.data_mut()[base + s] = xh;
                    out.data_mut()[base + s] = xh * g + b;
                }
            }
            let one = E::one();
            self.running_mean.data_mut()[ch] =
                (one - self.momentum) * self.running_mean.data()[ch] + self.momentum * mean;
            self.running_var.data_mut()[ch] =
                (one - self.momentum) * self.running_var.data()[ch] + self.momentum * var;
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std: inv_stds,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let cache = self.cache.as_ref().ok_or(NnError::NoCache)?;
        let [n, c, h, w] = grad_out.dims4("batchnorm cotangent")?;
        if grad_out.shape() != cache.x_hat.shape() {
            return Err(NnError::Invalid(
                "batchnorm cotangent shape differs from cached forward".into(),
            ));
        }
        let spatial = h * w;
        let count = n * spatial;
        let inv_count = E::one() / E::from_usize(count);
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let mut sum_g = E::zero();
            let mut sum_gx = E::zero();
            for i in 0..n {
                let base = (i * c + ch) * spatial;
                for s in 0..spatial {
                    let g = grad_out.data()[base + s];
                    sum_g = sum_g + g;
                    sum_gx = sum_gx + g * cache.x_hat.data()[base + s];
                }
            }
            self.grad_beta.data_mut()[ch] = self.grad_beta.data()[ch] + sum_g;
            self.grad_gamma.data_mut()[ch] = self.grad_gamma.data()[ch] + sum_gx;
            let scale = self.gamma.data()[ch] * cache.inv_std[ch];
            let mean_g = sum_g * inv_count;
            let mean_gx = sum_gx * inv_count;
            for i in 0..n {
                let base = (i * c + ch) * spatial;
                for s in 0..spatial {
                    let g = grad_out.data()[base + s];
                    let xh = cache.x_hat.data()[base + s];
                    grad_in.data_mut()[base + s] = scale * (g - mean_g - xh * mean_gx);
                }
            }
        }
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.data_mut().fill(E::zero());
        self.grad_beta.data_mut().fill(E::zero());
    }

    pub fn params(&mut self) -> Vec<ParamGrad<'_, E>> {
        vec![
            (&mut self.gamma, &mut self.grad_gamma),
            (&mut self.beta, &mut self.grad_beta),
        ]
    }
}

pub struct LinearLayer<E: Elem> {
    pub weight: Tensor<E>, // OutF × InF
    pub bias: Tensor<E>,
    pub grad_weight: Tensor<E>,
    pub grad_bias: Tensor<E>,
    cached_input: Option<Tensor<E>>,
}

impl<E: Elem> LinearLayer<E> {
    pub fn new(weight: Tensor<E>, bias: Tensor<E>) -> Result<Self> {
        let [out_f, _] = weight.dims2("linear weight")?;
        if bias.shape() != [out_f] {
            return Err(NnError::Invalid(format!(
                "linear bias shape {:?} does not match {out_f} output features",
                bias.shape()
            )));
        }
        let grad_weight = Tensor::zeros(weight.shape());
        let grad_bias = Tensor::zeros(bias.shape());
        Ok(Self {
            weight,
            bias,
            grad_weight,
            grad_bias,
            cached_input: None,
        })
    }

    pub fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let [n, in_f] = x.dims2("linear input")?;
        let [out_f, w_in] = self.weight.dims2("linear weight")?;
        if in_f != w_in {
            return Err(NnError::Invalid(format!(
                "linear expects {w_in} input features, got {in_f}"
            )));
        }
        let mut out = self.weight.transpose2d()?;
        out = x.matmul(&out)?;
        for i in 0..n {
            for j in 0..out_f {
                let idx = i * out_f + j;
                out.data_mut()[idx] = out.data()[idx] + self.bias.data()[j];
            }
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let out = self.forward_infer(x)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let x = self.cached_input.as_ref().ok_or(NnError::NoCache)?;
        let gw = grad_out.transpose2d()?.matmul(x)?;
        self.grad_weight.add_assign(&gw)?;
        let gb = grad_out.sum_axis(0)?;
        self.grad_bias.add_assign(&gb)?;
        Ok(grad_out.matmul(&self.weight)?)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.data_mut().fill(E::zero());
        self.grad_bias.data_mut().fill(E::zero());
    }

    pub fn params(&mut self) -> Vec<ParamGrad<'_, E>> {
        vec![
            (&mut self.weight, &mut self.grad_weight),
            (&mut self.bias, &mut self.grad_bias),
        ]
    }
}


/// Transposed convolution layer (IOKhKw weights), the decoder counterpart
/// of [`ConvLayer`].
pub struct ConvTransposeLayer<E: Elem> {
    pub weight: Tensor<E>,
    pub bias: Option<Tensor<E>>,
    pub grad_weight: Tensor<E>,
    pub grad_bias: Option<Tensor<E>>,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub output_padding: (usize, usize),
    cached_input: Option<Tensor<E>>,
}

impl<E: Elem> ConvTransposeLayer<E> {
    pub fn new(
        weight: Tensor<E>,
        bias: Option<Tensor<E>>,
        stride: (usize, usize),
        padding: (usize, usize),
        output_padding: (usize, usize),
    ) -> Result<Self> {
        weight.dims4("conv transpose layer weight")?;
        let grad_weight = Tensor::zeros(weight.shape());
        let grad_bias = bias.as_ref().map(|b| Tensor::zeros(b.shape()));
        Ok(Self {
            weight,
            bias,
            grad_weight,
            grad_bias,
            stride,
            padding,
            output_padding,
            cached_input: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(crate::tensor::conv_transpose2d(
            x,
            &self.weight,
            self.bias.as_ref(),
            self.stride,
            self.padding,
            self.output_padding,
        )?)
    }

    pub fn forward_train(&mut self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let out = self.forward_infer(x)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let x = self.cached_input.as_ref().ok_or(NnError::NoCache)?;
        let (gi, gw, gb) = crate::tensor::conv_transpose2d_backward(
            x,
            &self.weight,
            grad_out,
            self.stride,
            self.padding,
            self.output_padding,
        )?;
        self.grad_weight.add_assign(&gw)?;
        if let Some(ref mut acc) = self.grad_bias {
            acc.add_assign(&gb)?;
        }
        Ok(gi)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.data_mut().fill(E::zero());
        if let Some(ref mut b) = self.grad_bias {
            b.data_mut().fill(E::zero());
        }
    }

    pub fn params(&mut self) -> Vec<ParamGrad<'_, E>> {
        let mut out: Vec<ParamGrad<'_, E>> = vec![(&mut self.weight, &mut self.grad_weight)];
        if let (Some(b), Some(gb)) = (self.bias.as_mut(), self.grad_bias.as_mut()) {
            out.push((b, gb));
        }
        out
    }
}
