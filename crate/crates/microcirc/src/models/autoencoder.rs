//! Convolutional autoencoder: three stride-2 encoder convs (3→16→32→32)
//! with BN + relu, a flattened bottleneck, and a mirrored decoder of
//! stride-2 transposed convs (32→32→16→3) ending in a sigmoid. No skip
//! connections anywhere; everything flows through the bottleneck.
//!
//! At the 48×48 reference input the bottleneck is 32·6·6 = 1152 features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{init, BatchNormLayer, ConvTransposeLayer, ConvLayer, ParamGrad};
use crate::tensor::{Elem, Tensor};

use super::{ModelError, Result};

/// Bottleneck length at the reference input size.
pub const BOTTLENECK_LEN: usize = 1152;

#[derive(Debug, Clone)]
pub struct AutoencoderConfig {
    pub input_h: usize,
    pub input_w: usize,
    /// Reject non-reference input sizes instead of letting the bottleneck
    /// length drift.
    pub strict: bool,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            input_h: 48,
            input_w: 48,
            strict: false,
        }
    }
}

const ENC_CHANNELS: [usize; 4] = [3, 16, 32, 32];

pub struct AutoencoderModel<E: Elem> {
    pub config: AutoencoderConfig,
    pub enc_convs: Vec<ConvLayer<E>>,
    pub enc_bns: Vec<BatchNormLayer<E>>,
    pub dec_convs: Vec<ConvTransposeLayer<E>>,
    pub dec_bns: Vec<BatchNormLayer<E>>, // after the first two decoder convs
    cache: Option<AeCache<E>>,
}

struct AeCache<E: Elem> {
    enc_pre: Vec<Tensor<E>>,  // encoder BN outputs (relu inputs)
    dec_pre: Vec<Tensor<E>>,  // decoder BN outputs (relu inputs), 2 entries
    output: Tensor<E>,        // sigmoid output
    code_shape: Vec<usize>,
}

impl<E: Elem> AutoencoderModel<E> {
    pub fn new(config: AutoencoderConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc_convs = Vec::new();
        let mut enc_bns = Vec::new();
        for i in 0..3 {
            enc_convs.push(ConvLayer::new(
                init::kaiming_conv(ENC_CHANNELS[i + 1], ENC_CHANNELS[i], 3, 3, &mut rng),
                None,
                (2, 2),
                (1, 1),
            )?);
            enc_bns.push(BatchNormLayer::new(ENC_CHANNELS[i + 1]));
        }
        let mut dec_convs = Vec::new();
        let mut dec_bns = Vec::new();
        for i in 0..3 {
            let (in_ch, out_ch) = (ENC_CHANNELS[3 - i], ENC_CHANNELS[2 - i]);
            // bias only on the final layer; the others feed a BN
            let bias = if i == 2 {
                Some(Tensor::zeros(&[out_ch]))
            } else {
                None
            };
            dec_convs.push(ConvTransposeLayer::new(
                init::kaiming_conv_transpose(in_ch, out_ch, 3, 3, &mut rng),
                bias,
                (2, 2),
                (1, 1),
                (1, 1),
            )?);
            if i < 2 {
                dec_bns.push(BatchNormLayer::new(out_ch));
            }
        }
        Ok(Self {
            config,
            enc_convs,
            enc_bns,
            dec_convs,
            dec_bns,
            cache: None,
        })
    }

    fn check_input(&self, x: &Tensor<E>) -> Result<(usize, usize, usize)> {
        let [n, c, h, w] = x.dims4("autoencoder input")?;
        if c != 3 {
            return Err(ModelError::Invalid(format!(
                "autoencoder expects 3-channel input, got {c}"
            )));
        }
        if h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 {
            return Err(ModelError::Invalid(format!(
                "autoencoder input {h}x{w} must be a positive multiple of 8 so the decoder can mirror the encoder"
            )));
        }
        if self.config.strict && (h != self.config.input_h || w != self.config.input_w) {
            return Err(ModelError::NotReferenceSize {
                expected_h: self.config.input_h,
                expected_w: self.config.input_w,
                h,
                w,
            });
        }
        Ok((n, h, w))
    }

    /// Flattened bottleneck vectors, N × (32·H/8·W/8); 1152 at the
    /// reference size.
    pub fn encode(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (n, _, _) = self.check_input(x)?;
        let mut h = x.clone();
        for (conv, bn) in self.enc_convs.iter().zip(&self.enc_bns) {
            h = bn.forward_infer(&conv.forward_infer(&h)?)?.relu();
        }
        let len = h.len() / n;
        Ok(h.reshape(&[n, len])?)
    }

    /// Inference reconstruction, entries strictly inside (0, 1).
    pub fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (conv, bn) in self.enc_convs.iter().zip(&self.enc_bns) {
            h = bn.forward_infer(&conv.forward_infer(&h)?)?.relu();
        }
        for (i, conv) in self.dec_convs.iter().enumerate() {
            h = conv.forward_infer(&h)?;
            if i < 2 {
                h = self.dec_bns[i].forward_infer(&h)?.relu();
            }
        }
        Ok(h.sigmoid())
    }

    pub fn forward_train(&mut self, x: &Tensor<E>) -> Result<Tensor<E>> {
        self.check_input(x)?;
        let mut enc_pre = Vec::with_capacity(3);
        let mut h = x.clone();
        for (conv, bn) in self.enc_convs.iter_mut().zip(&mut self.enc_bns) {
            let pre = bn.forward_train(&conv.forward_train(&h)?)?;
            h = pre.relu();
            enc_pre.push(pre);
        }
        let code_shape = h.shape().to_vec();
        let mut dec_pre = Vec::with_capacity(2);
        for i in 0..3 {
            h = self.dec_convs[i].forward_train(&h)?;
            if i < 2 {
                let pre = self.dec_bns[i].forward_train(&h)?;
                h = pre.relu();
                dec_pre.push(pre);
            }
        }
        let output = h.sigmoid();
        self.cache = Some(AeCache {
            enc_pre,
            dec_pre,
            output: output.clone(),
            code_shape,
        });
        Ok(output)
    }

    pub fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let cache = self.cache.take().ok_or(crate::nn::NnError::NoCache)?;
        let mut g = cache.output.sigmoid_backward_from_output(grad_out)?;
        for i in (0..3).rev() {
            if i < 2 {
                g = cache.dec_pre[i].relu_backward(&g)?;
                g = self.dec_bns[i].backward(&g)?;
            }
            g = self.dec_convs[i].backward(&g)?;
        }
        if g.shape() != cache.code_shape.as_slice() {
            return Err(ModelError::Invalid(format!(
                "decoder cotangent shape {:?} does not mirror the bottleneck {:?}",
                g.shape(),
                cache.code_shape
            )));
        }
        for i in (0..3).rev() {
            g = cache.enc_pre[i].relu_backward(&g)?;
            g = self.enc_bns[i].backward(&g)?;
            g = self.enc_convs[i].backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for c in &mut self.enc_convs {
            c.zero_grad();
        }
        for b in &mut self.enc_bns {
            b.zero_grad();
        }
        for c in &mut self.dec_convs {
            c.zero_grad();
        }
        for b in &mut self.dec_bns {
            b.zero_grad();
        }
    }

    pub fn params(&mut self) -> Vec<ParamGrad<'_, E>> {
        let mut out = Vec::new();
        for (c, b) in self.enc_convs.iter_mut().zip(&mut self.enc_bns) {
            out.extend(c.params());
            out.extend(b.params());
        }
        for c in &mut self.dec_convs {
            out.extend(c.params());
        }
        for b in &mut self.dec_bns {
            out.extend(b.params());
        }
        out
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<E>)> {
        let mut out: Vec<(String, &Tensor<E>)> = Vec::new();
        for (i, (c, b)) in self.enc_convs.iter().zip(&self.enc_bns).enumerate() {
            out.push((format!("enc{i}.conv.weight"), &c.weight));
            out.push((format!("enc{i}.bn.gamma"), &b.gamma));
            out.push((format!("enc{i}.bn.beta"), &b.beta));
            out.push((format!("enc{i}.bn.running_mean"), &b.running_mean));
            out.push((format!("enc{i}.bn.running_var"), &b.running_var));
        }
        for (i, c) in self.dec_convs.iter().enumerate() {
            out.push((format!("dec{i}.conv.weight"), &c.weight));
            if let Some(bias) = &c.bias {
                out.push((format!("dec{i}.conv.bias"), bias));
            }
        }
        for (i, b) in self.dec_bns.iter().enumerate() {
            out.push((format!("dec{i}.bn.gamma"), &b.gamma));
            out.push((format!("dec{i}.bn.beta"), &b.beta));
            out.push((format!("dec{i}.bn.running_mean"), &b.running_mean));
            out.push((format!("dec{i}.bn.running_var"), &b.running_var));
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<E>)> {
        let mut out: Vec<(String, &mut Tensor<E>)> = Vec::new();
        for (i, (c, b)) in self
            .enc_convs
            .iter_mut()
            .zip(&mut self.enc_bns)
            .enumerate()
        {
            out.push((format!("enc{i}.conv.weight"), &mut c.weight));
            out.push((format!("enc{i}.bn.gamma"), &mut b.gamma));
            out.push((format!("enc{i}.bn.beta"), &mut b.beta));
            out.push((format!("enc{i}.bn.running_mean"), &mut b.running_mean));
            out.push((format!("enc{i}.bn.running_var"), &mut b.running_var));
        }
        for (i, c) in self.dec_convs.iter_mut().enumerate() {
            out.push((format!("dec{i}.conv.weight"), &mut c.weight));
            if let Some(bias) = &mut c.bias {
                out.push((format!("dec{i}.conv.bias"), bias));
            }
        }
        for (i, b) in self.dec_bns.iter_mut().enumerate() {
            out.push((format!("dec{i}.bn.gamma"), &mut b.gamma));
            out.push((format!("dec{i}.bn.beta"), &mut b.beta));
            out.push((format!("dec{i}.bn.running_mean"), &mut b.running_mean));
            out.push((format!("dec{i}.bn.running_var"), &mut b.running_var));
        }
        out
    }
}
