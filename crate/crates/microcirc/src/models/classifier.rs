//! Truncated residual classifier: stem (7×7 conv, BN, relu, 3×3 max pool),
//! two identity blocks at 64 channels, a 64→128 stride-2 stage, global
//! average pooling to a 128-d code, and a linear head to 2 classes.
//!
//! Weighted layers: 1 stem conv + 8 block convs + 1 linear = 10. The
//! projection shortcut of the stride-2 block is excluded from that count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    init, BatchNormLayer, ConvLayer, LinearLayer, ParamGrad, ResidualBlock,
};
use crate::tensor::{
    global_avg_pool, global_avg_pool_backward, max_pool2d, max_pool2d_backward, Elem,
    MaxPoolIndices, Tensor,
};

use super::{ModelError, Result};

/// Length of the code vector produced by the last convolutional stage.
pub const CODE_LEN: usize = 128;

/// Minimum input extent: four stride-2 reductions must leave at least one
/// spatial cell.
pub const MIN_INPUT: usize = 32;

#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_h: 224,
            input_w: 224,
            classes: 2,
        }
    }
}

pub struct ClassifierModel<E: Elem> {
    pub config: ClassifierConfig,
    pub stem_conv: ConvLayer<E>,
    pub stem_bn: BatchNormLayer<E>,
    pub blocks: Vec<ResidualBlock<E>>,
    pub fc: LinearLayer<E>,
    cache: Option<ClassifierCache<E>>,
}

struct ClassifierCache<E: Elem> {
    stem_pre: Tensor<E>, // BN output, relu input
    pool_saved: MaxPoolIndices,
    gap_spatial: (usize, usize),
}

impl<E: Elem> ClassifierModel<E> {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem_conv = ConvLayer::new(
            init::kaiming_conv(64, 3, 7, 7, &mut rng),
            None,
            (2, 2),
            (3, 3),
        )?;
        let blocks = vec![
            ResidualBlock::new(64, 64, 1, &mut rng)?,
            ResidualBlock::new(64, 64, 1, &mut rng)?,
            ResidualBlock::new(64, 128, 2, &mut rng)?,
            ResidualBlock::new(128, 128, 1, &mut rng)?,
        ];
        let fc = LinearLayer::new(
            init::kaiming_linear(config.classes, CODE_LEN, &mut rng),
            Tensor::zeros(&[config.classes]),
        )?;
        Ok(Self {
            config,
            stem_conv,
            stem_bn: BatchNormLayer::new(64),
            blocks,
            fc,
            cache: None,
        })
    }

    fn check_input(&self, x: &Tensor<E>) -> Result<()> {
        let [_, c, h, w] = x.dims4("classifier input")?;
        if c != 3 {
            return Err(ModelError::Invalid(format!(
                "classifier expects 3-channel input, got {c}"
            )));
        }
        if h < MIN_INPUT || w < MIN_INPUT {
            return Err(ModelError::InputTooSmall {
                h,
                w,
                min: MIN_INPUT,
            });
        }
        Ok(())
    }

    /// Inference forward pass: (logits N×classes, codes N×128).
    pub fn forward_infer(&self, x: &Tensor<E>) -> Result<(Tensor<E>, Tensor<E>)> {
        self.check_input(x)?;
        let stem = self
            .stem_bn
            .forward_infer(&self.stem_conv.forward_infer(x)?)?
            .relu();
        let (mut h, _) = max_pool2d(&stem, (3, 3), (2, 2), (1, 1))?;
        for block in &self.blocks {
            h = block.forward_infer(&h)?;
        }
        let codes = global_avg_pool(&h)?;
        let logits = self.fc.forward_infer(&codes)?;
        Ok((logits, codes))
    }

    /// Training forward pass, caching what [`Self::backward`] needs.
    pub fn forward_train(&mut self, x: &Tensor<E>) -> Result<(Tensor<E>, Tensor<E>)> {
        self.check_input(x)?;
        let stem_pre = self
            .stem_bn
            .forward_train(&self.stem_conv.forward_train(x)?)?;
        let stem = stem_pre.relu();
        let (mut h, pool_saved) = max_pool2d(&stem, (3, 3), (2, 2), (1, 1))?;
        for block in &mut self.blocks {
            h = block.forward_train(&h)?;
        }
        let [_, _, gh, gw] = h.dims4("pre-pool activation")?;
        let codes = global_avg_pool(&h)?;
        let logits = self.fc.forward_train(&codes)?;
        self.cache = Some(ClassifierCache {
            stem_pre,
            pool_saved,
            gap_spatial: (gh, gw),
        });
        Ok((logits, codes))
    }

    /// Backpropagate a logits cotangent, accumulating parameter gradients.
    pub fn backward(&mut self, grad_logits: &Tensor<E>) -> Result<Tensor<E>> {
        let cache = self.cache.take().ok_or(crate::nn::NnError::NoCache)?;
        let grad_codes = self.fc.backward(grad_logits)?;
        let mut g = global_avg_pool_backward(&grad_codes, cache.gap_spatial)?;
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        let g = max_pool2d_backward(&g, &cache.pool_saved)?;
        let g = cache.stem_pre.relu_backward(&g)?;
        let g = self.stem_bn.backward(&g)?;
        Ok(self.stem_conv.backward(&g)?)
    }

    pub fn zero_grad(&mut self) {
        self.stem_conv.zero_grad();
        self.stem_bn.zero_grad();
        for block in &mut self.blocks {
            block.zero_grad();
        }
        self.fc.zero_grad();
    }

    pub fn params(&mut self) -> Vec<ParamGrad<'_, E>> {
        let mut out = self.stem_conv.params();
        out.extend(self.stem_bn.params());
        for block in &mut self.blocks {
            out.extend(block.params());
        }
        out.extend(self.fc.params());
        out
    }

    /// Weighted layers under the committed counting rule: stem conv,
    /// two convs per block, the linear head; projection shortcuts excluded.
    pub fn weighted_layer_count(&self) -> usize {
        1 + self
            .blocks
            .iter()
            .map(ResidualBlock::weighted_layer_count)
            .sum::<usize>()
            + 1
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// All persistent tensors in checkpoint order: trainable parameters
    /// plus batch-norm running statistics.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<E>)> {
        let mut out: Vec<(String, &Tensor<E>)> = Vec::new();
        out.push(("stem.conv.weight".into(), &self.stem_conv.weight));
        push_bn(&mut out, "stem.bn", &self.stem_bn);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("block{i}");
            out.push((format!("{p}.conv1.weight"), &b.conv1.weight));
            push_bn(&mut out, &format!("{p}.bn1"), &b.bn1);
            out.push((format!("{p}.conv2.weight"), &b.conv2.weight));
            push_bn(&mut out, &format!("{p}.bn2"), &b.bn2);
            if let Some(proj) = &b.projection {
                out.push((format!("{p}.proj.weight"), &proj.weight));
            }
        }
        out.push(("fc.weight".into(), &self.fc.weight));
        out.push(("fc.bias".into(), &self.fc.bias));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<E>)> {
        let mut out: Vec<(String, &mut Tensor<E>)> = Vec::new();
        out.push(("stem.conv.weight".into(), &mut self.stem_conv.weight));
        push_bn_mut(&mut out, "stem.bn", &mut self.stem_bn);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("block{i}");
            out.push((format!("{p}.conv1.weight"), &mut b.conv1.weight));
            push_bn_mut(&mut out, &format!("{p}.bn1"), &mut b.bn1);
            out.push((format!("{p}.conv2.weight"), &mut b.conv2.weight));
            push_bn_mut(&mut out, &format!("{p}.bn2"), &mut b.bn2);
            if let Some(proj) = &mut b.projection {
                out.push((format!("{p}.proj.weight"), &mut proj.weight));
            }
        }
        out.push(("fc.weight".into(), &mut self.fc.weight));
        out.push(("fc.bias".into(), &mut self.fc.bias));
        out
    }
}

fn push_bn<'a, E: Elem>(
    out: &mut Vec<(String, &'a Tensor<E>)>,
    prefix: &str,
    bn: &'a BatchNormLayer<E>,
) {
    out.push((format!("{prefix}.gamma"), &bn.gamma));
    out.push((format!("{prefix}.beta"), &bn.beta));
    out.push((format!("{prefix}.running_mean"), &bn.running_mean));
    out.push((format!("{prefix}.running_var"), &bn.running_var));
}

fn push_bn_mut<'a, E: Elem>(
    out: &mut Vec<(String, &'a mut Tensor<E>)>,
    prefix: &str,
    bn: &'a mut BatchNormLayer<E>,
) {
    out.push((format!("{prefix}.gamma"), &mut bn.gamma));
    out.push((format!("{prefix}.beta"), &mut bn.beta));
    out.push((format!("{prefix}.running_mean"), &mut bn.running_mean));
    out.push((format!("{prefix}.running_var"), &mut bn.running_var));
}
