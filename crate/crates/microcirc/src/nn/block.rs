//! Residual block: conv-bn-relu-conv-bn plus a shortcut, relu after the
//! join. Blocks that change channel count or stride carry a 1×1 projection
//! conv on the shortcut; identity blocks must match shapes exactly.

use rand::Rng;

use crate::tensor::{Elem, Tensor};

use super::{init, BatchNormLayer, ConvLayer, NnError, ParamGrad, Result};

pub struct ResidualBlock<E: Elem> {
    pub conv1: ConvLayer<E>,
    pub bn1: BatchNormLayer<E>,
    pub conv2: ConvLayer<E>,
    pub bn2: BatchNormLayer<E>,
    pub projection: Option<ConvLayer<E>>,
    in_channels: usize,
    stride: usize,
    cache: Option<BlockCache<E>>,
}

struct BlockCache<E: Elem> {
    pre1: Tensor<E>, // bn1 output, relu input
    pre2: Tensor<E>, // main + shortcut, final relu input
}

impl<E: Elem> ResidualBlock<E> {
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let needs_projection = in_channels != out_channels || stride != 1;
        let conv1 = ConvLayer::new(
            init::kaiming_conv(out_channels, in_channels, 3, 3, rng),
            None,
            (stride, stride),
            (1, 1),
        )?;
        let conv2 = ConvLayer::new(
            init::kaiming_conv(out_channels, out_channels, 3, 3, rng),
            None,
            (1, 1),
            (1, 1),
        )?;
        let projection = if needs_projection {
            Some(ConvLayer::new(
                init::kaiming_conv(out_channels, in_channels, 1, 1, rng),
                None,
                (stride, stride),
                (0, 0),
            )?)
        } else {
            None
        };
        Ok(Self {
            conv1,
            bn1: BatchNormLayer::new(out_channels),
            conv2,
            bn2: BatchNormLayer::new(out_channels),
            projection,
            in_channels,
            stride,
            cache: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    fn check_input(&self, x: &Tensor<E>) -> Result<()> {
        let [_, c, _, _] = x.dims4("residual block input")?;
        if c != self.in_channels {
            return Err(NnError::Invalid(format!(
                "residual block expects {} channels, input has {c}",
                self.in_channels
            )));
        }
        if self.projection.is_none()
            && (self.in_channels != self.out_channels() || self.stride != 1)
        {
            return Err(NnError::MissingProjection {
                in_ch: self.in_channels,
                out_ch: self.out_channels(),
                stride: self.stride,
            });
        }
        Ok(())
    }

    pub fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        self.check_input(x)?;
        let h = self.bn1.forward_infer(&self.conv1.forward_infer(x)?)?.relu();
        let main = self.bn2.forward_infer(&self.conv2.forward_infer(&h)?)?;
        let shortcut = match &self.projection {
            Some(p) => p.forward_infer(x)?,
            None => x.clone(),
        };
        Ok(main.add(&shortcut)?.relu())
    }

    pub fn forward_train(&mut self, x: &Tensor<E>) -> Result<Tensor<E>> {
        self.check_input(x)?;
        let pre1 = self.bn1.forward_train(&self.conv1.forward_train(x)?)?;
        let h = pre1.relu();
        let main = self.bn2.forward_train(&self.conv2.forward_train(&h)?)?;
        let shortcut = match &mut self.projection {
            Some(p) => p.forward_train(x)?,
            None => x.clone(),
        };
        let pre2 = main.add(&shortcut)?;
        let out = pre2.relu();
        self.cache = Some(BlockCache { pre1, pre2 });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let cache = self.cache.take().ok_or(NnError::NoCache)?;
        let g_join = cache.pre2.relu_backward(grad_out)?;
        let g_main = self.conv2.backward(&self.bn2.backward(&g_join)?)?;
        let g_pre1 = cache.pre1.relu_backward(&g_main)?;
        let g_input_main = self.conv1.backward(&self.bn1.backward(&g_pre1)?)?;
        let g_input_short = match &mut self.projection {
            Some(p) => p.backward(&g_join)?,
            None => g_join,
        };
        Ok(g_input_main.add(&g_input_short)?)
    }

    pub fn zero_grad(&mut self) {
        self.conv1.zero_grad();
        self.bn1.zero_grad();
        self.conv2.zero_grad();
        self.bn2.zero_grad();
        if let Some(p) = &mut self.projection {
            p.zero_grad();
        }
    }

    pub fn params(&mut self) -> Vec<ParamGrad<'_, E>> {
        let mut out = self.conv1.params();
        out.extend(self.bn1.params());
        out.extend(self.conv2.params());
        out.extend(self.bn2.params());
        if let Some(p) = &mut self.projection {
            out.extend(p.params());
        }
        out
    }

    /// Weighted layers in the main path; the projection shortcut is
    /// deliberately excluded from the architecture's layer count.
    pub fn weighted_layer_count(&self) -> usize {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeroed_branch_reduces_to_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut block = ResidualBlock::<f64>::new(4, 4, 1, &mut rng).unwrap();
        block.conv1.weight.data_mut().fill(0.0);
        block.conv2.weight.data_mut().fill(0.0);
        let data: Vec<f64> = (0..4 * 4 * 9).map(|i| (i as f64 * 0.13).sin()).collect();
        let x = Tensor::from_vec(&[4, 4, 3, 3], data).unwrap();
        let y = block.forward_train(&x).unwrap();
        let expected = x.relu();
        for (a, b) in y.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_block_shape_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let block = ResidualBlock::<f32>::new(64, 128, 2, &mut rng).unwrap();
        let x = Tensor::zeros(&[1, 64, 16, 16]);
        let y = block.forward_infer(&x).unwrap();
        assert_eq!(y.shape(), &[1, 128, 8, 8]);
    }

    #[test]
    fn stripping_required_projection_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut block = ResidualBlock::<f32>::new(8, 16, 2, &mut rng).unwrap();
        block.projection = None;
        let x = Tensor::zeros(&[1, 8, 8, 8]);
        assert!(matches!(
            block.forward_infer(&x),
            Err(NnError::MissingProjection { .. })
        ));
    }
}
