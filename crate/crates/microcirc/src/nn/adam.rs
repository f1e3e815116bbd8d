//! Bias-corrected Adam.

use crate::tensor::{Elem, Tensor};

use super::{NnError, ParamGrad, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer. Moment slots are created lazily on the first step and
/// keyed by parameter order, which must stay stable across steps.
pub struct Adam<E: Elem> {
    config: AdamConfig,
    step_count: u64,
    moments: Vec<(Tensor<E>, Tensor<E>)>,
}

impl<E: Elem> Adam<E> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// θ ← θ − lr · m̂ / (√v̂ + eps), applied to every (param, grad) pair.
    pub fn step(&mut self, params: &mut [ParamGrad<'_, E>]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|(p, _)| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(NnError::Invalid(format!(
                "optimizer tracks {} parameters, step got {}",
                self.moments.len(),
                params.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let beta1 = E::from_f64(self.config.beta1);
        let beta2 = E::from_f64(self.config.beta2);
        let lr = E::from_f64(self.config.lr);
        let eps = E::from_f64(self.config.eps);
        let one = E::one();
        let bc1 = one - beta1.powi(t);
        let bc2 = one - beta2.powi(t);
        for ((param, grad), (m, v)) in params.iter_mut().zip(&mut self.moments) {
            if param.shape() != grad.shape() || param.shape() != m.shape() {
                return Err(NnError::Invalid(format!(
                    "adam shape mismatch: param {:?}, grad {:?}, state {:?}",
                    param.shape(),
                    grad.shape(),
                    m.shape()
                )));
            }
            for i in 0..param.len() {
                let g = grad.data()[i];
                let mi = beta1 * m.data()[i] + (one - beta1) * g;
                let vi = beta2 * v.data()[i] + (one - beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                param.data_mut()[i] = param.data()[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut param = Tensor::<f64>::from_vec(&[2], vec![1.0, -2.0]).unwrap();
        let mut grad = Tensor::zeros(&[2]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [(&mut param, &mut grad)]).unwrap();
        assert_eq!(param.data(), &[1.0, -2.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = 1, v̂ = 1 on the first unit-gradient step, so Δ ≈ −lr
        let mut param = Tensor::<f64>::zeros(&[1]);
        let mut grad = Tensor::full(&[1], 1.0);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        adam.step(&mut [(&mut param, &mut grad)]).unwrap();
        assert!((param.data()[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn constant_gradient_descends_twice() {
        let mut param = Tensor::<f64>::zeros(&[1]);
        let mut adam = Adam::new(AdamConfig::default());
        let mut prev = 0.0;
        for _ in 0..2 {
            let mut grad = Tensor::full(&[1], 1.0);
            adam.step(&mut [(&mut param, &mut grad)]).unwrap();
            assert!(param.data()[0] < prev);
            prev = param.data()[0];
        }
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut param = Tensor::<f64>::from_vec(&[3], vec![0.3, -0.7, 1.1]).unwrap();
        let orig = param.clone();
        let mut grad = Tensor::full(&[3], 0.5);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        });
        adam.step(&mut [(&mut param, &mut grad)]).unwrap();
        assert_eq!(param, orig);
    }

    #[test]
    fn parameter_count_change_rejected() {
        let mut p1 = Tensor::<f64>::zeros(&[1]);
        let mut g1 = Tensor::zeros(&[1]);
        let mut p2 = Tensor::<f64>::zeros(&[1]);
        let mut g2 = Tensor::zeros(&[1]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [(&mut p1, &mut g1)]).unwrap();
        assert!(adam
            .step(&mut [(&mut p1, &mut g1), (&mut p2, &mut g2)])
            .is_err());
    }
}
