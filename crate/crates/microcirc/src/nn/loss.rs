//! Cross-entropy (classifier) and mean-squared-error (autoencoder) losses,
//! each returning the scalar loss with the gradient w.r.t. its prediction.

use crate::tensor::{Elem, Tensor};

use super::{NnError, Result};

/// Mean over the batch of −log softmax(logits)[target], stabilized with
/// log-sum-exp. The gradient is (softmax − onehot)/N.
pub fn cross_entropy<E: Elem>(logits: &Tensor<E>, targets: &[usize]) -> Result<(E, Tensor<E>)> {
    let [n, k] = logits.dims2("cross_entropy logits")?;
    if targets.len() != n {
        return Err(NnError::Invalid(format!(
            "{} targets for a batch of {n} logits rows",
            targets.len()
        )));
    }
    for &t in targets {
        if t >= k {
            return Err(NnError::BadTarget { class: t, classes: k });
        }
    }
    let inv_n = E::one() / E::from_usize(n);
    let mut loss = E::zero();
    let mut grad = Tensor::zeros(logits.shape());
    for i in 0..n {
        let row = &logits.data()[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
        let mut denom = E::zero();
        for &v in row {
            denom = denom + (v - max).exp();
        }
        let log_denom = denom.ln() + max;
        loss = loss + (log_denom - row[targets[i]]);
        for j in 0..k {
            let p = (row[j] - log_denom).exp();
            let onehot = if j == targets[i] { E::one() } else { E::zero() };
            grad.data_mut()[i * k + j] = (p - onehot) * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

/// Mean over all elements of the squared difference. The gradient is
/// 2(pred − target)/count.
pub fn mse_loss<E: Elem>(pred: &Tensor<E>, target: &Tensor<E>) -> Result<(E, Tensor<E>)> {
    if pred.shape() != target.shape() {
        return Err(NnError::Invalid(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let count = E::from_usize(pred.len());
    let two = E::from_f64(2.0);
    let mut loss = E::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        let d = p - t;
        loss = loss + d * d;
        grad.data_mut()[i] = two * d / count;
    }
    Ok((loss / count, grad))
}
