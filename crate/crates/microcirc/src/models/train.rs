//! Training loops for the classifier and the autoencoder, plus the
//! checkpoint adapters for both architectures.
//!
//! Iteration order is a pure function of (seed, epoch), so a given seed
//! reproduces the exact metric stream and final weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{cross_entropy, mse_loss, Adam, AdamConfig};
use crate::tensor::{Elem, Tensor};

use super::{
    AutoencoderConfig, AutoencoderModel, Checkpoint, ClassifierConfig, ClassifierModel,
    ModelError, Result,
};

/// One dataset frame with its clinical label and patient identity.
#[derive(Debug, Clone)]
pub struct LabeledFrame<E: Elem> {
    pub image: Tensor<E>, // 3×H×W
    pub label: usize,
    pub patient_id: String,
}

/// A frame stripped of its label; the autoencoder path accepts only this
/// type, so clinical labels cannot leak into unsupervised training.
#[derive(Debug, Clone)]
pub struct UnlabeledFrame<E: Elem> {
    pub image: Tensor<E>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stop once a validation accuracy reaches this value, if set.
    pub stop_at_val_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 4,
            adam: AdamConfig::default(),
            seed: 0,
            stop_at_val_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub monitor_mse: f64,
}

/// Stack equally-shaped 3×H×W images into one N×3×H×W batch.
pub fn stack<E: Elem>(images: &[&Tensor<E>]) -> Result<Tensor<E>> {
    let first = images
        .first()
        .ok_or(ModelError::EmptyDataset)?
        .shape()
        .to_vec();
    let mut shape = vec![images.len()];
    shape.extend_from_slice(&first);
    let mut data = Vec::with_capacity(images.len() * images[0].len());
    for img in images {
        if img.shape() != first.as_slice() {
            return Err(ModelError::Invalid(format!(
                "frame shape {:?} differs from {:?}",
                img.shape(),
                first
            )));
        }
        data.extend_from_slice(img.data());
    }
    Ok(Tensor::from_vec(&shape, data)?)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn check_patient_disjoint<E: Elem>(
    train: &[LabeledFrame<E>],
    val: &[LabeledFrame<E>],
) -> Result<()> {
    let train_patients: std::collections::BTreeSet<&str> =
        train.iter().map(|f| f.patient_id.as_str()).collect();
    let overlap: Vec<String> = val
        .iter()
        .map(|f| f.patient_id.as_str())
        .filter(|p| train_patients.contains(p))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(String::from)
        .collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(ModelError::PatientOverlap(overlap))
    }
}

/// Accuracy of `model` on `frames`, batched inference.
pub fn classifier_accuracy<E: Elem>(
    model: &ClassifierModel<E>,
    frames: &[LabeledFrame<E>],
) -> Result<f64> {
    if frames.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut correct = 0usize;
    for chunk in frames.chunks(16) {
        let images: Vec<&Tensor<E>> = chunk.iter().map(|f| &f.image).collect();
        let batch = stack(&images)?;
        let (logits, _) = model.forward_infer(&batch)?;
        let [_, k] = logits.dims2("logits")?;
        for (i, frame) in chunk.iter().enumerate() {
            let row = &logits.data()[i * k..(i + 1) * k];
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(j, _)| j)
                .unwrap_or(0);
            if pred == frame.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / frames.len() as f64)
}

/// Train the residual classifier. Patient-disjointness of the two cohorts
/// is re-verified here and is a hard failure.
pub fn train_classifier<E: Elem>(
    train: &[LabeledFrame<E>],
    val: &[LabeledFrame<E>],
    model_config: ClassifierConfig,
    config: &TrainConfig,
) -> Result<(ClassifierModel<E>, Vec<ClassifierEpoch>)> {
    if train.is_empty() || val.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    check_patient_disjoint(train, val)?;
    let mut model = ClassifierModel::new(model_config, config.seed)?;
    let mut optimizer = Adam::new(config.adam);
    let mut metrics = Vec::new();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut epoch_rng(config.seed, epoch));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch_idx in order.chunks(config.batch_size) {
            let images: Vec<&Tensor<E>> = batch_idx.iter().map(|&i| &train[i].image).collect();
            let targets: Vec<usize> = batch_idx.iter().map(|&i| train[i].label).collect();
            let batch = stack(&images)?;
            model.zero_grad();
            let (logits, _) = model.forward_train(&batch)?;
            let (loss, grad_logits) = cross_entropy(&logits, &targets)?;
            model.backward(&grad_logits)?;
            optimizer.step(&mut model.params())?;
            loss_sum += loss.to_f64();
            batches += 1;
        }
        let val_accuracy = classifier_accuracy(&model, val)?;
        metrics.push(ClassifierEpoch {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_accuracy,
        });
        if let Some(target) = config.stop_at_val_accuracy {
            if val_accuracy >= target {
                break;
            }
        }
    }
    Ok((model, metrics))
}

/// Train the autoencoder on unlabeled frames. A seeded held-out sample is
/// excluded from training and scored after every epoch to monitor
/// reconstruction quality.
pub fn train_autoencoder<E: Elem>(
    frames: &[UnlabeledFrame<E>],
    model_config: AutoencoderConfig,
    config: &TrainConfig,
) -> Result<(AutoencoderModel<E>, Vec<AutoencoderEpoch>)> {
    if frames.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut model = AutoencoderModel::new(model_config, config.seed)?;
    let mut optimizer = Adam::new(config.adam);

    let monitor_count = (frames.len() / 10).clamp(1, 64).min(frames.len() - 1).max(1);
    let mut indices: Vec<usize> = (0..frames.len()).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x6d6f_6e69_746f_72)); // "monitor"
    let (monitor_idx, train_idx) = indices.split_at(monitor_count.min(frames.len() - 1).max(1));
    let train_idx: Vec<usize> = if train_idx.is_empty() {
        monitor_idx.to_vec()
    } else {
        train_idx.to_vec()
    };

    let mut metrics = Vec::new();
    for epoch in 0..config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut epoch_rng(config.seed, epoch));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch_idx in order.chunks(config.batch_size) {
            let images: Vec<&Tensor<E>> = batch_idx.iter().map(|&i| &frames[i].image).collect();
            let batch = stack(&images)?;
            model.zero_grad();
            let recon = model.forward_train(&batch)?;
            let (loss, grad) = mse_loss(&recon, &batch)?;
            model.backward(&grad)?;
            optimizer.step(&mut model.params())?;
            loss_sum += loss.to_f64();
            batches += 1;
        }
        let monitor_mse = autoencoder_mse(&model, frames, monitor_idx)?;
        if !monitor_mse.is_finite() {
            return Err(ModelError::Invalid(format!(
                "monitor MSE diverged at epoch {epoch}"
            )));
        }
        metrics.push(AutoencoderEpoch {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            monitor_mse,
        });
    }
    Ok((model, metrics))
}

fn autoencoder_mse<E: Elem>(
    model: &AutoencoderModel<E>,
    frames: &[UnlabeledFrame<E>],
    indices: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in indices.chunks(16) {
        let images: Vec<&Tensor<E>> = chunk.iter().map(|&i| &frames[i].image).collect();
        let batch = stack(&images)?;
        let recon = model.forward_infer(&batch)?;
        let (loss, _) = mse_loss(&recon, &batch)?;
        total += loss.to_f64() * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Reconstruction MSE of a trained model over a full frame set.
pub fn autoencoder_eval_mse<E: Elem>(
    model: &AutoencoderModel<E>,
    frames: &[UnlabeledFrame<E>],
) -> Result<f64> {
    if frames.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let all: Vec<usize> = (0..frames.len()).collect();
    autoencoder_mse(model, frames, &all)
}

fn base_descriptor(kind: &str, seed: u64, epoch: usize, final_loss: f64) -> Vec<(String, String)> {
    vec![
        ("kind".into(), kind.into()),
        ("seed".into(), seed.to_string()),
        ("epoch".into(), epoch.to_string()),
        ("final_loss".into(), format!("{final_loss:e}")),
    ]
}

pub fn classifier_to_checkpoint<E: Elem>(
    model: &ClassifierModel<E>,
    seed: u64,
    epoch: usize,
    final_loss: f64,
) -> Checkpoint {
    let mut descriptor = base_descriptor("classifier", seed, epoch, final_loss);
    descriptor.push(("input_h".into(), model.config.input_h.to_string()));
    descriptor.push(("input_w".into(), model.config.input_w.to_string()));
    descriptor.push(("classes".into(), model.config.classes.to_string()));
    Checkpoint::from_named_tensors(descriptor, &model.named_tensors())
}

pub fn classifier_from_checkpoint<E: Elem>(checkpoint: &Checkpoint) -> Result<ClassifierModel<E>> {
    expect_kind(checkpoint, "classifier")?;
    let config = ClassifierConfig {
        input_h: descriptor_usize(checkpoint, "input_h")?,
        input_w: descriptor_usize(checkpoint, "input_w")?,
        classes: descriptor_usize(checkpoint, "classes")?,
    };
    let mut model = ClassifierModel::new(config, 0)?;
    checkpoint.apply_to(&mut model.named_tensors_mut())?;
    Ok(model)
}

pub fn autoencoder_to_checkpoint<E: Elem>(
    model: &AutoencoderModel<E>,
    seed: u64,
    epoch: usize,
    final_loss: f64,
) -> Checkpoint {
    let mut descriptor = base_descriptor("autoencoder", seed, epoch, final_loss);
    descriptor.push(("input_h".into(), model.config.input_h.to_string()));
    descriptor.push(("input_w".into(), model.config.input_w.to_string()));
    descriptor.push(("strict".into(), model.config.strict.to_string()));
    Checkpoint::from_named_tensors(descriptor, &model.named_tensors())
}

pub fn autoencoder_from_checkpoint<E: Elem>(
    checkpoint: &Checkpoint,
) -> Result<AutoencoderModel<E>> {
    expect_kind(checkpoint, "autoencoder")?;
    let config = AutoencoderConfig {
        input_h: descriptor_usize(checkpoint, "input_h")?,
        input_w: descriptor_usize(checkpoint, "input_w")?,
        strict: checkpoint.descriptor_value("strict") == Some("true"),
    };
    let mut model = AutoencoderModel::new(config, 0)?;
    checkpoint.apply_to(&mut model.named_tensors_mut())?;
    Ok(model)
}

fn expect_kind(checkpoint: &Checkpoint, expected: &str) -> Result<()> {
    let got = checkpoint
        .descriptor_value("kind")
        .ok_or_else(|| ModelError::BadDescriptor("missing kind".into()))?;
    if got != expected {
        return Err(ModelError::WrongArchitecture {
            got: got.to_string(),
            expected: expected.to_string(),
        });
    }
    Ok(())
}

fn descriptor_usize(checkpoint: &Checkpoint, key: &str) -> Result<usize> {
    checkpoint
        .descriptor_value(key)
        .ok_or_else(|| ModelError::BadDescriptor(format!("missing {key}")))?
        .parse()
        .map_err(|_| ModelError::BadDescriptor(format!("{key} is not an integer")))
}
