//! Plain-text run configuration: one `key = value` per line, `#` comments,
//! unknown keys rejected with the offending line number. Every stage writes
//! the fully-resolved configuration next to its outputs.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: cannot parse value {value:?} for {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Every tunable of every pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Square frame size for synthesis and the classifier.
    pub image_size: usize,
    /// Square frame size for the autoencoder.
    pub ae_image_size: usize,

    pub synth_patients_per_class: usize,
    pub synth_frames_per_patient: usize,
    pub synth_vessels_a: usize,
    pub synth_contrast_a: f64,
    pub synth_vessels_b: usize,
    pub synth_contrast_b: f64,
    pub synth_thickness_min: f64,
    pub synth_thickness_max: f64,
    pub synth_background_mean: f64,
    pub synth_noise_sigma: f64,

    pub split_val_fraction: f64,

    pub cls_epochs: usize,
    pub cls_batch_size: usize,
    pub cls_learning_rate: f64,
    /// Stop early once validation accuracy reaches this value; 0 disables.
    pub cls_stop_at_val_accuracy: f64,

    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_learning_rate: f64,

    pub tsne_perplexity: f64,
    pub tsne_iterations: usize,
    pub tsne_learning_rate: f64,

    pub kmeans_k: usize,
    pub kmeans_restarts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            image_size: 64,
            ae_image_size: 48,
            synth_patients_per_class: 20,
            synth_frames_per_patient: 50,
            synth_vessels_a: 14,
            synth_contrast_a: 0.5,
            synth_vessels_b: 6,
            synth_contrast_b: 0.3,
            synth_thickness_min: 1.5,
            synth_thickness_max: 3.5,
            synth_background_mean: 170.0,
            synth_noise_sigma: 10.0,
            split_val_fraction: 0.3,
            cls_epochs: 5,
            cls_batch_size: 4,
            cls_learning_rate: 1e-3,
            cls_stop_at_val_accuracy: 0.0,
            ae_epochs: 20,
            ae_batch_size: 4,
            ae_learning_rate: 1e-3,
            tsne_perplexity: 30.0,
            tsne_iterations: 500,
            tsne_learning_rate: 200.0,
            kmeans_k: 2,
            kmeans_restarts: 10,
        }
    }
}

macro_rules! config_keys {
    ($($key:literal => $field:ident : $ty:ty),+ $(,)?) => {
        impl RunConfig {
            /// Apply one `key = value` pair; `line` feeds error messages.
            pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = value.trim().parse::<$ty>().map_err(|e| {
                            ConfigError::BadValue {
                                line,
                                key: key.to_string(),
                                value: value.trim().to_string(),
                                reason: e.to_string(),
                            }
                        })?;
                        Ok(())
                    })+
                    _ => Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    }),
                }
            }

            /// Render every key in declaration order.
            pub fn render(&self) -> String {
                let mut out = String::new();
                $(writeln!(out, "{} = {}", $key, self.$field).expect("string write");)+
                out
            }
        }
    };
}

config_keys! {
    "seed" => seed: u64,
    "image_size" => image_size: usize,
    "ae_image_size" => ae_image_size: usize,
    "synth.patients_per_class" => synth_patients_per_class: usize,
    "synth.frames_per_patient" => synth_frames_per_patient: usize,
    "synth.vessels_a" => synth_vessels_a: usize,
    "synth.contrast_a" => synth_contrast_a: f64,
    "synth.vessels_b" => synth_vessels_b: usize,
    "synth.contrast_b" => synth_contrast_b: f64,
    "synth.thickness_min" => synth_thickness_min: f64,
    "synth.thickness_max" => synth_thickness_max: f64,
    "synth.background_mean" => synth_background_mean: f64,
    "synth.noise_sigma" => synth_noise_sigma: f64,
    "split.val_fraction" => split_val_fraction: f64,
    "cls.epochs" => cls_epochs: usize,
    "cls.batch_size" => cls_batch_size: usize,
    "cls.learning_rate" => cls_learning_rate: f64,
    "cls.stop_at_val_accuracy" => cls_stop_at_val_accuracy: f64,
    "ae.epochs" => ae_epochs: usize,
    "ae.batch_size" => ae_batch_size: usize,
    "ae.learning_rate" => ae_learning_rate: f64,
    "tsne.perplexity" => tsne_perplexity: f64,
    "tsne.iterations" => tsne_iterations: usize,
    "tsne.learning_rate" => tsne_learning_rate: f64,
    "kmeans.k" => kmeans_k: usize,
    "kmeans.restarts" => kmeans_restarts: usize,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    /// Apply `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value, line)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Write the fully-resolved configuration next to a stage's outputs.
    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}
