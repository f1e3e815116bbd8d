//! Pipeline stages behind the CLI subcommands. Every stage reads only its
//! declared upstream artifacts, writes deterministic timestamp-free outputs
//! into its own subdirectory of the run root, and drops the fully-resolved
//! configuration next to them.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::data::{
    generate_corpus, load_and_preprocess, patient_split, write_dataset, Cohort, Label, Manifest,
    SynthParams,
};
use crate::embed::{
    cluster_label_accuracy, kmeans_restarts, tsne, write_assignments_csv, write_embedding_csv,
    write_trace_csv, TsneConfig,
};
use crate::eval::{
    accuracy, auroc, patient_report, precision_recall, write_line_plot_svg, write_scatter_svg,
    FramePrediction, PlotSeries, ScatterGroup,
};
use crate::models::{
    autoencoder_from_checkpoint, autoencoder_to_checkpoint, classifier_from_checkpoint,
    classifier_to_checkpoint, load_checkpoint, save_checkpoint, stack, train_autoencoder,
    train_classifier, AutoencoderConfig, AutoencoderModel, ClassifierConfig, ClassifierModel,
    LabeledFrame, TrainConfig, UnlabeledFrame,
};
use crate::nn::AdamConfig;
use crate::tensor::Tensor;

use super::config::RunConfig;
use super::stage_seed;

/// Canonical artifact locations under one run root.
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn data_manifest(&self) -> PathBuf {
        self.data_dir().join("manifest.csv")
    }
    pub fn split_dir(&self) -> PathBuf {
        self.root.join("split")
    }
    pub fn split_manifest(&self) -> PathBuf {
        self.split_dir().join("manifest.csv")
    }
    pub fn train_cls_dir(&self) -> PathBuf {
        self.root.join("train-cls")
    }
    pub fn classifier_checkpoint(&self) -> PathBuf {
        self.train_cls_dir().join("classifier.ckpt")
    }
    pub fn train_ae_dir(&self) -> PathBuf {
        self.root.join("train-ae")
    }
    pub fn autoencoder_checkpoint(&self) -> PathBuf {
        self.train_ae_dir().join("autoencoder.ckpt")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn tsne_dir(&self) -> PathBuf {
        self.root.join("tsne")
    }
    pub fn kmeans_dir(&self) -> PathBuf {
        self.root.join("kmeans")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "missing required artifact {} (produced by `{produced_by}`)",
            path.display()
        );
    }
    Ok(())
}

fn prepare_stage_dir(dir: &Path, config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    config.write_resolved(&dir.join("config.txt"))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run_synth(config: &RunConfig, out: &Path) -> Result<()> {
    let artifacts = Artifacts::new(out);
    prepare_stage_dir(&artifacts.data_dir(), config)?;
    let base = |vessels, contrast| SynthParams {
        height: config.image_size,
        width: config.image_size,
        vessel_count: vessels,
        thickness_min: config.synth_thickness_min,
        thickness_max: config.synth_thickness_max,
        contrast,
        background_mean: config.synth_background_mean,
        noise_sigma: config.synth_noise_sigma,
        seed: 0, // per-frame seeds assigned by generate_corpus
    };
    let frames = generate_corpus(
        &base(config.synth_vessels_a, config.synth_contrast_a),
        &base(config.synth_vessels_b, config.synth_contrast_b),
        config.synth_frames_per_patient,
        config.synth_patients_per_class,
        stage_seed(config.seed, "synth"),
    )?;
    let manifest = write_dataset(&frames, &artifacts.data_dir())?;
    manifest.write_csv(&artifacts.data_manifest())?;
    Ok(())
}

pub fn run_split(config: &RunConfig, out: &Path) -> Result<()> {
    let artifacts = Artifacts::new(out);
    require(&artifacts.data_manifest(), "synth")?;
    prepare_stage_dir(&artifacts.split_dir(), config)?;
    let manifest = Manifest::read_csv(&artifacts.data_manifest())?;
    let split = patient_split(
        &manifest,
        config.split_val_fraction,
        stage_seed(config.seed, "split"),
    )?;
    split.write_csv(&artifacts.split_manifest())?;
    Ok(())
}

fn load_labeled_cohort(
    artifacts: &Artifacts,
    manifest: &Manifest,
    cohort: Cohort,
    size: usize,
) -> Result<Vec<LabeledFrame<f32>>> {
    let data_dir = artifacts.data_dir();
    manifest
        .cohort_records(cohort)
        .map(|r| {
            let image = load_and_preprocess::<f32>(&data_dir.join(&r.path), size, size)?;
            Ok(LabeledFrame {
                image,
                label: r.label.class_index(),
                patient_id: r.patient_id.clone(),
            })
        })
        .collect()
}

fn load_split(artifacts: &Artifacts) -> Result<Manifest> {
    require(&artifacts.split_manifest(), "split")?;
    Ok(Manifest::read_csv(&artifacts.split_manifest())?)
}

pub fn run_train_cls(config: &RunConfig, out: &Path) -> Result<()> {
    let artifacts = Artifacts::new(out);
    let manifest = load_split(&artifacts)?;
    prepare_stage_dir(&artifacts.train_cls_dir(), config)?;
    let train = load_labeled_cohort(&artifacts, &manifest, Cohort::Train, config.image_size)?;
    let val = load_labeled_cohort(&artifacts, &manifest, Cohort::Val, config.image_size)?;
    let seed = stage_seed(config.seed, "train-cls");
    let train_config = TrainConfig {
        epochs: config.cls_epochs,
        batch_size: config.cls_batch_size,
        adam: AdamConfig {
            lr: config.cls_learning_rate,
            ..AdamConfig::default()
        },
        seed,
        stop_at_val_accuracy: (config.cls_stop_at_val_accuracy > 0.0)
            .then_some(config.cls_stop_at_val_accuracy),
    };
    let model_config = ClassifierConfig {
        input_h: config.image_size,
        input_w: config.image_size,
        classes: 2,
    };
    let (model, metrics) = train_classifier(&train, &val, model_config, &train_config)?;

    let mut csv = String::from("epoch,train_loss,val_accuracy\n");
    for m in &metrics {
        csv.push_str(&format!("{},{},{}\n", m.epoch, m.train_loss, m.val_accuracy));
    }
    write_text(&artifacts.train_cls_dir().join("metrics.csv"), &csv)?;
    let final_loss = metrics.last().map_or(f64::NAN, |m| m.train_loss);
    let checkpoint = classifier_to_checkpoint(&model, seed, metrics.len(), final_loss);
    save_checkpoint(&checkpoint, &artifacts.classifier_checkpoint())?;
    Ok(())
}

pub fn run_train_ae(config: &RunConfig, out: &Path) -> Result<()> {
    let artifacts = Artifacts::new(out);
    let manifest = load_split(&artifacts)?;
    prepare_stage_dir(&artifacts.train_ae_dir(), config)?;
    let data_dir = artifacts.data_dir();
    let frames: Vec<UnlabeledFrame<f32>> = manifest
        .cohort_records(Cohort::Train)
        .map(|r| {
            Ok(UnlabeledFrame {
                image: load_and_preprocess::<f32>(
                    &data_dir.join(&r.path),
                    config.ae_image_size,
                    config.ae_image_size,
                )?,
            })
        })
        .collect::<Result<_>>()?;
    let seed = stage_seed(config.seed, "train-ae");
    let train_config = TrainConfig {
        epochs: config.ae_epochs,
        batch_size: config.ae_batch_size,
        adam: AdamConfig {
            lr: config.ae_learning_rate,
            ..AdamConfig::default()
        },
        seed,
        stop_at_val_accuracy: None,
    };
    let model_config = AutoencoderConfig {
        input_h: config.ae_image_size,
        input_w: config.ae_image_size,
        strict: true,
    };
    let (model, metrics) = train_autoencoder(&frames, model_config, &train_config)?;

    let mut csv = String::from("epoch,train_loss,monitor_mse\n");
    for m in &metrics {
        csv.push_str(&format!("{},{},{}\n", m.epoch, m.train_loss, m.monitor_mse));
    }
    write_text(&artifacts.train_ae_dir().join("metrics.csv"), &csv)?;
    let final_loss = metrics.last().map_or(f64::NAN, |m| m.train_loss);
    let checkpoint = autoencoder_to_checkpoint(&model, seed, metrics.len(), final_loss);
    save_checkpoint(&checkpoint, &artifacts.autoencoder_checkpoint())?;
    Ok(())
}

fn load_classifier(artifacts: &Artifacts) -> Result<ClassifierModel<f32>> {
    require(&artifacts.classifier_checkpoint(), "train-cls")?;
    let checkpoint = load_checkpoint(&artifacts.classifier_checkpoint())?;
    Ok(classifier_from_checkpoint(&checkpoint)?)
}

/// Validation-set septic probabilities, predictions, and 128-d codes.
fn score_validation(
    model: &ClassifierModel<f32>,
    frames: &[LabeledFrame<f32>],
) -> Result<(Vec<f64>, Vec<Label>, Vec<Vec<f64>>)> {
    let mut scores = Vec::with_capacity(frames.len());
    let mut predictions = Vec::with_capacity(frames.len());
    let mut codes = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(16) {
        let images: Vec<&Tensor<f32>> = chunk.iter().map(|f| &f.image).collect();
        let batch = stack(&images)?;
        let (logits, chunk_codes) = model.forward_infer(&batch)?;
        let [_, k] = logits.dims2("logits")?;
        let code_len = chunk_codes.dims2("codes")?[1];
        for i in 0..chunk.len() {
            let row = &logits.data()[i * k..(i + 1) * k];
            // softmax positive-class (septic = index 1) probability
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let exps: Vec<f64> = row.iter().map(|&l| ((l - max) as f64).exp()).collect();
            let total: f64 = exps.iter().sum();
            scores.push(exps[Label::Septic.class_index()] / total);
            let pred = if row[1] > row[0] { Label::Septic } else { Label::NonSeptic };
            predictions.push(pred);
            codes.push(
                chunk_codes.data()[i * code_len..(i + 1) * code_len]
                    .iter()
                    .map(|&v| v as f64)
                    .collect(),
            );
        }
    }
    Ok((scores, predictions, codes))
}

fn index_label(index: usize) -> Label {
    if index == Label::Septic.class_index() {
        Label::Septic
    } else {
        Label::NonSeptic
    }
}

pub fn run_eval(config: &RunConfig, out: &Path) -> Result<()> {
    let artifacts = Artifacts::new(out);
    let manifest = load_split(&artifacts)?;
    let model = load_classifier(&artifacts)?;
    prepare_stage_dir(&artifacts.eval_dir(), config)?;
    let val = load_labeled_cohort(&artifacts, &manifest, Cohort::Val, config.image_size)?;
    let (scores, predictions, _) = score_validation(&model, &val)?;
    let labels: Vec<Label> = val.iter().map(|f| index_label(f.label)).collect();

    let acc = accuracy(&predictions, &labels)?;
    let roc = auroc(&scores, &labels)?;
    let pr = precision_recall(&scores, &labels)?;

    let dir = artifacts.eval_dir();
    let mut metrics = String::from("metric,value\n");
    metrics.push_str(&format!("accuracy,{acc}\n"));
    metrics.push_str(&format!("auroc,{}\n", roc.auroc));
    metrics.push_str(&format!("precision,{}\n", pr.precision_at_half));
    metrics.push_str(&format!("recall,{}\n", pr.recall_at_half));
    write_text(&dir.join("metrics.csv"), &metrics)?;

    let mut roc_csv = String::from("fpr,tpr\n");
    for (fpr, tpr) in &roc.points {
        roc_csv.push_str(&format!("{fpr},{tpr}\n"));
    }
    write_text(&dir.join("roc.csv"), &roc_csv)?;
    let mut pr_csv = String::from("recall,precision\n");
    for (recall, precision) in &pr.points {
        pr_csv.push_str(&format!("{recall},{precision}\n"));
    }
    write_text(&dir.join("pr.csv"), &pr_csv)?;

    let val_records: Vec<_> = manifest.cohort_records(Cohort::Val).collect();
    let mut pred_csv = String::from("path,patient_id,label,score,predicted\n");
    let mut frame_predictions = Vec::new();
    for ((record, &score), &predicted) in val_records.iter().zip(&scores).zip(&predictions) {
        pred_csv.push_str(&format!(
            "{},{},{},{score},{predicted}\n",
            record.path, record.patient_id, record.label
        ));
        frame_predictions.push(FramePrediction {
            path: record.path.clone(),
            predicted,
        });
    }
    write_text(&dir.join("predictions.csv"), &pred_csv)?;
    let report = patient_report(&frame_predictions, &manifest)?;
    report.write_csv(&dir.join("patients.csv"))?;
    Ok(())
}

pub fn run_tsne(config: &RunConfig, out: &Path) -> Result<()> {
    let artifacts = Artifacts::new(out);
    let manifest = load_split(&artifacts)?;
    let model = load_classifier(&artifacts)?;
    prepare_stage_dir(&artifacts.tsne_dir(), config)?;
    let val = load_labeled_cohort(&artifacts, &manifest, Cohort::Val, config.image_size)?;
    let (_, _, codes) = score_validation(&model, &val)?;
    let tsne_config = TsneConfig {
        perplexity: config.tsne_perplexity,
        iterations: config.tsne_iterations,
        learning_rate: config.tsne_learning_rate,
        seed: stage_seed(config.seed, "tsne"),
        ..TsneConfig::default()
    };
    let embedding = tsne(&codes, &tsne_config)?;
    let dir = artifacts.tsne_dir();
    write_embedding_csv(&embedding, &dir.join("embedding.csv"))?;
    write_trace_csv(&embedding.kl_trace, "kl", &dir.join("kl_trace.csv"))?;
    let mut labels_csv = String::from("point_id,label\n");
    for (i, frame) in val.iter().enumerate() {
        labels_csv.push_str(&format!("{i},{}\n", index_label(frame.label)));
    }
    write_text(&dir.join("labels.csv"), &labels_csv)?;
    Ok(())
}

fn bottleneck_vectors(
    model: &AutoencoderModel<f32>,
    frames: &[UnlabeledFrame<f32>],
) -> Result<Vec<Vec<f64>>> {
    let mut vectors = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(16) {
        let images: Vec<&Tensor<f32>> = chunk.iter().map(|f| &f.image).collect();
        let batch = stack(&images)?;
        let codes = model.encode(&batch)?;
        let len = codes.dims2("bottleneck")?[1];
        for i in 0..chunk.len() {
            vectors.push(
                codes.data()[i * len..(i + 1) * len]
                    .iter()
                    .map(|&v| v as f64)
                    .collect(),
            );
        }
    }
    Ok(vectors)
}

pub fn run_kmeans(config: &RunConfig, out: &Path) -> Result<()> {
    let artifacts = Artifacts::new(out);
    let manifest = load_split(&artifacts)?;
    require(&artifacts.autoencoder_checkpoint(), "train-ae")?;
    let checkpoint = load_checkpoint(&artifacts.autoencoder_checkpoint())?;
    let model = autoencoder_from_checkpoint::<f32>(&checkpoint)?;
    prepare_stage_dir(&artifacts.kmeans_dir(), config)?;
    let data_dir = artifacts.data_dir();
    let val_records: Vec<_> = manifest.cohort_records(Cohort::Val).collect();
    let frames: Vec<UnlabeledFrame<f32>> = val_records
        .iter()
        .map(|r| {
            Ok(UnlabeledFrame {
                image: load_and_preprocess::<f32>(
                    &data_dir.join(&r.path),
                    config.ae_image_size,
                    config.ae_image_size,
                )?,
            })
        })
        .collect::<Result<_>>()?;
    let vectors = bottleneck_vectors(&model, &frames)?;
    let result = kmeans_restarts(
        &vectors,
        config.kmeans_k,
        stage_seed(config.seed, "kmeans"),
        config.kmeans_restarts,
    )?;
    let labels: Vec<usize> = val_records.iter().map(|r| r.label.class_index()).collect();
    let acc = cluster_label_accuracy(&result.assignments, &labels)?;

    let dir = artifacts.kmeans_dir();
    write_assignments_csv(&result.assignments, &dir.join("assignments.csv"))?;
    let mut metrics = String::from("metric,value\n");
    metrics.push_str(&format!("cluster_accuracy,{acc}\n"));
    metrics.push_str(&format!("inertia,{}\n", result.inertia));
    metrics.push_str(&format!("iterations,{}\n", result.iterations));
    write_text(&dir.join("metrics.csv"), &metrics)?;
    Ok(())
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .skip(1)
        .map(|line| line.split(',').map(str::to_string).collect())
        .collect())
}

pub fn run_report(config: &RunConfig, out: &Path) -> Result<()> {
    let artifacts = Artifacts::new(out);
    let eval_dir = artifacts.eval_dir();
    let tsne_dir = artifacts.tsne_dir();
    let kmeans_dir = artifacts.kmeans_dir();
    require(&eval_dir.join("metrics.csv"), "eval")?;
    require(&tsne_dir.join("embedding.csv"), "tsne")?;
    require(&kmeans_dir.join("metrics.csv"), "kmeans")?;
    prepare_stage_dir(&artifacts.report_dir(), config)?;
    let dir = artifacts.report_dir();

    // collated summary
    let mut summary = String::from("metric,value\n");
    for row in read_csv_rows(&eval_dir.join("metrics.csv"))? {
        summary.push_str(&format!("{},{}\n", row[0], row[1]));
    }
    for row in read_csv_rows(&kmeans_dir.join("metrics.csv"))? {
        summary.push_str(&format!("kmeans_{},{}\n", row[0], row[1]));
    }
    let kl_rows = read_csv_rows(&tsne_dir.join("kl_trace.csv"))?;
    if let Some(last) = kl_rows.last() {
        summary.push_str(&format!("tsne_final_kl,{}\n", last[1]));
    }
    write_text(&dir.join("summary.csv"), &summary)?;
    std::fs::copy(eval_dir.join("patients.csv"), dir.join("patients.csv"))
        .with_context(|| "copying patient table".to_string())?;

    // curve plots
    let parse_points = |rows: &[Vec<String>]| -> Result<Vec<(f64, f64)>> {
        rows.iter()
            .map(|r| Ok((r[0].parse::<f64>()?, r[1].parse::<f64>()?)))
            .collect()
    };
    let roc_points = parse_points(&read_csv_rows(&eval_dir.join("roc.csv"))?)?;
    write_line_plot_svg(
        &[PlotSeries { name: "ROC".into(), points: roc_points }],
        "Receiver operating characteristic",
        "False positive rate",
        "True positive rate",
        &dir.join("roc.svg"),
    )?;
    let pr_points = parse_points(&read_csv_rows(&eval_dir.join("pr.csv"))?)?;
    write_line_plot_svg(
        &[PlotSeries { name: "PR".into(), points: pr_points }],
        "Precision-recall curve",
        "Recall",
        "Precision",
        &dir.join("pr.svg"),
    )?;
    let kl_points = parse_points(&kl_rows)?;
    write_line_plot_svg(
        &[PlotSeries { name: "KL".into(), points: kl_points }],
        "t-SNE optimization",
        "Iteration",
        "KL divergence",
        &dir.join("kl_trace.svg"),
    )?;

    // embedding scatter colored by clinical label
    let embedding = read_csv_rows(&tsne_dir.join("embedding.csv"))?;
    let labels = read_csv_rows(&tsne_dir.join("labels.csv"))?;
    let mut groups: std::collections::BTreeMap<String, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for (point, label_row) in embedding.iter().zip(&labels) {
        groups
            .entry(label_row[1].clone())
            .or_default()
            .push((point[1].parse()?, point[2].parse()?));
    }
    let groups: Vec<ScatterGroup> = groups
        .into_iter()
        .map(|(name, points)| ScatterGroup { name, points })
        .collect();
    write_scatter_svg(
        &groups,
        "t-SNE of classifier codes",
        "dimension 1",
        "dimension 2",
        &dir.join("tsne.svg"),
    )?;
    Ok(())
}
