//! Per-patient accuracy table: one row per validation patient with frame
//! counts, correct/incorrect predictions, percent accuracy (two decimals),
//! and the clinical label.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::data::{Label, Manifest};

use super::{EvalError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    /// Manifest-relative frame path.
    pub path: String,
    pub predicted: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRow {
    pub patient_id: String,
    pub total: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub percent: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientReport {
    pub rows: Vec<PatientRow>,
}

impl PatientReport {
    /// Overall frame-level accuracy implied by the rows.
    pub fn overall_accuracy(&self) -> f64 {
        let total: usize = self.rows.iter().map(|r| r.total).sum();
        let correct: usize = self.rows.iter().map(|r| r.correct).sum();
        correct as f64 / total as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out =
            String::from("patient,total_frames,correct,incorrect,percent_accuracy,label\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.2},{}\n",
                r.patient_id, r.total, r.correct, r.incorrect, r.percent, r.label
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        f.write_all(out.as_bytes()).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Collate frame predictions into per-patient rows. Every prediction must
/// reference a manifest frame; the manifest's label is ground truth.
pub fn patient_report(predictions: &[FramePrediction], manifest: &Manifest) -> Result<PatientReport> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let by_path: BTreeMap<&str, (&str, Label)> = manifest
        .records
        .iter()
        .map(|r| (r.path.as_str(), (r.patient_id.as_str(), r.label)))
        .collect();
    let mut per_patient: BTreeMap<String, (usize, usize, Label)> = BTreeMap::new();
    for p in predictions {
        let &(patient, label) = by_path
            .get(p.path.as_str())
            .ok_or_else(|| EvalError::UnknownFrame(p.path.clone()))?;
        let entry = per_patient
            .entry(patient.to_string())
            .or_insert((0, 0, label));
        entry.0 += 1;
        if p.predicted == label {
            entry.1 += 1;
        }
    }
    let rows = per_patient
        .into_iter()
        .map(|(patient_id, (total, correct, label))| PatientRow {
            patient_id,
            total,
            correct,
            incorrect: total - correct,
            percent: 100.0 * correct as f64 / total as f64,
            label,
        })
        .collect();
    Ok(PatientReport { rows })
}
