//! Patient-level train/validation split: every patient lands wholly in one
//! cohort, and the per-label validation frame fraction tracks the target as
//! closely as patient granularity allows.
//!
//! Seeded greedy bin-fill over patients in descending frame count, followed
//! by a local move/swap pass toward the target fraction.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Cohort, DataError, Label, Manifest, Result};

/// Largest allowed deviation of the achieved validation fraction from the
/// target, in absolute fraction points.
const MAX_DEVIATION: f64 = 0.05;

pub fn patient_split(manifest: &Manifest, val_fraction: f64, seed: u64) -> Result<Manifest> {
    if !(0.0..1.0).contains(&val_fraction) || val_fraction <= 0.0 {
        return Err(DataError::Invalid(format!(
            "val_fraction {val_fraction} must be in (0, 1)"
        )));
    }
    // patients per label, with frame counts
    let mut by_label: BTreeMap<Label, BTreeMap<String, usize>> = BTreeMap::new();
    for r in &manifest.records {
        *by_label
            .entry(r.label)
            .or_default()
            .entry(r.patient_id.clone())
            .or_insert(0) += 1;
    }
    let mut val_patients: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (label, patients) in &by_label {
        if patients.len() < 2 {
            return Err(DataError::TooFewPatients {
                label: label.to_string(),
                patients: patients.len(),
            });
        }
        let total: usize = patients.values().sum();
        let target = val_fraction * total as f64;
        let max_patient = patients.values().copied().max().unwrap_or(0);
        if max_patient as f64 > (1.0 - val_fraction) * total as f64 {
            return Err(DataError::SplitInfeasible(format!(
                "label {label}: one patient holds {max_patient} of {total} frames, more than the \
                 {:.0}% available for training",
                (1.0 - val_fraction) * 100.0
            )));
        }

        // seeded shuffle breaks ties among equal-count patients, then a
        // stable sort by descending count
        let mut list: Vec<(String, usize)> =
            patients.iter().map(|(p, &c)| (p.clone(), c)).collect();
        list.shuffle(&mut rng);
        list.sort_by(|a, b| b.1.cmp(&a.1));

        // greedy fill: take a patient into val only if it moves the val
        // total strictly closer to the target
        let mut in_val = vec![false; list.len()];
        let mut val_total = 0usize;
        for (i, (_, count)) in list.iter().enumerate() {
            let with = (val_total + count) as f64 - target;
            let without = val_total as f64 - target;
            if with.abs() < without.abs() {
                in_val[i] = true;
                val_total += count;
            }
        }

        // local improvement: single moves and pairwise swaps
        let mut improved = true;
        while improved {
            improved = false;
            let deviation = |v: usize| (v as f64 - target).abs();
            // moves
            for i in 0..list.len() {
                let count = list[i].1;
                let candidate = if in_val[i] {
                    val_total - count
                } else {
                    val_total + count
                };
                if deviation(candidate) + 1e-9 < deviation(val_total) {
                    in_val[i] = !in_val[i];
                    val_total = candidate;
                    improved = true;
                }
            }
            // swaps
            for i in 0..list.len() {
                if !in_val[i] {
                    continue;
                }
                for j in 0..list.len() {
                    if in_val[j] {
                        continue;
                    }
                    let candidate = val_total - list[i].1 + list[j].1;
                    if deviation(candidate) + 1e-9 < deviation(val_total) {
                        in_val[i] = false;
                        in_val[j] = true;
                        val_total = candidate;
                        improved = true;
                        break;
                    }
                }
            }
        }

        let achieved = val_total as f64 / total as f64;
        if (achieved - val_fraction).abs() > MAX_DEVIATION {
            return Err(DataError::SplitInfeasible(format!(
                "label {label}: best achievable validation fraction {achieved:.3} deviates from \
                 target {val_fraction:.3} by more than {MAX_DEVIATION:.2}"
            )));
        }
        for (i, (patient, _)) in list.iter().enumerate() {
            if in_val[i] {
                val_patients.push(patient.clone());
            }
        }
    }

    let mut records = manifest.records.clone();
    for r in &mut records {
        r.cohort = if val_patients.contains(&r.patient_id) {
            Cohort::Val
        } else {
            Cohort::Train
        };
    }
    Manifest::new(records)
}
