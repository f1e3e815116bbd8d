//! Dataset catalog: one record per frame binding image path, patient
//! identity, clinical label, and cohort. Serialized as CSV with the header
//! `path,patient_id,label,cohort`, paths relative to a declared data root.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Septic,
    NonSeptic,
}

impl Label {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "septic" => Ok(Label::Septic),
            "non-septic" => Ok(Label::NonSeptic),
            other => Err(DataError::BadLabel(other.to_string())),
        }
    }

    /// Class index used by the classifier; septic is the positive class.
    pub fn class_index(self) -> usize {
        match self {
            Label::NonSeptic => 0,
            Label::Septic => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Septic => write!(f, "septic"),
            Label::NonSeptic => write!(f, "non-septic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cohort {
    Train,
    Val,
    Unassigned,
}

impl Cohort {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Cohort::Train),
            "val" => Ok(Cohort::Val),
            "unassigned" => Ok(Cohort::Unassigned),
            other => Err(DataError::BadCohort(other.to_string())),
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cohort::Train => write!(f, "train"),
            Cohort::Val => write!(f, "val"),
            Cohort::Unassigned => write!(f, "unassigned"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub path: String,
    pub patient_id: String,
    pub label: Label,
    pub cohort: Cohort,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<FrameRecord>,
}

impl Manifest {
    pub fn new(records: Vec<FrameRecord>) -> Result<Self> {
        for r in &records {
            if r.patient_id.is_empty() {
                return Err(DataError::BadRecord {
                    path: r.path.clone(),
                    reason: "empty patient_id".into(),
                });
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn frames_per_label(&self) -> BTreeMap<Label, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.label).or_insert(0) += 1;
        }
        out
    }

    pub fn frames_per_patient(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.patient_id.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn cohort_records(&self, cohort: Cohort) -> impl Iterator<Item = &FrameRecord> {
        self.records.iter().filter(move |r| r.cohort == cohort)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["path", "patient_id", "label", "cohort"])?;
        for r in &self.records {
            w.write_record([
                r.path.as_str(),
                r.patient_id.as_str(),
                &r.label.to_string(),
                &r.cohort.to_string(),
            ])?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let expected = ["path", "patient_id", "label", "cohort"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(DataError::Invalid(format!(
                "manifest header {:?} does not match {expected:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row?;
            records.push(FrameRecord {
                path: row.get(0).unwrap_or_default().to_string(),
                patient_id: row.get(1).unwrap_or_default().to_string(),
                label: Label::parse(row.get(2).unwrap_or_default())?,
                cohort: Cohort::parse(row.get(3).unwrap_or_default())?,
            });
        }
        Manifest::new(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(path: &str, patient: &str, label: Label) -> FrameRecord {
        FrameRecord {
            path: path.into(),
            patient_id: patient.into(),
            label,
            cohort: Cohort::Unassigned,
        }
    }

    #[test]
    fn counts_are_consistent_with_records() {
        let m = Manifest::new(vec![
            record("a.png", "p1", Label::Septic),
            record("b.png", "p1", Label::Septic),
            record("c.png", "p2", Label::NonSeptic),
        ])
        .unwrap();
        assert_eq!(m.frames_per_label()[&Label::Septic], 2);
        assert_eq!(m.frames_per_label()[&Label::NonSeptic], 1);
        assert_eq!(m.frames_per_patient()["p1"], 2);
    }

    #[test]
    fn empty_patient_id_rejected() {
        assert!(Manifest::new(vec![record("a.png", "", Label::Septic)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let m = Manifest::new(vec![
            record("img/a.png", "p1", Label::Septic),
            record("img/b.png", "p2", Label::NonSeptic),
        ])
        .unwrap();
        m.write_csv(&path).unwrap();
        assert_eq!(Manifest::read_csv(&path).unwrap(), m);
    }

    #[test]
    fn unknown_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        std::fs::write(&path, "path,patient_id,label,cohort\na.png,p1,maybe,train\n").unwrap();
        assert!(matches!(
            Manifest::read_csv(&path),
            Err(DataError::BadLabel(_))
        ));
    }
}
