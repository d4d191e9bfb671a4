//! Judgement records (one classifier inference each) and the sources that
//! supply them to the environment: recorded JSON-lines datasets and
//! synthetic streams calibrated to per-level confusion statistics.

mod calibration;
mod confusion;
mod dataset;
mod synth;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::level::{Level, MAX_CLASSES};

pub use calibration::{
    calibrated_levels, calibration_report, enabler_table, CalibrationReport, ClassCalibration, ClassificationMetrics,
    EnablerClassRow,
};
pub use confusion::{derive_confusion, ConfusionSpec, ConfusionSpecFile};
pub use dataset::{load_dataset, load_dataset_from_reader, Exhaustion, JudgementPool, PoolSampler};
pub use synth::{sample_synthetic, SynthConfig, SyntheticSource};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Val,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Content shown to a human operator in place of the classifier output.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_uri: Option<String>,
}

/// One classifier inference: its per-class confidences and the true class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordLine", into = "RecordLine")]
pub struct JudgementRecord {
    pub level: Level,
    pub record_id: String,
    pub confidences: Vec<f64>,
    pub label: usize,
    pub split: Split,
    pub payload: Option<Payload>,
}

impl JudgementRecord {
    pub fn new(level: Level, record_id: impl Into<String>, confidences: Vec<f64>, label: usize) -> Result<Self> {
        let record = JudgementRecord {
            level,
            record_id: record_id.into(),
            confidences,
            label,
            split: Split::Val,
            payload: None,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.level.n_classes();
        if self.confidences.len() != expected {
            return Err(Error::ConfidenceLength {
                level: self.level,
                expected,
                got: self.confidences.len(),
            });
        }
        if let Some(c) = self.confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidRecord(format!(
                "confidence {c} of record {} is outside [0, 1]",
                self.record_id
            )));
        }
        if self.label >= expected {
            return Err(Error::InvalidRecord(format!(
                "label {} of record {} is outside 0..{expected}",
                self.label, self.record_id
            )));
        }
        Ok(())
    }

    /// Index of the largest confidence, lowest index on ties.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.confidences)
    }

    pub fn max_confidence(&self) -> f64 {
        self.confidences.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Lowest-index argmax; 0 for an empty slice.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Wire form of a record: one JSON object per line.
#[derive(Serialize, Deserialize)]
struct RecordLine {
    level: u8,
    record_id: String,
    confidences: Vec<f64>,
    label: usize,
    #[serde(default)]
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_uri: Option<String>,
}

impl TryFrom<RecordLine> for JudgementRecord {
    type Error = Error;

    fn try_from(line: RecordLine) -> Result<Self> {
        let payload = (line.text.is_some() || line.image_uri.is_some()).then_some(Payload {
            text: line.text,
            image_uri: line.image_uri,
        });
        let record = JudgementRecord {
            level: Level::new(line.level)?,
            record_id: line.record_id,
            confidences: line.confidences,
            label: line.label,
            split: line.split,
            payload,
        };
        if record.confidences.len() > MAX_CLASSES {
            return Err(Error::ConfidenceLength {
                level: record.level,
                expected: record.level.n_classes(),
                got: record.confidences.len(),
            });
        }
        record.validate()?;
        Ok(record)
    }
}

impl From<JudgementRecord> for RecordLine {
    fn from(record: JudgementRecord) -> Self {
        let payload = record.payload.unwrap_or_default();
        RecordLine {
            level: record.level.id(),
            record_id: record.record_id,
            confidences: record.confidences,
            label: record.label,
            split: record.split,
            text: payload.text,
            image_uri: payload.image_uri,
        }
    }
}

/// Anything that can hand the environment a fresh record for a level.
pub trait JudgementSource {
    fn draw(&mut self, level: Level) -> Result<JudgementRecord>;
}

impl<S: JudgementSource + ?Sized> JudgementSource for Box<S> {
    fn draw(&mut self, level: Level) -> Result<JudgementRecord> {
        (**self).draw(level)
    }
}

impl<S: JudgementSource + ?Sized> JudgementSource for &mut S {
    fn draw(&mut self, level: Level) -> Result<JudgementRecord> {
        (**self).draw(level)
    }
}

pub fn write_jsonl<'a, W: Write>(mut out: W, records: impl IntoIterator<Item = &'a JudgementRecord>) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses JSON lines, reporting the 1-based line number of the first bad line.
pub fn read_jsonl<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<JudgementRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JudgementRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
