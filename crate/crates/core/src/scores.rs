//! Per-case score tables and their CSV form
//! (`case_id,model_id,metric_id,variant,value,error`).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricId;
use crate::provenance::Provenance;

/// Which text was scored against the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The prediction as produced by the model.
    Original,
    /// The reference scored against itself.
    GtSelf,
    Rephrase,
    ErrorL1,
    ErrorL2,
    ErrorLm,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::GtSelf => "gt_self",
            Variant::Rephrase => "rephrase",
            Variant::ErrorL1 => "error_l1",
            Variant::ErrorL2 => "error_l2",
            Variant::ErrorLm => "error_lm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "original" => Variant::Original,
            "gt_self" => Variant::GtSelf,
            "rephrase" => Variant::Rephrase,
            "error_l1" => Variant::ErrorL1,
            "error_l2" => Variant::ErrorL2,
            "error_lm" => Variant::ErrorLm,
            other => return Err(format!("unknown variant `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub case_id: String,
    pub model_id: String,
    pub metric_id: MetricId,
    pub variant: Variant,
    /// Absent when the metric failed for this case.
    pub value: Option<f64>,
    pub error: Option<String>,
}

impl ScoreRow {
    pub fn key(&self) -> (&str, &str, MetricId) {
        (&self.case_id, &self.model_id, self.metric_id)
    }
}

#[derive(Debug, Error)]
pub enum ScoreFileError {
    #[error("score file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("score file: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new(rows: Vec<ScoreRow>) -> Self {
        ScoreTable { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn filter_variant(&self, variant: Variant) -> ScoreTable {
        ScoreTable::new(
            self.rows
                .iter()
                .filter(|r| r.variant == variant)
                .cloned()
                .collect(),
        )
    }

    pub fn extend(&mut self, other: ScoreTable) {
        self.rows.extend(other.rows);
    }

    /// Writes the provenance header line followed by CSV rows.
    pub fn write_csv(&self, out: impl Write, provenance: &Provenance) -> Result<(), ScoreFileError> {
        let mut out = out;
        writeln!(out, "{}", provenance.header_line())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["case_id", "model_id", "metric_id", "variant", "value", "error"])?;
        for row in &self.rows {
            w.write_record([
                row.case_id.as_str(),
                row.model_id.as_str(),
                row.metric_id.as_str(),
                row.variant.as_str(),
                &row.value.map(format_value).unwrap_or_default(),
                row.error.as_deref().unwrap_or(""),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self, ScoreFileError> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let mut rows = Vec::new();
        for record in r.deserialize::<RawRow>() {
            let raw = record?;
            rows.push(ScoreRow {
                case_id: raw.case_id,
                model_id: raw.model_id,
                metric_id: raw.metric_id,
                variant: raw.variant,
                value: raw.value,
                error: raw.error.filter(|e| !e.is_empty()),
            });
        }
        Ok(ScoreTable { rows })
    }
}

#[derive(Deserialize)]
struct RawRow {
    case_id: String,
    model_id: String,
    metric_id: MetricId,
    variant: Variant,
    value: Option<f64>,
    error: Option<String>,
}

/// Shortest decimal that round-trips, so files are stable and lossless.
pub fn format_value(v: f64) -> String {
    format!("{v}")
}
