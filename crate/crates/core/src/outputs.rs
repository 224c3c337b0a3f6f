//! File formats for delta grids, perturbed corpora, selections and
//! correlation matrices. Every file opens with the provenance header line;
//! readers skip `#` lines.

use std::io::{BufRead, BufReader, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{CorrelationMatrix, DeltaRecord, DisagreementCase};
use crate::corpus::Corpus;
use crate::metrics::MetricId;
use crate::pipeline::PerturbRecord;
use crate::provenance::Provenance;
use crate::scores::{format_value, ScoreTable, Variant};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("selected case {case_id} (model {model_id}) is not in the corpus")]
    UnknownCase { case_id: String, model_id: String },
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

pub fn write_delta_csv(
    records: &[DeltaRecord],
    out: impl Write,
    provenance: &Provenance,
) -> Result<(), OutputError> {
    let mut out = out;
    writeln!(out, "{}", provenance.header_line())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model_id",
        "metric_id",
        "variant",
        "baseline",
        "perturbed",
        "delta_abs",
        "delta_pct",
        "n_baseline",
        "n_perturbed",
        "excluded",
    ])?;
    for r in records {
        w.write_record([
            r.model_id.as_str(),
            r.metric_id.as_str(),
            r.variant.as_str(),
            &format_value(r.baseline),
            &format_value(r.perturbed),
            &format_value(r.delta_abs),
            &opt(r.delta_pct),
            &r.n_baseline.to_string(),
            &r.n_perturbed.to_string(),
            &r.excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_delta_csv(input: impl Read) -> Result<Vec<DeltaRecord>, OutputError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize::<DeltaRecord>() {
        out.push(rec?);
    }
    Ok(out)
}

/// Writes the header line and one JSON object per item.
pub fn write_jsonl<T: Serialize>(
    items: &[T],
    out: impl Write,
    provenance: &Provenance,
) -> Result<(), OutputError> {
    let mut out = out;
    writeln!(out, "{}", provenance.header_line())?;
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(input: impl Read) -> Result<Vec<T>, OutputError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(serde_json::from_str(t).map_err(|e| OutputError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_perturbed(
    records: &[PerturbRecord],
    out: impl Write,
    provenance: &Provenance,
) -> Result<(), OutputError> {
    write_jsonl(records, out, provenance)
}

/// Selection line: the disagreement case plus the texts shown to raters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    #[serde(flatten)]
    pub case: DisagreementCase,
    /// Raw metric scores, aligned with `case.metrics`.
    pub scores: Vec<Option<f64>>,
    pub reference: String,
    pub candidate: String,
}

/// Attaches texts and raw scores to selected cases.
pub fn selection_records(
    cases: &[DisagreementCase],
    corpus: &Corpus,
    raw: &ScoreTable,
) -> Result<Vec<SelectionRecord>, OutputError> {
    cases
        .iter()
        .map(|c| {
            let pair = corpus
                .pairs()
                .iter()
                .find(|p| p.case_id == c.case_id && p.model_id == c.model_id)
                .ok_or_else(|| OutputError::UnknownCase {
                    case_id: c.case_id.clone(),
                    model_id: c.model_id.clone(),
                })?;
            let scores = c
                .metrics
                .iter()
                .map(|m| raw_score(raw, &c.case_id, &c.model_id, *m))
                .collect();
            Ok(SelectionRecord {
                case: c.clone(),
                scores,
                reference: pair.reference.clone(),
                candidate: pair.candidate.clone(),
            })
        })
        .collect()
}

fn raw_score(t: &ScoreTable, case: &str, model: &str, metric: MetricId) -> Option<f64> {
    t.rows
        .iter()
        .find(|r| r.case_id == case && r.model_id == model && r.metric_id == metric && r.variant == Variant::Original)
        .and_then(|r| r.value)
}

/// Long form: one row per (row, column) cell; undefined coefficients are empty.
pub fn write_correlation_csv(
    m: &CorrelationMatrix,
    out: impl Write,
    provenance: &Provenance,
) -> Result<(), OutputError> {
    let mut out = out;
    writeln!(out, "{}", provenance.header_line())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "rho", "n"])?;
    for (i, a) in m.labels.iter().enumerate() {
        for (j, b) in m.labels.iter().enumerate() {
            w.write_record([a.as_str(), b.as_str(), &opt(m.rho[i][j]), &m.n[i][j].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CorrelationCell {
    row: String,
    col: String,
    rho: Option<f64>,
    n: usize,
}

pub fn read_correlation_csv(input: impl Read) -> Result<CorrelationMatrix, OutputError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut labels: Vec<String> = Vec::new();
    let mut cells = Vec::new();
    for rec in r.deserialize::<CorrelationCell>() {
        let c = rec?;
        if !labels.contains(&c.row) {
            labels.push(c.row.clone());
        }
        cells.push(c);
    }
    let d = labels.len();
    let mut rho = vec![vec![None; d]; d];
    let mut n = vec![vec![0; d]; d];
    let index = |s: &str| labels.iter().position(|l| l == s);
    for (line, c) in cells.iter().enumerate() {
        let (Some(i), Some(j)) = (index(&c.row), index(&c.col)) else {
            return Err(OutputError::Malformed {
                line: line + 3,
                message: format!("unknown series {}", c.col),
            });
        };
        rho[i][j] = c.rho;
        n[i][j] = c.n;
    }
    Ok(CorrelationMatrix { labels, rho, n })
}
