//! Expert rating records, their aggregation, and the expert series export.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::NamedSeries;

pub const RATING_MIN: u8 = 1;
pub const RATING_MAX: u8 = 5;
pub const EXPERT_SERIES: &str = "E";

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("rating {0} outside {RATING_MIN}..={RATING_MAX}")]
    OutOfRange(i64),
    #[error("field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error("ratings file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("ratings line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub case_id: String,
    pub model_id: String,
    pub rater_id: String,
    pub rating: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl RatingRecord {
    /// Checks ids and range; the raw rating is taken wide so out-of-range
    /// submissions are reported as such rather than as type errors.
    pub fn validated(
        case_id: &str,
        model_id: &str,
        rater_id: &str,
        rating: i64,
        comment: Option<String>,
        created_at: DateTime<Utc>,
    ) -> Result<Self, RatingError> {
        for (name, value) in [("case_id", case_id), ("model_id", model_id), ("rater_id", rater_id)] {
            if value.trim().is_empty() {
                return Err(RatingError::EmptyField(name));
            }
        }
        if !(RATING_MIN as i64..=RATING_MAX as i64).contains(&rating) {
            return Err(RatingError::OutOfRange(rating));
        }
        Ok(RatingRecord {
            case_id: case_id.to_string(),
            model_id: model_id.to_string(),
            rater_id: rater_id.to_string(),
            rating: rating as u8,
            comment: comment.filter(|c| !c.trim().is_empty()),
            created_at,
        })
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Parses line-delimited records; blank lines and `#` lines are skipped.
pub fn parse_ratings(input: impl Read) -> Result<Vec<RatingRecord>, RatingError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: RatingRecord = serde_json::from_str(trimmed).map_err(|e| RatingError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !(RATING_MIN..=RATING_MAX).contains(&rec.rating) {
            return Err(RatingError::Malformed {
                line: i + 1,
                message: format!("rating {} out of range", rec.rating),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>, RatingError> {
    parse_ratings(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertValue {
    pub case_id: String,
    pub model_id: String,
    pub value: f64,
    pub raters: usize,
}

/// Mean over raters of each rater's latest rating, per (case, model).
/// Later records win timestamp ties, so file order is the audit order.
pub fn aggregate_ratings(records: &[RatingRecord]) -> Vec<ExpertValue> {
    let mut latest: BTreeMap<(&str, &str), BTreeMap<&str, &RatingRecord>> = BTreeMap::new();
    for r in records {
        let slot = latest
            .entry((&r.case_id, &r.model_id))
            .or_default()
            .entry(&r.rater_id)
            .or_insert(r);
        if r.created_at >= slot.created_at {
            *slot = r;
        }
    }
    latest
        .into_iter()
        .map(|((case_id, model_id), by_rater)| {
            let sum: f64 = by_rater.values().map(|r| r.rating as f64).sum();
            ExpertValue {
                case_id: case_id.to_string(),
                model_id: model_id.to_string(),
                value: sum / by_rater.len() as f64,
                raters: by_rater.len(),
            }
        })
        .collect()
}

/// Exported expert series, as served by the rating service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertExport {
    pub name: String,
    pub values: Vec<ExpertValue>,
}

impl ExpertExport {
    pub fn new(values: Vec<ExpertValue>) -> Self {
        ExpertExport {
            name: EXPERT_SERIES.to_string(),
            values,
        }
    }

    pub fn series(&self) -> NamedSeries {
        let mut s = NamedSeries::new(&self.name);
        for v in &self.values {
            s.insert(&v.case_id, &v.model_id, v.value);
        }
        s
    }
}

pub fn export_expert_series(values: &[ExpertValue]) -> NamedSeries {
    ExpertExport::new(values.to_vec()).series()
}

/// Reads either a ratings file or an export document.
pub fn load_expert_series(path: impl AsRef<Path>) -> Result<NamedSeries, RatingError> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(export) = serde_json::from_str::<ExpertExport>(&text) {
        return Ok(export.series());
    }
    let records = parse_ratings(text.as_bytes())?;
    Ok(export_expert_series(&aggregate_ratings(&records)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn rec(case: &str, rater: &str, rating: i64, t: i64) -> RatingRecord {
        RatingRecord::validated(case, "m", rater, rating, None, Utc.timestamp_opt(t, 0).unwrap()).unwrap()
    }

    #[test]
    fn mean_of_raters() {
        let v = aggregate_ratings(&[rec("a", "r1", 4, 0), rec("a", "r2", 5, 0)]);
        assert_eq!(v[0].value, 4.5);
        assert_eq!(v[0].raters, 2);
        assert_eq!(aggregate_ratings(&[rec("a", "r1", 3, 0)])[0].value, 3.0);
    }

    #[test]
    fn latest_rating_wins() {
        let v = aggregate_ratings(&[rec("a", "r1", 2, 0), rec("a", "r1", 4, 1)]);
        assert_eq!((v[0].value, v[0].raters), (4.0, 1));
        let v = aggregate_ratings(&[rec("a", "r1", 4, 5), rec("a", "r1", 2, 1)]);
        assert_eq!(v[0].value, 4.0);
        let v = aggregate_ratings(&[rec("a", "r1", 2, 3), rec("a", "r1", 5, 3)]);
        assert_eq!(v[0].value, 5.0);
    }

    #[test]
    fn range_and_fields_validated() {
        let t = Utc::now();
        assert!(matches!(
            RatingRecord::validated("a", "m", "r", 7, None, t),
            Err(RatingError::OutOfRange(7))
        ));
        assert!(RatingRecord::validated("a", "m", "r", 0, None, t).is_err());
        assert!(matches!(
            RatingRecord::validated("a", "m", " ", 3, None, t),
            Err(RatingError::EmptyField("rater_id"))
        ));
    }

    #[test]
    fn file_round_trip_and_export() {
        let recs = vec![rec("a", "r1", 4, 0), rec("b", "r1", 2, 0)];
        let text: String = recs.iter().map(|r| r.to_line() + "\n").collect();
        assert_eq!(parse_ratings(text.as_bytes()).unwrap(), recs);
        let series = export_expert_series(&aggregate_ratings(&recs));
        assert_eq!(series.values.len(), 2);
        assert_eq!(series.name, "E");
        assert!(export_expert_series(&[]).values.is_empty());
        assert!(parse_ratings("{not json}\n".as_bytes()).is_err());
    }
}
