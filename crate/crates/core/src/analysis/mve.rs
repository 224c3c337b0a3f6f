use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::stats::{minmax_normalize, population_std, spearman};
use super::AnalysisError;
use crate::metrics::MetricId;
use crate::scores::{ScoreTable, Variant};

/// A case on which the metrics disagree most within its model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementCase {
    pub case_id: String,
    pub model_id: String,
    pub metrics: Vec<MetricId>,
    /// Min-max normalized score per entry of `metrics`.
    pub normalized_scores: Vec<f64>,
    pub dispersion: f64,
    pub rank_within_model: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub cases: Vec<DisagreementCase>,
    /// Cases dropped for lacking a value on some metric.
    pub excluded: usize,
}

/// Top-`k` cases per model by population standard deviation of the
/// normalized metric scores. Output is independent of row order: models are
/// sorted by id and ties go to the smaller case id.
pub fn select_disagreement(table: &ScoreTable, k: usize) -> Result<Selection, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::ZeroK);
    }
    let metrics: Vec<MetricId> = table
        .rows
        .iter()
        .map(|r| r.metric_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut by_model: BTreeMap<&str, BTreeMap<&str, BTreeMap<MetricId, Option<f64>>>> = BTreeMap::new();
    for r in &table.rows {
        let slot = by_model
            .entry(&r.model_id)
            .or_default()
            .entry(&r.case_id)
            .or_default();
        let value = r.value.filter(|_| r.error.is_none());
        if slot.insert(r.metric_id, value).is_some() {
            return Err(AnalysisError::Duplicate(format!(
                "case {}, model {}, metric {}",
                r.case_id, r.model_id, r.metric_id
            )));
        }
    }

    let mut cases = Vec::new();
    let mut excluded = 0;
    for (model, per_case) in by_model {
        let mut ids = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); metrics.len()];
        for (case, values) in per_case {
            let row: Option<Vec<f64>> = metrics.iter().map(|m| values.get(m).copied().flatten()).collect();
            match row {
                Some(row) => {
                    ids.push(case);
                    for (col, v) in columns.iter_mut().zip(row) {
                        col.push(v);
                    }
                }
                None => excluded += 1,
            }
        }
        if ids.len() < k {
            return Err(AnalysisError::InsufficientCases {
                model_id: model.to_string(),
                eligible: ids.len(),
                k,
            });
        }
        let normalized: Vec<Vec<f64>> = columns.iter().map(|c| minmax_normalize(c)).collect();
        let mut scored: Vec<(f64, &str, Vec<f64>)> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let row: Vec<f64> = normalized.iter().map(|col| col[i]).collect();
                (population_std(&row).unwrap_or(0.0), *id, row)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        for (rank, (dispersion, case_id, row)) in scored.into_iter().take(k).enumerate() {
            cases.push(DisagreementCase {
                case_id: case_id.to_string(),
                model_id: model.to_string(),
                metrics: metrics.clone(),
                normalized_scores: row,
                dispersion,
                rank_within_model: rank + 1,
            });
        }
    }
    Ok(Selection { cases, excluded })
}

/// Values keyed by (case_id, model_id).
#[derive(Debug, Clone, PartialEq)]
pub struct NamedSeries {
    pub name: String,
    pub values: BTreeMap<(String, String), f64>,
}

impl NamedSeries {
    pub fn new(name: impl Into<String>) -> Self {
        NamedSeries {
            name: name.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, case_id: &str, model_id: &str, value: f64) {
        self.values.insert((case_id.to_string(), model_id.to_string()), value);
    }

    /// Restricts the series to the given (case_id, model_id) keys.
    pub fn restrict(&self, keys: &BTreeSet<(String, String)>) -> NamedSeries {
        NamedSeries {
            name: self.name.clone(),
            values: self
                .values
                .iter()
                .filter(|(k, _)| keys.contains(*k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }
}

/// One series per metric present in the table for `variant`; errored cells are skipped.
pub fn metric_series(table: &ScoreTable, variant: Variant) -> Vec<NamedSeries> {
    let mut out: BTreeMap<MetricId, NamedSeries> = BTreeMap::new();
    for r in table.rows.iter().filter(|r| r.variant == variant) {
        let series = out
            .entry(r.metric_id)
            .or_insert_with(|| NamedSeries::new(r.metric_id.as_str()));
        if let (Some(v), None) = (r.value, &r.error) {
            series.insert(&r.case_id, &r.model_id, v);
        }
    }
    out.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// `None` where a series is constant over the shared cases.
    pub rho: Vec<Vec<Option<f64>>>,
    pub n: Vec<Vec<usize>>,
}

/// Pairwise Spearman over the keys each pair shares.
pub fn correlation_matrix(series: &[NamedSeries]) -> Result<CorrelationMatrix, AnalysisError> {
    let d = series.len();
    let mut rho = vec![vec![None; d]; d];
    let mut n = vec![vec![0; d]; d];
    for i in 0..d {
        rho[i][i] = Some(1.0);
        n[i][i] = series[i].values.len();
        for j in i + 1..d {
            let (a, b) = (&series[i], &series[j]);
            let (x, y): (Vec<f64>, Vec<f64>) = a
                .values
                .iter()
                .filter_map(|(k, va)| b.values.get(k).map(|vb| (*va, *vb)))
                .unzip();
            if x.len() < 2 {
                return Err(AnalysisError::TooFewPairs {
                    left: a.name.clone(),
                    right: b.name.clone(),
                    n: x.len(),
                });
            }
            let r = spearman(&x, &y)?;
            rho[i][j] = r;
            rho[j][i] = r;
            n[i][j] = x.len();
            n[j][i] = x.len();
        }
    }
    Ok(CorrelationMatrix {
        labels: series.iter().map(|s| s.name.clone()).collect(),
        rho,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::ScoreRow;

    fn table(cells: &[(&str, &str, MetricId, f64)]) -> ScoreTable {
        ScoreTable::new(
            cells
                .iter()
                .map(|&(c, m, metric, v)| ScoreRow {
                    case_id: c.into(),
                    model_id: m.into(),
                    metric_id: metric,
                    variant: Variant::Original,
                    value: Some(v),
                    error: None,
                })
                .collect(),
        )
    }

    #[test]
    fn ranks_by_dispersion() {
        // Two metrics; dispersion is |a - b| / 2 after normalization.
        let t = table(&[
            ("c1", "m", MetricId::Bleu, 1.0),
            ("c1", "m", MetricId::Crg, 0.0),
            ("c2", "m", MetricId::Bleu, 0.5),
            ("c2", "m", MetricId::Crg, 0.5),
            ("c3", "m", MetricId::Bleu, 0.0),
            ("c3", "m", MetricId::Crg, 0.1),
        ]);
        let s = select_disagreement(&t, 2).unwrap();
        let ids: Vec<_> = s.cases.iter().map(|c| c.case_id.as_str()).collect();
        assert_eq!(ids, ["c1", "c2"]);
        assert_eq!(s.cases[0].dispersion, 0.5);
        assert_eq!(s.cases[1].dispersion, 0.25);
        assert_eq!(s.cases[1].rank_within_model, 2);
    }

    #[test]
    fn identical_scores_fall_back_to_case_order() {
        let t = table(&[
            ("b", "m", MetricId::Bleu, 0.4),
            ("c", "m", MetricId::Bleu, 0.4),
            ("a", "m", MetricId::Bleu, 0.4),
        ]);
        let s = select_disagreement(&t, 2).unwrap();
        let ids: Vec<_> = s.cases.iter().map(|c| c.case_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(s.cases.iter().all(|c| c.dispersion == 0.0));
        assert!(matches!(
            select_disagreement(&t, 4),
            Err(AnalysisError::InsufficientCases { eligible: 3, .. })
        ));
    }

    #[test]
    fn incomplete_cases_are_excluded() {
        let mut t = table(&[
            ("a", "m", MetricId::Bleu, 0.4),
            ("a", "m", MetricId::Crg, 0.4),
            ("b", "m", MetricId::Bleu, 0.1),
            ("b", "m", MetricId::Crg, 0.9),
        ]);
        t.rows[3].value = None;
        t.rows[3].error = Some("x".into());
        let s = select_disagreement(&t, 1).unwrap();
        assert_eq!(s.excluded, 1);
        assert_eq!(s.cases[0].case_id, "a");
    }

    #[test]
    fn correlation_identity_and_negation() {
        let mut a = NamedSeries::new("a");
        let mut b = NamedSeries::new("neg");
        let mut c = NamedSeries::new("same");
        for (i, v) in [0.1, 0.7, 0.3, 0.9].iter().enumerate() {
            let id = format!("c{i}");
            a.insert(&id, "m", *v);
            b.insert(&id, "m", -v);
            c.insert(&id, "m", *v);
        }
        c.values.remove(&("c0".to_string(), "m".to_string()));
        let m = correlation_matrix(&[a, b, c]).unwrap();
        assert_eq!(m.rho[0][0], Some(1.0));
        assert_eq!(m.rho[0][1], Some(-1.0));
        assert_eq!(m.rho[0][2], Some(1.0));
        assert_eq!(m.n[0][2], 3);
        assert_eq!(m.rho[1][2], m.rho[2][1]);
    }

    #[test]
    fn correlation_needs_two_shared_cases() {
        let mut a = NamedSeries::new("a");
        let mut b = NamedSeries::new("b");
        a.insert("x", "m", 1.0);
        b.insert("x", "m", 1.0);
        assert!(matches!(correlation_matrix(&[a, b]), Err(AnalysisError::TooFewPairs { n: 1, .. })));
    }
}
