use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use super::stats::mean;
use super::AnalysisError;
use crate::metrics::MetricId;
use crate::scores::{ScoreRow, ScoreTable, Variant};

/// Mean over the scored cases of one group, with the errored cases counted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMean {
    pub mean: f64,
    pub n: usize,
    pub excluded: usize,
}

pub fn mean_scores(
    table: &ScoreTable,
    model_id: &str,
    metric: MetricId,
    variant: Variant,
) -> Result<GroupMean, AnalysisError> {
    let rows = table
        .rows
        .iter()
        .filter(|r| r.model_id == model_id && r.metric_id == metric && r.variant == variant);
    group_mean(rows).ok_or_else(|| AnalysisError::EmptyGroup {
        model_id: model_id.to_string(),
        metric,
        variant,
    })
}

fn group_mean<'a>(rows: impl Iterator<Item = &'a ScoreRow>) -> Option<GroupMean> {
    let mut values = Vec::new();
    let mut excluded = 0;
    for r in rows {
        match r.value {
            Some(v) if r.error.is_none() => values.push(v),
            _ => excluded += 1,
        }
    }
    Some(GroupMean {
        mean: mean(&values)?,
        n: values.len(),
        excluded,
    })
}

/// One (model, metric, variant) cell of a WSG or SEI grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub model_id: String,
    pub metric_id: MetricId,
    pub variant: Variant,
    pub baseline: f64,
    pub perturbed: f64,
    pub delta_abs: f64,
    /// Missing when the baseline is zero.
    pub delta_pct: Option<f64>,
    pub n_baseline: usize,
    pub n_perturbed: usize,
    pub excluded: usize,
}

impl DeltaRecord {
    fn new(
        model_id: &str,
        metric_id: MetricId,
        variant: Variant,
        baseline: GroupMean,
        perturbed: GroupMean,
    ) -> Self {
        DeltaRecord {
            model_id: model_id.to_string(),
            metric_id,
            variant,
            baseline: baseline.mean,
            perturbed: perturbed.mean,
            delta_abs: perturbed.mean - baseline.mean,
            delta_pct: (baseline.mean != 0.0)
                .then(|| 100.0 * (perturbed.mean - baseline.mean) / baseline.mean),
            n_baseline: baseline.n,
            n_perturbed: perturbed.n,
            excluded: baseline.excluded + perturbed.excluded,
        }
    }
}

type Key<'a> = (&'a str, &'a str, MetricId);

fn keys<'a>(rows: &[&'a ScoreRow]) -> BTreeSet<Key<'a>> {
    rows.iter().map(|r| r.key()).collect()
}

fn first_difference(a: &BTreeSet<Key<'_>>, b: &BTreeSet<Key<'_>>) -> String {
    let (case, model, metric) = a
        .symmetric_difference(b)
        .next()
        .expect("sets differ");
    format!("case {case}, model {model}, metric {metric}")
}

type Groups<'a> = BTreeMap<(&'a str, MetricId), Vec<&'a ScoreRow>>;

/// Groups rows by (model, metric). Cells are listed with models in
/// first-appearance order and metrics in canonical order.
fn grouped<'a>(rows: &[&'a ScoreRow]) -> (Vec<(&'a str, MetricId)>, Groups<'a>) {
    let mut models: IndexSet<&str> = IndexSet::new();
    let mut groups: Groups<'a> = BTreeMap::new();
    for r in rows {
        models.insert(r.model_id.as_str());
        groups.entry((r.model_id.as_str(), r.metric_id)).or_default().push(r);
    }
    let mut cells: Vec<(&str, MetricId)> = groups.keys().copied().collect();
    cells.sort_by_key(|(m, metric)| (models.get_index_of(m), *metric));
    (cells, groups)
}

fn cell_mean(groups: &Groups<'_>, cell: (&str, MetricId)) -> Option<GroupMean> {
    group_mean(groups.get(&cell).into_iter().flatten().copied())
}

/// Percentage change per (model, metric) from original to rephrased scores.
/// Cells where every case failed on either side are left out.
pub fn wsg_table(original: &ScoreTable, rephrased: &ScoreTable) -> Result<Vec<DeltaRecord>, AnalysisError> {
    let base: Vec<&ScoreRow> = original.rows.iter().filter(|r| r.variant != Variant::Rephrase).collect();
    let pert: Vec<&ScoreRow> = rephrased.rows.iter().filter(|r| r.variant == Variant::Rephrase).collect();
    let (kb, kp) = (keys(&base), keys(&pert));
    if kb != kp {
        return Err(AnalysisError::KeyMismatch(first_difference(&kb, &kp)));
    }
    let (cells, base_groups) = grouped(&base);
    let (_, pert_groups) = grouped(&pert);
    Ok(cells
        .into_iter()
        .filter_map(|cell| {
            let b = cell_mean(&base_groups, cell)?;
            let p = cell_mean(&pert_groups, cell)?;
            Some(DeltaRecord::new(cell.0, cell.1, Variant::Rephrase, b, p))
        })
        .collect())
}

/// Absolute change per (model, metric, level) from the self-scored reference
/// to each injected level. Rows are ordered by model, metric, then level;
/// cells with no scored case are left out.
pub fn sei_table(gt_self: &ScoreTable, injected: &[ScoreTable]) -> Result<Vec<DeltaRecord>, AnalysisError> {
    let base: Vec<&ScoreRow> = gt_self.rows.iter().collect();
    let kb = keys(&base);
    let (cells, base_groups) = grouped(&base);
    let mut levels: BTreeMap<Variant, Vec<&ScoreRow>> = BTreeMap::new();
    for table in injected {
        for r in &table.rows {
            levels.entry(r.variant).or_default().push(r);
        }
    }
    for rows in levels.values() {
        let kl = keys(rows);
        if kl != kb {
            return Err(AnalysisError::CoverageMismatch(first_difference(&kb, &kl)));
        }
    }
    let level_groups: Vec<(Variant, Groups<'_>)> =
        levels.iter().map(|(v, rows)| (*v, grouped(rows).1)).collect();
    let mut out = Vec::new();
    for cell in cells {
        let Some(b) = cell_mean(&base_groups, cell) else {
            continue;
        };
        for (variant, groups) in &level_groups {
            if let Some(p) = cell_mean(groups, cell) {
                out.push(DeltaRecord::new(cell.0, cell.1, *variant, b, p));
            }
        }
    }
    Ok(out)
}
