use std::collections::BTreeMap;
use std::path::Path;

use super::embedding::{EmbeddingProvider, VectorCache};
use super::{f1, MetricError, MetricId, MetricScore};
use crate::textkit::{extract_findings, label_report, Lexicon, Polarity};

/// Lower bound applied to a label prevalence before inverting it.
pub const PREVALENCE_FLOOR: f64 = 1e-3;

/// Minimum cosine for two entities to be soft-matched.
const SOFT_MATCH_THRESHOLD: f64 = 0.5;

fn set_f1(matched: f64, n_cand: usize, n_ref: usize) -> (f64, f64, f64) {
    match (n_cand, n_ref) {
        (0, 0) => (1.0, 1.0, 1.0),
        (0, _) | (_, 0) => (0.0, 0.0, 0.0),
        _ => {
            let p = matched / n_cand as f64;
            let r = matched / n_ref as f64;
            (p, r, f1(p, r))
        }
    }
}

/// F1 over findings that agree on entity, polarity and laterality.
pub fn entity_f1(candidate: &str, reference: &str, lexicon: &Lexicon) -> MetricScore {
    let cand = extract_findings(candidate, lexicon);
    let refs = extract_findings(reference, lexicon);
    let mut used = vec![false; refs.len()];
    let mut matched = 0usize;
    for c in &cand {
        let hit = refs.iter().enumerate().position(|(j, r)| {
            !used[j] && r.entity == c.entity && r.polarity == c.polarity && r.laterality == c.laterality
        });
        if let Some(j) = hit {
            used[j] = true;
            matched += 1;
        }
    }
    let (p, r, value) = set_f1(matched as f64, cand.len(), refs.len());
    MetricScore::new(
        MetricId::EntityF1,
        value,
        vec![
            ("precision", p),
            ("recall", r),
            ("matched", matched as f64),
            ("cand_findings", cand.len() as f64),
            ("ref_findings", refs.len() as f64),
        ],
    )
}

fn entity_phrase(term: &str) -> String {
    term.replace('_', " ")
}

/// Entity-embedding soft F1: greedy pairing by descending cosine, each
/// accepted pair contributing its cosine as credit.
pub fn rate_like(
    candidate: &str,
    reference: &str,
    lexicon: &Lexicon,
    provider: &dyn EmbeddingProvider,
) -> Result<MetricScore, MetricError> {
    let entities = |text: &str| -> Vec<(String, Polarity)> {
        extract_findings(text, lexicon)
            .into_iter()
            .map(|f| (entity_phrase(&f.entity), f.polarity))
            .collect()
    };
    let cand = entities(candidate);
    let refs = entities(reference);
    let cache = VectorCache::build(provider, cand.iter().chain(&refs).map(|(e, _)| e.as_str()))?;

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, (ce, cp)) in cand.iter().enumerate() {
        for (j, (re, rp)) in refs.iter().enumerate() {
            let cos = cache.cosine(ce, re);
            if cp == rp && cos >= SOFT_MATCH_THRESHOLD {
                pairs.push((cos, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut cand_used = vec![false; cand.len()];
    let mut ref_used = vec![false; refs.len()];
    let mut credit = 0.0;
    let mut matched = 0usize;
    for (cos, i, j) in pairs {
        if !cand_used[i] && !ref_used[j] {
            cand_used[i] = true;
            ref_used[j] = true;
            credit += cos;
            matched += 1;
        }
    }
    let (p, r, value) = set_f1(credit, cand.len(), refs.len());
    Ok(MetricScore::new(
        MetricId::RateLike,
        value,
        vec![
            ("precision", p),
            ("recall", r),
            ("credit", credit),
            ("matched", matched as f64),
        ],
    ))
}

/// Per-label prevalence in (0, 1], keyed by label name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prevalence {
    values: BTreeMap<String, f64>,
}

impl Prevalence {
    pub fn uniform(lexicon: &Lexicon, value: f64) -> Self {
        Prevalence {
            values: lexicon
                .labels
                .iter()
                .map(|l| (l.name.clone(), value))
                .collect(),
        }
    }

    /// Positive-label frequency over the given references, floored at
    /// [`PREVALENCE_FLOOR`] so unseen labels stay in range.
    pub fn from_references<'a>(
        references: impl IntoIterator<Item = &'a str>,
        lexicon: &Lexicon,
    ) -> Result<Self, MetricError> {
        let mut counts = vec![0usize; lexicon.label_count()];
        let mut n = 0usize;
        for text in references {
            let labels = label_report(text, lexicon)?;
            for (count, &v) in counts.iter_mut().zip(&labels.values) {
                *count += usize::from(v);
            }
            n += 1;
        }
        let values = lexicon
            .labels
            .iter()
            .zip(counts)
            .map(|(l, c)| {
                let freq = if n == 0 { 1.0 } else { c as f64 / n as f64 };
                (l.name.clone(), freq.max(PREVALENCE_FLOOR))
            })
            .collect();
        Ok(Prevalence { values })
    }

    pub fn from_map(values: BTreeMap<String, f64>) -> Self {
        Prevalence { values }
    }

    /// Reads `label,prevalence` rows (header optional, `#` comments allowed).
    pub fn load(path: impl AsRef<Path>) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let mut values = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((label, value)) = line.split_once(',') else {
                continue;
            };
            let Ok(value) = value.trim().parse::<f64>() else {
                continue;
            };
            if !(value > 0.0 && value <= 1.0) {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("prevalence for `{label}` outside (0, 1]: {value}"),
                ));
            }
            values.insert(label.trim().to_string(), value);
        }
        Ok(Prevalence { values })
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.values.get(label).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Prevalence-weighted label agreement that ignores true negatives.
pub fn crg_like(
    candidate: &str,
    reference: &str,
    lexicon: &Lexicon,
    prevalence: &Prevalence,
) -> Result<MetricScore, MetricError> {
    let cand = label_report(candidate, lexicon)?;
    let refs = label_report(reference, lexicon)?;
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    let (mut n_tp, mut n_fp, mut n_fn) = (0usize, 0usize, 0usize);
    for (label, (&c, &r)) in lexicon.labels.iter().zip(cand.values.iter().zip(&refs.values)) {
        let p = prevalence
            .get(&label.name)
            .ok_or_else(|| MetricError::MissingPrevalence(label.name.clone()))?;
        let w = 1.0 / p.max(PREVALENCE_FLOOR);
        match (c, r) {
            (true, true) => {
                tp += w;
                n_tp += 1;
            }
            (true, false) => {
                fp += w;
                n_fp += 1;
            }
            (false, true) => {
                fn_ += w;
                n_fn += 1;
            }
            (false, false) => {}
        }
    }
    let denom = tp + fp + fn_;
    let value = if denom == 0.0 { 1.0 } else { tp / denom };
    Ok(MetricScore::new(
        MetricId::Crg,
        value,
        vec![
            ("tp", n_tp as f64),
            ("fp", n_fp as f64),
            ("fn", n_fn as f64),
            ("weighted_tp", tp),
            ("weighted_fp", fp),
            ("weighted_fn", fn_),
        ],
    ))
}
