use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::lexicon::{Laterality, Lexicon, LexiconError};
use super::tokenize::{is_number, token_spans, Sentences};

/// Tokens after an entity searched for a `<number> <unit>` pair.
pub const MEASUREMENT_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Present,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Measurement {
    /// Decimal text as written, e.g. `5.5`.
    pub magnitude: String,
    pub unit: String,
}

impl Measurement {
    pub fn value(&self) -> f64 {
        self.magnitude.parse().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub entity: String,
    pub polarity: Polarity,
    pub laterality: Laterality,
    pub measurement: Option<Measurement>,
    /// Inclusive token span in the whole-text token stream.
    pub span: (usize, usize),
}

/// The assertion content of a finding, without its position.
pub type FindingKey = (String, Polarity, Laterality, Option<Measurement>);

impl Finding {
    pub fn key(&self) -> FindingKey {
        (
            self.entity.clone(),
            self.polarity,
            self.laterality,
            self.measurement.clone(),
        )
    }
}

/// A finding located in the source text, with byte-level anchors for editing.
#[derive(Debug, Clone)]
pub struct LocatedFinding {
    pub finding: Finding,
    pub sentence: usize,
    /// Byte range of the entity mention within its sentence.
    pub entity_bytes: Range<usize>,
    /// Byte range of the negation cue that made it absent.
    pub cue_bytes: Option<Range<usize>>,
    /// Byte range of the laterality term assigned to it.
    pub laterality_bytes: Option<Range<usize>>,
    /// Byte range of the measurement number.
    pub number_bytes: Option<Range<usize>>,
}

/// Extracts lexicon findings with polarity, laterality and measurements.
pub fn extract_findings(text: &str, lexicon: &Lexicon) -> Vec<Finding> {
    locate_findings(&Sentences::parse(text), lexicon)
        .into_iter()
        .map(|l| l.finding)
        .collect()
}

/// Sorted assertion multiset for order-insensitive comparisons.
pub fn finding_multiset(text: &str, lexicon: &Lexicon) -> Vec<FindingKey> {
    let mut keys: Vec<_> = extract_findings(text, lexicon)
        .iter()
        .map(Finding::key)
        .collect();
    keys.sort();
    keys
}

pub fn locate_findings(sentences: &Sentences, lexicon: &Lexicon) -> Vec<LocatedFinding> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (sentence_idx, part) in sentences.parts.iter().enumerate() {
        let spans = token_spans(&part.text);
        let toks: Vec<String> = spans.iter().map(|r| part.text[r.clone()].to_lowercase()).collect();
        let entities = lexicon.entity_matcher.scan(&toks, |_| false);
        let in_entity = |i: usize| entities.iter().any(|&(s, len, _)| i >= s && i < s + len);
        let cues = lexicon.cue_matcher.scan(&toks, in_entity);
        let sides = lexicon.laterality_matcher.scan(&toks, in_entity);

        for (n, &(start, len, entity_idx)) in entities.iter().enumerate() {
            let end = start + len - 1;
            let cue = cues
                .iter()
                .filter(|&&(cs, clen, _)| {
                    let cue_end = cs + clen - 1;
                    cue_end < start && start - cue_end <= lexicon.negation.scope
                })
                .next_back();
            let side = sides
                .iter()
                .map(|&(ls, llen, side)| {
                    let le = ls + llen - 1;
                    let dist = if le < start {
                        start - le
                    } else if ls > end {
                        ls - end
                    } else {
                        0
                    };
                    (dist, ls, llen, side)
                })
                .min_by_key(|&(dist, ls, _, _)| (dist, ls));
            let next_entity = entities.get(n + 1).map_or(toks.len(), |e| e.0);
            let limit = (end + MEASUREMENT_WINDOW).min(next_entity.saturating_sub(1));
            let measurement = (end + 1..=limit).find_map(|k| {
                let unit = toks.get(k + 1)?;
                (is_number(&toks[k]) && lexicon.is_unit(unit)).then(|| {
                    (
                        k,
                        Measurement {
                            magnitude: toks[k].clone(),
                            unit: unit.clone(),
                        },
                    )
                })
            });

            out.push(LocatedFinding {
                finding: Finding {
                    entity: lexicon.entities[entity_idx].term.clone(),
                    polarity: if cue.is_some() {
                        Polarity::Absent
                    } else {
                        Polarity::Present
                    },
                    laterality: side.map_or(Laterality::None, |s| s.3),
                    measurement: measurement.as_ref().map(|(_, m)| m.clone()),
                    span: (offset + start, offset + end),
                },
                sentence: sentence_idx,
                entity_bytes: spans[start].start..spans[end].end,
                cue_bytes: cue.map(|&(cs, clen, _)| spans[cs].start..spans[cs + clen - 1].end),
                laterality_bytes: side
                    .map(|(_, ls, llen, _)| spans[ls].start..spans[ls + llen - 1].end),
                number_bytes: measurement.map(|(k, _)| spans[k].clone()),
            });
        }
        offset += toks.len();
    }
    out
}

/// Multi-label presence vector over a lexicon's label schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelVector {
    pub schema_id: String,
    pub values: Vec<bool>,
}

impl LabelVector {
    pub fn positives(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

/// A label is set iff one of its trigger entities is asserted present.
pub fn label_report(text: &str, lexicon: &Lexicon) -> Result<LabelVector, LexiconError> {
    if lexicon.labels.is_empty() {
        return Err(LexiconError::NoLabelSchema);
    }
    let mut values = vec![false; lexicon.label_count()];
    for finding in extract_findings(text, lexicon) {
        if finding.polarity == Polarity::Present {
            for &label in lexicon.labels_for_term(&finding.entity) {
                values[label] = true;
            }
        }
    }
    Ok(LabelVector {
        schema_id: lexicon.schema_id.clone(),
        values,
    })
}
