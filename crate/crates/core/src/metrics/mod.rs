//! The eight-metric suite: four lexical/embedding metrics and four
//! clinical-content metrics behind one scoring interface.

mod clinical;
mod embedding;
mod green;
mod lexical;
mod suite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmError;
use crate::textkit::LexiconError;

pub use clinical::{crg_like, entity_f1, rate_like, Prevalence, PREVALENCE_FLOOR};
pub use embedding::{embed_f1, EmbeddingError, EmbeddingProvider, HashedProvider, OneHotProvider, TableProvider};
pub use green::{green_score, parse_judge_reply, FindingsJudge, GreenJudge, JudgeCounts};
pub use lexical::{bleu, meteor, rouge_l, BLEU_MAX_ORDER};
pub use suite::{score_all, MetricOutcome, SuiteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Bleu,
    RougeL,
    Meteor,
    #[serde(rename = "embedf1")]
    EmbedF1,
    #[serde(rename = "entityf1")]
    EntityF1,
    #[serde(rename = "ratelike")]
    RateLike,
    Green,
    Crg,
}

impl MetricId {
    /// Fixed suite order.
    pub const ALL: [MetricId; 8] = [
        MetricId::Bleu,
        MetricId::RougeL,
        MetricId::Meteor,
        MetricId::EmbedF1,
        MetricId::EntityF1,
        MetricId::RateLike,
        MetricId::Green,
        MetricId::Crg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Bleu => "bleu",
            MetricId::RougeL => "rouge_l",
            MetricId::Meteor => "meteor",
            MetricId::EmbedF1 => "embedf1",
            MetricId::EntityF1 => "entityf1",
            MetricId::RateLike => "ratelike",
            MetricId::Green => "green",
            MetricId::Crg => "crg",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let id = match s.as_str() {
            "bleu" => MetricId::Bleu,
            "rouge_l" | "rouge" | "rougel" => MetricId::RougeL,
            "meteor" => MetricId::Meteor,
            "embedf1" | "embed_f1" | "bertscore" => MetricId::EmbedF1,
            "entityf1" | "entity_f1" | "radgraph" => MetricId::EntityF1,
            "ratelike" | "rate_like" | "ratescore" => MetricId::RateLike,
            "green" => MetricId::Green,
            "crg" | "crg_like" => MetricId::Crg,
            other => return Err(format!("unknown metric `{other}`")),
        };
        Ok(id)
    }
}

/// Parses a comma-separated metric list, returned in suite order.
pub fn parse_metric_list(list: &str) -> Result<Vec<MetricId>, String> {
    let mut ids = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<MetricId>, _>>()?;
    ids.sort();
    ids.dedup();
    Ok(ids)
}

/// A metric value in [0, 1] with named diagnostic components.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricScore {
    pub metric: MetricId,
    pub value: f64,
    pub components: Vec<(&'static str, f64)>,
}

impl MetricScore {
    pub(crate) fn new(metric: MetricId, value: f64, components: Vec<(&'static str, f64)>) -> Self {
        debug_assert!(components.iter().all(|(_, v)| v.is_finite()));
        MetricScore {
            metric,
            value: value.clamp(0.0, 1.0),
            components,
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, v)| v)
    }
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("judge call failed: {0}")]
    Llm(#[from] LlmError),
    #[error("unparseable judge reply ({reason}): {reply:?}")]
    JudgeReply { reason: String, reply: String },
    #[error("no judge configured")]
    NoJudge,
    #[error("no prevalence for label `{0}`")]
    MissingPrevalence(String),
}

pub(crate) fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip_and_order() {
        for id in MetricId::ALL {
            assert_eq!(id.as_str().parse::<MetricId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.as_str()));
        }
        assert_eq!(
            parse_metric_list("rouge_l,bleu,bleu").unwrap(),
            [MetricId::Bleu, MetricId::RougeL]
        );
        assert!(parse_metric_list("bleu,nope").is_err());
    }
}
