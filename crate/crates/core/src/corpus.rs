//! Line-delimited report corpora: one JSON object per line with
//! `case_id`, `model_id`, `reference` and `candidate`.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: field `{field}` missing or not a string")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field `{field}` must not be empty")]
    EmptyField { line: usize, field: &'static str },
    #[error("line {line}: duplicate pair (case_id={case_id}, model_id={model_id})")]
    Duplicate {
        line: usize,
        case_id: String,
        model_id: String,
    },
}

/// One reference/candidate pair for a case and model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub case_id: String,
    pub model_id: String,
    pub reference: String,
    pub candidate: String,
}

impl EvalPair {
    pub fn new(
        case_id: impl Into<String>,
        model_id: impl Into<String>,
        reference: impl Into<String>,
        candidate: impl Into<String>,
    ) -> Self {
        EvalPair {
            case_id: case_id.into(),
            model_id: model_id.into(),
            reference: reference.into(),
            candidate: candidate.into(),
        }
    }

    pub fn key(&self) -> (String, String) {
        (self.case_id.clone(), self.model_id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pairs: Vec<EvalPair>,
    source_path: String,
    model_ids: Vec<String>,
}

impl Corpus {
    /// Validates pairs (non-empty ids and reference, unique keys).
    pub fn from_pairs(
        pairs: Vec<EvalPair>,
        source_path: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        let mut model_ids: Vec<String> = Vec::new();
        for (i, pair) in pairs.iter().enumerate() {
            let line = i + 1;
            for (field, value) in [
                ("case_id", &pair.case_id),
                ("model_id", &pair.model_id),
                ("reference", &pair.reference),
            ] {
                if value.is_empty() {
                    return Err(CorpusError::EmptyField { line, field });
                }
            }
            if !seen.insert((pair.case_id.as_str(), pair.model_id.as_str())) {
                return Err(CorpusError::Duplicate {
                    line,
                    case_id: pair.case_id.clone(),
                    model_id: pair.model_id.clone(),
                });
            }
            if !model_ids.contains(&pair.model_id) {
                model_ids.push(pair.model_id.clone());
            }
        }
        Ok(Corpus {
            pairs,
            source_path: source_path.into(),
            model_ids,
        })
    }

    pub fn pairs(&self) -> &[EvalPair] {
        &self.pairs
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    /// Distinct model ids in first-appearance order.
    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// First reference seen for each case, in file order.
    pub fn references(&self) -> Vec<(&str, &str)> {
        let mut seen = HashSet::new();
        self.pairs
            .iter()
            .filter(|p| seen.insert(p.case_id.as_str()))
            .map(|p| (p.case_id.as_str(), p.reference.as_str()))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for pair in &self.pairs {
            out.push_str(&serde_json::to_string(pair).expect("pair serializes"));
            out.push('\n');
        }
        out
    }
}

/// Parses corpus text; `source` is only used for provenance.
pub fn parse_corpus(text: &str, source: &str) -> Result<Corpus, CorpusError> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        let field = |name: &'static str| -> Result<String, CorpusError> {
            value
                .get(name)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or(CorpusError::MissingField { line, field: name })
        };
        let pair = EvalPair {
            case_id: field("case_id")?,
            model_id: field("model_id")?,
            reference: field("reference")?,
            candidate: field("candidate")?,
        };
        for (name, v) in [
            ("case_id", &pair.case_id),
            ("model_id", &pair.model_id),
            ("reference", &pair.reference),
        ] {
            if v.is_empty() {
                return Err(CorpusError::EmptyField { line, field: name });
            }
        }
        if !seen.insert(pair.key()) {
            return Err(CorpusError::Duplicate {
                line,
                case_id: pair.case_id,
                model_id: pair.model_id,
            });
        }
        pairs.push(pair);
    }
    Corpus::from_pairs(pairs, source)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, &path.display().to_string())
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(corpus.to_jsonl().as_bytes()).map_err(io)
}

/// Partitions by model, keeping file order within and across models.
pub fn split_by_model(corpus: &Corpus) -> IndexMap<String, Corpus> {
    let mut groups: IndexMap<String, Vec<EvalPair>> = IndexMap::new();
    for pair in &corpus.pairs {
        groups
            .entry(pair.model_id.clone())
            .or_default()
            .push(pair.clone());
    }
    groups
        .into_iter()
        .map(|(model, pairs)| {
            let sub = Corpus {
                model_ids: vec![model.clone()],
                source_path: corpus.source_path.clone(),
                pairs,
            };
            (model, sub)
        })
        .collect()
}
