//! Meaning-preserving rephrasings and graded factual error injection, each
//! producing a manifest of the edits applied.

mod inject;
mod rephrase;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmError;
use crate::scores::Variant;
use crate::textkit::{finding_multiset, label_report, FindingKey, LabelVector, Lexicon};

pub use inject::{edit_budget, inject_errors, inject_llm, EDIT_KIND_WEIGHTS};
pub use rephrase::{rephrase_llm, rephrase_rule, voice_swap, SYNONYM_FRACTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    SynonymSwap,
    SentenceReorder,
    VoiceTemplate,
    NegationFlip,
    LateralitySwap,
    MeasurementChange,
    FindingInsert,
    FindingDelete,
}

impl EditKind {
    pub fn is_style(self) -> bool {
        matches!(
            self,
            EditKind::SynonymSwap | EditKind::SentenceReorder | EditKind::VoiceTemplate
        )
    }

    pub fn is_factual(self) -> bool {
        !self.is_style()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub kind: EditKind,
    /// Sentence index in the source report (insertion point for inserts).
    pub sentence_index: usize,
    pub before: String,
    pub after: String,
    /// New position of a reordered sentence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moved_to: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Rule,
    Llm,
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(Engine::Rule),
            "llm" => Ok(Engine::Llm),
            other => Err(format!("unknown engine `{other}` (expected rule or llm)")),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Rule => "rule",
            Engine::Llm => "llm",
        })
    }
}

/// Error-injection severity: one, two, or multiple edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorLevel {
    One,
    Two,
    Multiple,
}

impl ErrorLevel {
    pub const ALL: [ErrorLevel; 3] = [ErrorLevel::One, ErrorLevel::Two, ErrorLevel::Multiple];

    pub fn variant(self) -> Variant {
        match self {
            ErrorLevel::One => Variant::ErrorL1,
            ErrorLevel::Two => Variant::ErrorL2,
            ErrorLevel::Multiple => Variant::ErrorLm,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorLevel::One => "1",
            ErrorLevel::Two => "2",
            ErrorLevel::Multiple => "m",
        }
    }
}

impl FromStr for ErrorLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(ErrorLevel::One),
            "2" => Ok(ErrorLevel::Two),
            "m" | "multiple" => Ok(ErrorLevel::Multiple),
            other => Err(format!("unknown error level `{other}` (expected 1, 2 or m)")),
        }
    }
}

/// Identifies the report being perturbed.
#[derive(Debug, Clone, Copy)]
pub struct ReportSource<'a> {
    pub case_id: &'a str,
    pub model_id: &'a str,
    pub text: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedReport {
    pub case_id: String,
    pub model_id: String,
    pub variant: Variant,
    pub text: String,
    pub manifest: Vec<Edit>,
    pub engine: Engine,
    /// Seed driving the rule engine.
    pub seed: Option<u64>,
    /// Set when an LLM output failed its semantic check.
    pub guard_failed: bool,
    /// Edits asked for; larger than the manifest when fewer sites existed.
    pub requested_edits: usize,
}

impl PerturbedReport {
    fn unchanged(src: &ReportSource<'_>, variant: Variant, engine: Engine, seed: Option<u64>) -> Self {
        PerturbedReport {
            case_id: src.case_id.to_string(),
            model_id: src.model_id.to_string(),
            variant,
            text: src.text.to_string(),
            manifest: Vec::new(),
            engine,
            seed,
            guard_failed: false,
            requested_edits: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("case {case_id} (model {model_id}) is uninjectable: {reason}")]
    Uninjectable {
        case_id: String,
        model_id: String,
        reason: String,
    },
    #[error("case {case_id} (model {model_id}): {source}")]
    Llm {
        case_id: String,
        model_id: String,
        #[source]
        source: LlmError,
    },
}

/// Labels plus finding multiset: what a style edit must leave untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Semantics {
    labels: Option<LabelVector>,
    findings: Vec<FindingKey>,
}

impl Semantics {
    pub(crate) fn of(text: &str, lexicon: &Lexicon) -> Self {
        Semantics {
            labels: label_report(text, lexicon).ok(),
            findings: finding_multiset(text, lexicon),
        }
    }
}

pub(crate) fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Lowercases the first letter unless the first word looks like an acronym.
pub(crate) fn decapitalize_first(s: &str) -> String {
    let first_word = s.split_whitespace().next().unwrap_or("");
    if first_word.chars().filter(|c| c.is_alphabetic()).count() > 1
        && first_word.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase)
    {
        return s.to_string();
    }
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Replacement that keeps the capitalization of the first letter.
pub(crate) fn match_case(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        capitalize_first(replacement)
    } else {
        replacement.to_string()
    }
}
