//! Deterministic text primitives: tokens, sentences, stems, lexicon lookup,
//! finding extraction and report labeling.

mod findings;
mod lexicon;
mod tokenize;

pub use findings::{
    extract_findings, finding_multiset, label_report, locate_findings, Finding, FindingKey,
    LabelVector, LocatedFinding, Measurement, Polarity, MEASUREMENT_WINDOW,
};
pub use lexicon::{EntityDef, LabelDef, Laterality, LateralityTerms, Lexicon, LexiconError, NegationRules};
pub use tokenize::{is_number, split_sentences, stem, token_spans, tokenize, words, Segment, Sentences, Token};
