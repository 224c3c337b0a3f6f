//! Corpus-level scoring, perturbation and the WSG / SEI runs built on them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{sei_table, wsg_table, AnalysisError, DeltaRecord};
use crate::corpus::Corpus;
use crate::llm::LanguageModel;
use crate::metrics::{score_all, SuiteConfig};
use crate::par::Execution;
use crate::perturb::{
    inject_errors, inject_llm, rephrase_llm, rephrase_rule, Edit, Engine, ErrorLevel, PerturbError,
    PerturbedReport, ReportSource,
};
use crate::provenance::derive_seed;
use crate::scores::{ScoreRow, ScoreTable, Variant};
use crate::textkit::Lexicon;

/// Model id given to ground-truth reports in SEI outputs.
pub const GROUND_TRUTH_MODEL: &str = "gt";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("no case could be injected ({skipped} skipped)")]
    NothingInjectable { skipped: usize },
}

/// A candidate text to score against a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreItem {
    pub case_id: String,
    pub model_id: String,
    pub candidate: String,
    pub reference: String,
    pub variant: Variant,
}

/// Scores every item with every enabled metric; rows follow item order, then
/// metric order.
pub fn score_items(items: &[ScoreItem], suite: &SuiteConfig, exec: Execution) -> ScoreTable {
    let per_item = exec.map(items, |item| {
        score_all(&item.candidate, &item.reference, suite)
            .into_iter()
            .map(|o| {
                let (value, error) = match o.result {
                    Ok(s) => (Some(s.value), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                ScoreRow {
                    case_id: item.case_id.clone(),
                    model_id: item.model_id.clone(),
                    metric_id: o.metric,
                    variant: item.variant,
                    value,
                    error,
                }
            })
            .collect::<Vec<_>>()
    });
    ScoreTable::new(per_item.into_iter().flatten().collect())
}

pub fn corpus_items(corpus: &Corpus, variant: Variant) -> Vec<ScoreItem> {
    corpus
        .pairs()
        .iter()
        .map(|p| ScoreItem {
            case_id: p.case_id.clone(),
            model_id: p.model_id.clone(),
            candidate: p.candidate.clone(),
            reference: p.reference.clone(),
            variant,
        })
        .collect()
}

pub fn score_corpus(corpus: &Corpus, suite: &SuiteConfig, exec: Execution) -> ScoreTable {
    score_items(&corpus_items(corpus, Variant::Original), suite, exec)
}

#[derive(Clone)]
pub enum PerturbEngine {
    Rule,
    Llm(Arc<dyn LanguageModel>),
}

impl PerturbEngine {
    pub fn kind(&self) -> Engine {
        match self {
            PerturbEngine::Rule => Engine::Rule,
            PerturbEngine::Llm(_) => Engine::Llm,
        }
    }
}

/// Perturbed-corpus line: the corpus fields plus perturbation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbRecord {
    pub case_id: String,
    pub model_id: String,
    pub reference: String,
    /// The perturbed text.
    pub candidate: String,
    pub variant: Variant,
    pub engine: Engine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub manifest: Vec<Edit>,
    pub guard_failed: bool,
    pub requested_edits: usize,
}

impl PerturbRecord {
    fn new(reference: &str, p: PerturbedReport) -> Self {
        PerturbRecord {
            case_id: p.case_id,
            model_id: p.model_id,
            reference: reference.to_string(),
            candidate: p.text,
            variant: p.variant,
            engine: p.engine,
            seed: p.seed,
            manifest: p.manifest,
            guard_failed: p.guard_failed,
            requested_edits: p.requested_edits,
        }
    }

    pub fn score_item(&self) -> ScoreItem {
        ScoreItem {
            case_id: self.case_id.clone(),
            model_id: self.model_id.clone(),
            candidate: self.candidate.clone(),
            reference: self.reference.clone(),
            variant: self.variant,
        }
    }
}

/// Seed for one (case, model, variant) item, derived from the run seed.
pub fn item_seed(seed: u64, case_id: &str, model_id: &str, variant: Variant) -> u64 {
    derive_seed(seed, &[case_id, model_id, variant.as_str()])
}

/// Rephrases every prediction.
pub fn rephrase_corpus(
    corpus: &Corpus,
    lexicon: &Lexicon,
    engine: &PerturbEngine,
    seed: u64,
    exec: Execution,
) -> Result<Vec<PerturbRecord>, PerturbError> {
    exec.map(corpus.pairs(), |p| {
        let src = ReportSource {
            case_id: &p.case_id,
            model_id: &p.model_id,
            text: &p.candidate,
        };
        let out = match engine {
            PerturbEngine::Rule => Ok(rephrase_rule(
                src,
                lexicon,
                item_seed(seed, &p.case_id, &p.model_id, Variant::Rephrase),
            )),
            PerturbEngine::Llm(model) => rephrase_llm(src, model.as_ref(), lexicon),
        }?;
        Ok(PerturbRecord::new(&p.reference, out))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone)]
pub struct WsgRun {
    pub original: ScoreTable,
    pub rephrased: ScoreTable,
    pub records: Vec<PerturbRecord>,
    pub grid: Vec<DeltaRecord>,
}

/// Scores predictions and their rephrasings, then computes the WSG grid.
pub fn run_wsg(
    corpus: &Corpus,
    suite: &SuiteConfig,
    engine: &PerturbEngine,
    seed: u64,
    exec: Execution,
) -> Result<WsgRun, PipelineError> {
    let original = score_corpus(corpus, suite, exec);
    let records = rephrase_corpus(corpus, &suite.lexicon, engine, seed, exec)?;
    let items: Vec<ScoreItem> = records.iter().map(PerturbRecord::score_item).collect();
    let rephrased = score_items(&items, suite, exec);
    let grid = wsg_table(&original, &rephrased)?;
    Ok(WsgRun {
        original,
        rephrased,
        records,
        grid,
    })
}

/// Which reports receive injected errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeiTarget {
    /// Ground-truth reports, scored against themselves.
    #[default]
    References,
    /// Model predictions, scored against their references.
    Predictions,
}

#[derive(Debug, Clone)]
pub struct SeiRun {
    pub baseline: ScoreTable,
    pub injected: Vec<ScoreTable>,
    pub records: Vec<PerturbRecord>,
    /// Case ids skipped for lacking an injectable site.
    pub skipped: Vec<String>,
    pub grid: Vec<DeltaRecord>,
}

struct SeiSource {
    case_id: String,
    model_id: String,
    text: String,
    reference: String,
}

fn sei_sources(corpus: &Corpus, target: SeiTarget) -> Vec<SeiSource> {
    match target {
        SeiTarget::References => corpus
            .references()
            .into_iter()
            .map(|(case, reference)| SeiSource {
                case_id: case.to_string(),
                model_id: GROUND_TRUTH_MODEL.to_string(),
                text: reference.to_string(),
                reference: reference.to_string(),
            })
            .collect(),
        SeiTarget::Predictions => corpus
            .pairs()
            .iter()
            .map(|p| SeiSource {
                case_id: p.case_id.clone(),
                model_id: p.model_id.clone(),
                text: p.candidate.clone(),
                reference: p.reference.clone(),
            })
            .collect(),
    }
}

/// Injects every requested level into each source; a source that cannot be
/// injected at some level is skipped at all levels so coverage stays equal.
pub fn run_sei(
    corpus: &Corpus,
    suite: &SuiteConfig,
    engine: &PerturbEngine,
    seed: u64,
    levels: &[ErrorLevel],
    target: SeiTarget,
    exec: Execution,
) -> Result<SeiRun, PipelineError> {
    let mut levels = levels.to_vec();
    levels.sort();
    levels.dedup();
    let sources = sei_sources(corpus, target);
    let lexicon = suite.lexicon.as_ref();
    let per_source = exec.map(&sources, |s| -> Result<Option<Vec<PerturbRecord>>, PerturbError> {
        let src = ReportSource {
            case_id: &s.case_id,
            model_id: &s.model_id,
            text: &s.text,
        };
        let mut out = Vec::with_capacity(levels.len());
        for &level in &levels {
            let result = match engine {
                PerturbEngine::Rule => inject_errors(
                    src,
                    level,
                    lexicon,
                    item_seed(seed, &s.case_id, &s.model_id, level.variant()),
                ),
                PerturbEngine::Llm(model) => inject_llm(src, level, model.as_ref(), lexicon),
            };
            match result {
                Ok(p) => out.push(PerturbRecord::new(&s.reference, p)),
                Err(PerturbError::Uninjectable { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(out))
    });

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut kept = Vec::new();
    for (s, r) in sources.iter().zip(per_source) {
        match r? {
            Some(recs) => {
                kept.push(s);
                records.extend(recs);
            }
            None => skipped.push(s.case_id.clone()),
        }
    }
    if kept.is_empty() {
        return Err(PipelineError::NothingInjectable {
            skipped: skipped.len(),
        });
    }

    let baseline_variant = match target {
        SeiTarget::References => Variant::GtSelf,
        SeiTarget::Predictions => Variant::Original,
    };
    let baseline_items: Vec<ScoreItem> = kept
        .iter()
        .map(|s| ScoreItem {
            case_id: s.case_id.clone(),
            model_id: s.model_id.clone(),
            candidate: s.text.clone(),
            reference: s.reference.clone(),
            variant: baseline_variant,
        })
        .collect();
    let baseline = score_items(&baseline_items, suite, exec);
    let injected: Vec<ScoreTable> = levels
        .iter()
        .map(|level| {
            let items: Vec<ScoreItem> = records
                .iter()
                .filter(|r| r.variant == level.variant())
                .map(PerturbRecord::score_item)
                .collect();
            score_items(&items, suite, exec)
        })
        .collect();
    let grid = sei_table(&baseline, &injected)?;
    Ok(SeiRun {
        baseline,
        injected,
        records,
        skipped,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EvalPair;
    use crate::metrics::MetricId;

    fn corpus() -> Corpus {
        Corpus::from_pairs(
            vec![
                EvalPair::new("c1", "m", "No pleural effusion. Cardiomegaly.", "Cardiomegaly. Small effusion."),
                EvalPair::new("c2", "m", "Left lower lobe nodule. No pneumothorax.", "Nodule is seen."),
            ],
            "t",
        )
        .unwrap()
    }

    fn suite() -> SuiteConfig {
        SuiteConfig::offline(Arc::new(Lexicon::bundled()))
    }

    #[test]
    fn score_shapes() {
        let t = score_corpus(&corpus(), &suite(), Execution::Sequential);
        assert_eq!(t.len(), 16);
        assert_eq!(t.rows.iter().filter(|r| r.error.is_some()).count(), 2);
        let restricted = suite().with_metrics(&[MetricId::Bleu, MetricId::RougeL]);
        assert_eq!(score_corpus(&corpus(), &restricted, Execution::Sequential).len(), 4);
    }

    #[test]
    fn execution_strategy_does_not_change_tables() {
        let c = corpus();
        let s = suite();
        assert_eq!(
            score_corpus(&c, &s, Execution::Sequential),
            score_corpus(&c, &s, Execution::Parallel)
        );
        let a = run_wsg(&c, &s, &PerturbEngine::Rule, 9, Execution::Sequential).unwrap();
        let b = run_wsg(&c, &s, &PerturbEngine::Rule, 9, Execution::Parallel).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.grid, b.grid);
    }

    #[test]
    fn wsg_grid_is_one_model_by_eight_metrics() {
        let run = run_wsg(&corpus(), &suite(), &PerturbEngine::Rule, 1, Execution::Parallel).unwrap();
        assert_eq!(run.grid.len(), 7);
        assert!(run.records.iter().all(|r| r.variant == Variant::Rephrase));
    }

    #[test]
    fn sei_skips_uninjectable_cases() {
        let c = Corpus::from_pairs(
            vec![
                EvalPair::new("c1", "m", "No pleural effusion. Cardiomegaly.", "x"),
                EvalPair::new("c2", "m", "Study limited by motion.", "y"),
            ],
            "t",
        )
        .unwrap();
        let run = run_sei(&c, &suite(), &PerturbEngine::Rule, 3, &ErrorLevel::ALL, SeiTarget::References, Execution::Parallel)
            .unwrap();
        assert_eq!(run.skipped, ["c2"]);
        assert_eq!(run.records.len(), 3);
        assert!(run.grid.iter().all(|d| d.model_id == GROUND_TRUTH_MODEL));
        assert!(run.grid.iter().all(|d| d.delta_abs <= 0.0));
    }
}
