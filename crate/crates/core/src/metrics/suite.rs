use std::sync::Arc;

use super::{
    bleu, crg_like, embed_f1, entity_f1, green_score, meteor, rate_like, rouge_l, EmbeddingProvider,
    GreenJudge, HashedProvider, MetricError, MetricId, MetricScore, Prevalence,
};
use crate::textkit::{words, Lexicon};

/// Everything the eight metrics need, shared read-only across workers.
#[derive(Clone)]
pub struct SuiteConfig {
    /// Enabled metrics; scored in [`MetricId::ALL`] order regardless of listing order.
    pub metrics: Vec<MetricId>,
    pub lexicon: Arc<Lexicon>,
    pub embeddings: Arc<dyn EmbeddingProvider>,
    pub judge: Option<GreenJudge>,
    pub prevalence: Prevalence,
}

impl SuiteConfig {
    /// All metrics, bundled lexicon, hashed embeddings, uniform prevalence, no judge.
    pub fn offline(lexicon: Arc<Lexicon>) -> Self {
        let prevalence = Prevalence::uniform(&lexicon, 0.5);
        SuiteConfig {
            metrics: MetricId::ALL.to_vec(),
            lexicon,
            embeddings: Arc::new(HashedProvider::default()),
            judge: None,
            prevalence,
        }
    }

    pub fn with_metrics(mut self, metrics: &[MetricId]) -> Self {
        self.metrics = metrics.to_vec();
        self
    }

    pub fn with_judge(mut self, judge: GreenJudge) -> Self {
        self.judge = Some(judge);
        self
    }

    pub fn with_prevalence(mut self, prevalence: Prevalence) -> Self {
        self.prevalence = prevalence;
        self
    }

    pub fn with_embeddings(mut self, embeddings: Arc<dyn EmbeddingProvider>) -> Self {
        self.embeddings = embeddings;
        self
    }

    pub fn enabled(&self) -> Vec<MetricId> {
        let mut ids = self.metrics.clone();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// One metric's result for one pair.
#[derive(Debug)]
pub struct MetricOutcome {
    pub metric: MetricId,
    pub result: Result<MetricScore, MetricError>,
}

/// Scores a candidate against a reference with every enabled metric.
/// A failing metric is recorded in its slot and does not stop the others.
pub fn score_all(candidate: &str, reference: &str, config: &SuiteConfig) -> Vec<MetricOutcome> {
    let cand_tokens = words(candidate);
    let ref_tokens = words(reference);
    let lexicon = config.lexicon.as_ref();
    config
        .enabled()
        .into_iter()
        .map(|metric| {
            let result = match metric {
                MetricId::Bleu => Ok(bleu(&cand_tokens, &ref_tokens)),
                MetricId::RougeL => Ok(rouge_l(&cand_tokens, &ref_tokens)),
                MetricId::Meteor => Ok(meteor(&cand_tokens, &ref_tokens, lexicon)),
                MetricId::EmbedF1 => {
                    embed_f1(&cand_tokens, &ref_tokens, config.embeddings.as_ref()).map_err(Into::into)
                }
                MetricId::EntityF1 => Ok(entity_f1(candidate, reference, lexicon)),
                MetricId::RateLike => rate_like(candidate, reference, lexicon, config.embeddings.as_ref()),
                MetricId::Green => match &config.judge {
                    Some(judge) => green_score(candidate, reference, judge),
                    None => Err(MetricError::NoJudge),
                },
                MetricId::Crg => crg_like(candidate, reference, lexicon, &config.prevalence),
            };
            MetricOutcome { metric, result }
        })
        .collect()
}
