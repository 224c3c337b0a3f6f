use std::sync::{Arc, OnceLock};

use regex::Regex;

use super::{MetricError, MetricId, MetricScore};
use crate::llm::{fenced_section, green_judge_template, LanguageModel, LlmError, Prompt, PromptTemplate};
use crate::textkit::{extract_findings, Finding, Laterality, Lexicon};

const CATEGORIES: [char; 6] = ['a', 'b', 'c', 'd', 'e', 'f'];

/// Counts parsed from a judge reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JudgeCounts {
    pub matched: u64,
    /// Error counts for categories (a) through (f).
    pub errors: [u64; 6],
}

impl JudgeCounts {
    pub fn total_errors(&self) -> u64 {
        self.errors.iter().sum()
    }

    pub fn score(&self) -> f64 {
        let denom = self.matched + self.total_errors();
        if denom == 0 {
            1.0
        } else {
            self.matched as f64 / denom as f64
        }
    }
}

fn patterns() -> &'static (Regex, Regex) {
    static PATTERNS: OnceLock<(Regex, Regex)> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        (
            Regex::new(r"^Matched findings:\s*(\d+)$").unwrap(),
            Regex::new(r"^\(([a-f])\)[^:]*:\s*(\d+)$").unwrap(),
        )
    })
}

/// Parses the reply line by line with anchored patterns.
pub fn parse_judge_reply(reply: &str) -> Result<JudgeCounts, MetricError> {
    let fail = |reason: String| MetricError::JudgeReply {
        reason,
        reply: reply.to_string(),
    };
    let (matched_re, category_re) = patterns();
    let mut matched = None;
    let mut errors: [Option<u64>; 6] = [None; 6];
    for line in reply.lines().map(str::trim) {
        if let Some(c) = matched_re.captures(line) {
            let n = c[1].parse().map_err(|_| fail("count out of range".into()))?;
            if matched.replace(n).is_some() {
                return Err(fail("matched findings given twice".into()));
            }
        } else if let Some(c) = category_re.captures(line) {
            let slot = (c[1].as_bytes()[0] - b'a') as usize;
            let n = c[2].parse().map_err(|_| fail("count out of range".into()))?;
            if errors[slot].replace(n).is_some() {
                return Err(fail(format!("category ({}) given twice", CATEGORIES[slot])));
            }
        }
    }
    let matched = matched.ok_or_else(|| fail("missing matched findings line".into()))?;
    let mut out = [0; 6];
    for (i, e) in errors.iter().enumerate() {
        out[i] = e.ok_or_else(|| fail(format!("missing category ({})", CATEGORIES[i])))?;
    }
    Ok(JudgeCounts {
        matched,
        errors: out,
    })
}

/// Sends the judge prompt through a language model.
#[derive(Clone)]
pub struct GreenJudge {
    model: Arc<dyn LanguageModel>,
    template: PromptTemplate,
}

impl GreenJudge {
    pub fn new(model: Arc<dyn LanguageModel>) -> Self {
        GreenJudge {
            model,
            template: green_judge_template(),
        }
    }

    pub fn prompt(&self, candidate: &str, reference: &str) -> Prompt {
        self.template
            .render(&[("reference", reference), ("candidate", candidate)])
    }

    pub fn ask(&self, candidate: &str, reference: &str) -> Result<String, LlmError> {
        self.model.complete(&self.prompt(candidate, reference))
    }
}

/// Judge-based score: matched / (matched + errors).
pub fn green_score(candidate: &str, reference: &str, judge: &GreenJudge) -> Result<MetricScore, MetricError> {
    let reply = judge.ask(candidate, reference)?;
    let counts = parse_judge_reply(&reply)?;
    let mut components = vec![
        ("matched", counts.matched as f64),
        ("errors", counts.total_errors() as f64),
    ];
    const NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
    components.extend(NAMES.iter().zip(counts.errors).map(|(&n, e)| (n, e as f64)));
    Ok(MetricScore::new(MetricId::Green, counts.score(), components))
}

/// Same entity, polarity and laterality, and no conflicting measurement.
fn agrees(c: &Finding, r: &Finding) -> Option<Option<usize>> {
    let same = c.entity == r.entity
        && c.polarity == r.polarity
        && c.laterality == r.laterality
        && (c.measurement == r.measurement || c.measurement.is_none() || r.measurement.is_none());
    same.then_some(None)
}

/// Same entity with one wrong attribute, as the index of its error category.
fn misreported(c: &Finding, r: &Finding) -> Option<Option<usize>> {
    (c.entity == r.entity).then(|| {
        Some(if c.polarity != r.polarity {
            4
        } else if c.laterality != r.laterality && r.laterality != Laterality::None {
            2
        } else {
            5
        })
    })
}

/// Offline stand-in model that answers the judge prompt by comparing
/// lexicon findings of the two fenced reports. Deterministic.
pub struct FindingsJudge {
    lexicon: Arc<Lexicon>,
}

impl FindingsJudge {
    pub fn new(lexicon: Arc<Lexicon>) -> Self {
        FindingsJudge { lexicon }
    }

    fn counts(&self, candidate: &str, reference: &str) -> JudgeCounts {
        let cand = extract_findings(candidate, &self.lexicon);
        let refs = extract_findings(reference, &self.lexicon);
        let mut ref_used = vec![false; refs.len()];
        let mut cand_used = vec![false; cand.len()];
        let mut errors = [0u64; 6];
        let mut matched = 0;
        let passes: [fn(&Finding, &Finding) -> Option<Option<usize>>; 2] = [agrees, misreported];
        for pass in passes {
            for (i, c) in cand.iter().enumerate() {
                if cand_used[i] {
                    continue;
                }
                let hit = refs
                    .iter()
                    .enumerate()
                    .find_map(|(j, r)| (!ref_used[j]).then(|| pass(c, r).map(|e| (j, e))).flatten());
                if let Some((j, err)) = hit {
                    cand_used[i] = true;
                    ref_used[j] = true;
                    match err {
                        None => matched += 1,
                        Some(slot) => errors[slot] += 1,
                    }
                }
            }
        }
        errors[0] += cand_used.iter().filter(|&&u| !u).count() as u64;
        errors[1] += ref_used.iter().filter(|&&u| !u).count() as u64;
        JudgeCounts { matched, errors }
    }
}

impl LanguageModel for FindingsJudge {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let reference = fenced_section(&prompt.user, "REFERENCE:")
            .ok_or_else(|| LlmError::Rejected("prompt has no REFERENCE section".into()))?;
        let candidate = fenced_section(&prompt.user, "CANDIDATE:")
            .ok_or_else(|| LlmError::Rejected("prompt has no CANDIDATE section".into()))?;
        let c = self.counts(candidate, reference);
        Ok(format!(
            "Matched findings: {}\n\
             (a) False report of a finding: {}\n\
             (b) Missing a finding: {}\n\
             (c) Misidentification of a finding's anatomic location or laterality: {}\n\
             (d) Misassessment of the severity of a finding: {}\n\
             (e) Incorrect negation of a finding: {}\n\
             (f) Incorrect measurement of a finding: {}\n",
            c.matched, c.errors[0], c.errors[1], c.errors[2], c.errors[3], c.errors[4], c.errors[5]
        ))
    }
}
