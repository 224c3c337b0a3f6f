use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::{
    capitalize_first, decapitalize_first, match_case, Edit, EditKind, Engine, PerturbError,
    PerturbedReport, ReportSource, Semantics,
};
use crate::llm::{rephrase_retry_template, rephrase_template, LanguageModel};
use crate::scores::Variant;
use crate::textkit::{label_report, token_spans, Lexicon, Segment, Sentences};

/// Share of eligible tokens swapped for a synonym.
pub const SYNONYM_FRACTION: f64 = 0.3;
const VOICE_PROBABILITY: f64 = 0.5;
const MAX_GUARD_FAILURES: usize = 32;

fn voice_patterns() -> &'static (Regex, Regex) {
    static P: OnceLock<(Regex, Regex)> = OnceLock::new();
    P.get_or_init(|| {
        (
            Regex::new(r"^(?i:there) (is|are) (.+)\.$").unwrap(),
            Regex::new(r"^(.+) (is|are) present\.$").unwrap(),
        )
    })
}

/// "There is X." <-> "X is present." on a single sentence.
pub fn voice_swap(sentence: &str) -> Option<String> {
    let (there, present) = voice_patterns();
    if let Some(c) = there.captures(sentence) {
        let body = c[2].trim();
        if body.is_empty() || body.ends_with(" present") {
            return None;
        }
        return Some(format!("{} {} present.", capitalize_first(body), &c[1]));
    }
    let c = present.captures(sentence)?;
    let subject = c[1].trim();
    if subject.to_ascii_lowercase().starts_with("there ") {
        return None;
    }
    Some(format!("There {} {}.", &c[2], decapitalize_first(subject)))
}

/// Rule-engine rephrasing: voice templates, synonym swaps, then a sentence
/// permutation. Every edit is kept only if labels and findings survive it.
pub fn rephrase_rule(src: ReportSource<'_>, lexicon: &Lexicon, seed: u64) -> PerturbedReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = Semantics::of(src.text, lexicon);
    let mut doc = Sentences::parse(src.text);
    let mut manifest = Vec::new();
    let mut failures = 0;

    let keep = |doc: &Sentences, failures: &mut usize| -> bool {
        if *failures >= MAX_GUARD_FAILURES {
            return false;
        }
        let ok = Semantics::of(&doc.join(), lexicon) == target;
        if !ok {
            *failures += 1;
        }
        ok
    };

    for i in 0..doc.len() {
        if rng.random::<f64>() >= VOICE_PROBABILITY {
            continue;
        }
        let Some(after) = voice_swap(&doc.parts[i].text) else {
            continue;
        };
        let before = std::mem::replace(&mut doc.parts[i].text, after.clone());
        if keep(&doc, &mut failures) {
            manifest.push(Edit {
                kind: EditKind::VoiceTemplate,
                sentence_index: i,
                before,
                after,
                moved_to: None,
            });
        } else {
            doc.parts[i].text = before;
        }
    }

    let eligible: Vec<(usize, std::ops::Range<usize>, usize)> = doc
        .parts
        .iter()
        .enumerate()
        .flat_map(|(i, part)| {
            token_spans(&part.text).into_iter().filter_map(move |r| {
                let word = part.text[r.clone()].to_lowercase();
                lexicon.synonym_set_of(&word).map(|set| (i, r, set))
            })
        })
        .collect();
    if !eligible.is_empty() {
        let budget = ((SYNONYM_FRACTION * eligible.len() as f64).floor() as usize).max(1);
        let mut picks: Vec<_> = eligible.iter().collect();
        picks.shuffle(&mut rng);
        picks.truncate(budget);
        // Right to left within a sentence so earlier byte ranges stay valid.
        picks.sort_by(|a, b| (a.0, b.1.start).cmp(&(b.0, a.1.start)));
        for (i, range, set) in picks {
            let original = doc.parts[*i].text[range.clone()].to_string();
            let lower = original.to_lowercase();
            let options: Vec<&String> = lexicon.synonym_sets[*set]
                .iter()
                .filter(|w| **w != lower)
                .collect();
            let Some(choice) = options.get(rng.random_range(0..options.len().max(1))) else {
                continue;
            };
            let replacement = if original.chars().all(|c| !c.is_alphabetic() || c.is_uppercase())
                && original.len() > 1
            {
                choice.to_uppercase()
            } else {
                match_case(&original, choice)
            };
            let saved = doc.parts[*i].text.clone();
            doc.parts[*i].text.replace_range(range.clone(), &replacement);
            fix_article(&mut doc.parts[*i].text, range.start);
            if keep(&doc, &mut failures) {
                manifest.push(Edit {
                    kind: EditKind::SynonymSwap,
                    sentence_index: *i,
                    before: original,
                    after: replacement,
                    moved_to: None,
                });
            } else {
                doc.parts[*i].text = saved;
            }
        }
    }

    if doc.len() >= 2 {
        let n = doc.len();
        let mut order: Vec<usize> = (0..n).collect();
        while order.iter().enumerate().all(|(k, &v)| k == v) {
            order.shuffle(&mut rng);
        }
        let reordered = permute(&doc, &order);
        if keep(&reordered, &mut failures) {
            for (new_pos, &old) in order.iter().enumerate() {
                if new_pos != old {
                    manifest.push(Edit {
                        kind: EditKind::SentenceReorder,
                        sentence_index: old,
                        before: doc.parts[old].text.clone(),
                        after: reordered.parts[new_pos].text.clone(),
                        moved_to: Some(new_pos),
                    });
                }
            }
            doc = reordered;
        }
    }

    let text = doc.join();
    if text == src.text {
        manifest.clear();
    }
    PerturbedReport {
        text,
        manifest,
        ..PerturbedReport::unchanged(&src, Variant::Rephrase, Engine::Rule, Some(seed))
    }
}

/// Makes an `a`/`an` right before byte `word_start` agree with the word.
fn fix_article(text: &mut String, word_start: usize) {
    let head = &text[..word_start];
    let Some(stripped) = head.strip_suffix(' ') else {
        return;
    };
    let article_start = stripped.rfind(|c: char| !c.is_alphabetic()).map_or(0, |p| p + 1);
    let article = &stripped[article_start..];
    if !matches!(article.to_ascii_lowercase().as_str(), "a" | "an") {
        return;
    }
    let vowel = text[word_start..]
        .chars()
        .next()
        .is_some_and(|c| "aeiouAEIOU".contains(c));
    let wanted = match_case(article, if vowel { "an" } else { "a" });
    text.replace_range(article_start..stripped.len(), &wanted);
}

/// Moves sentence texts; separators stay in their slots so spacing is kept.
fn permute(doc: &Sentences, order: &[usize]) -> Sentences {
    let parts = order
        .iter()
        .enumerate()
        .map(|(slot, &old)| {
            let mut text = doc.parts[old].text.clone();
            let terminated = text.ends_with(['.', '!', '?']);
            if !terminated && slot + 1 < doc.len() {
                text.push('.');
            }
            let mut sep = doc.parts[slot].sep.clone();
            if sep.is_empty() && slot + 1 < doc.len() {
                sep.push(' ');
            }
            Segment { text, sep }
        })
        .collect();
    Sentences {
        lead: doc.lead.clone(),
        parts,
    }
}

/// Rephrasing through a language model, guarded on the label vector. One retry
/// with a stricter prompt; a second failure is kept but flagged.
pub fn rephrase_llm(
    src: ReportSource<'_>,
    model: &dyn LanguageModel,
    lexicon: &Lexicon,
) -> Result<PerturbedReport, PerturbError> {
    let wrap = |source| PerturbError::Llm {
        case_id: src.case_id.to_string(),
        model_id: src.model_id.to_string(),
        source,
    };
    let labels = label_report(src.text, lexicon).ok();
    let vars = [("report", src.text)];
    let first = model
        .complete(&rephrase_template().render(&vars))
        .map_err(wrap)?
        .trim()
        .to_string();
    let (text, guard_failed) = if label_report(&first, lexicon).ok() == labels {
        (first, false)
    } else {
        let second = model
            .complete(&rephrase_retry_template().render(&vars))
            .map_err(wrap)?
            .trim()
            .to_string();
        let failed = label_report(&second, lexicon).ok() != labels;
        (second, failed)
    };
    Ok(PerturbedReport {
        text,
        guard_failed,
        ..PerturbedReport::unchanged(&src, Variant::Rephrase, Engine::Llm, None)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmError, Prompt};
    use std::sync::Mutex;

    fn src(text: &str) -> ReportSource<'_> {
        ReportSource {
            case_id: "c1",
            model_id: "m1",
            text,
        }
    }

    const REPORT: &str = "There is a small nodule in the right upper lobe. No pleural effusion. Heart size is normal. Mild emphysema is seen.";

    #[test]
    fn voice_templates_round_trip() {
        assert_eq!(voice_swap("There is mild cardiomegaly.").unwrap(), "Mild cardiomegaly is present.");
        assert_eq!(voice_swap("Mild cardiomegaly is present.").unwrap(), "There is mild cardiomegaly.");
        assert_eq!(voice_swap("Nodules are present.").unwrap(), "There are nodules.");
        assert!(voice_swap("Heart size is normal.").is_none());
    }

    #[test]
    fn articles_follow_the_new_word() {
        let mut t = "The aorta has a normal appearance.".to_string();
        t.replace_range(16..22, "unremarkable");
        fix_article(&mut t, 16);
        assert_eq!(t, "The aorta has an unremarkable appearance.");
        let mut t = "An open airway.".to_string();
        t.replace_range(3..7, "patent");
        fix_article(&mut t, 3);
        assert_eq!(t, "A patent airway.");
    }

    #[test]
    fn two_sentences_are_reordered() {
        let lex = Lexicon::bundled();
        let text = "No pleural effusion. Heart size is normal.";
        let out = rephrase_rule(src(text), &lex, 3);
        assert_eq!(out.text.matches('.').count(), 2);
        assert!(out.manifest.iter().any(|e| e.kind == EditKind::SentenceReorder));
        assert_eq!(label_report(&out.text, &lex).unwrap(), label_report(text, &lex).unwrap());
    }

    #[test]
    fn preserves_semantics_and_is_deterministic() {
        let lex = Lexicon::bundled();
        for seed in 0..50 {
            let a = rephrase_rule(src(REPORT), &lex, seed);
            assert_eq!(Semantics::of(&a.text, &lex), Semantics::of(REPORT, &lex));
            assert!(a.manifest.iter().all(|e| e.kind.is_style()));
            assert_eq!(a, rephrase_rule(src(REPORT), &lex, seed));
            assert_ne!(a.text, REPORT);
        }
    }

    #[test]
    fn single_sentence_without_synonyms_may_be_identity() {
        let lex = Lexicon::bundled();
        let out = rephrase_rule(src("Cardiomegaly."), &lex, 1);
        assert_eq!(out.text, "Cardiomegaly.");
        assert!(out.manifest.is_empty());
    }

    #[test]
    fn unterminated_last_sentence_gets_a_period_when_moved() {
        let lex = Lexicon::bundled();
        let out = rephrase_rule(src("No pleural effusion. Cardiomegaly"), &lex, 0);
        assert_eq!(out.text, "Cardiomegaly. No pleural effusion.");
    }

    struct Script(Mutex<Vec<&'static str>>);

    impl LanguageModel for Script {
        fn complete(&self, _: &Prompt) -> Result<String, LlmError> {
            Ok(self.0.lock().unwrap().remove(0).to_string())
        }
    }

    #[test]
    fn llm_guard_accepts_and_flags() {
        let lex = Lexicon::bundled();
        let text = "Cardiomegaly. No pleural effusion.";
        let ok = Script(Mutex::new(vec!["There is cardiomegaly. There is no pleural effusion."]));
        let out = rephrase_llm(src(text), &ok, &lex).unwrap();
        assert!(!out.guard_failed);
        assert_eq!(out.engine, Engine::Llm);

        let bad = Script(Mutex::new(vec!["Normal study.", "Still normal."]));
        let out = rephrase_llm(src(text), &bad, &lex).unwrap();
        assert!(out.guard_failed);
        assert_eq!(out.text, "Still normal.");
    }

    struct Unreachable;

    impl LanguageModel for Unreachable {
        fn complete(&self, _: &Prompt) -> Result<String, LlmError> {
            Err(LlmError::Exhausted {
                attempts: 3,
                last: "connection refused".into(),
            })
        }
    }

    #[test]
    fn llm_failure_names_the_case() {
        let err = rephrase_llm(src("Cardiomegaly."), &Unreachable, &Lexicon::bundled()).unwrap_err();
        assert!(err.to_string().contains("c1"));
    }
}
