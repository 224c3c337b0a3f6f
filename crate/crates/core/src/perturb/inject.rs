use std::collections::BTreeSet;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    capitalize_first, decapitalize_first, match_case, Edit, EditKind, Engine, ErrorLevel,
    PerturbError, PerturbedReport, ReportSource,
};
use crate::llm::{inject_template, LanguageModel};
use crate::metrics::entity_f1;
use crate::textkit::{
    locate_findings, Laterality, Lexicon, LocatedFinding, Segment, Sentences,
};

/// Relative sampling weight of each factual edit kind.
pub const EDIT_KIND_WEIGHTS: [(EditKind, u32); 5] = [
    (EditKind::NegationFlip, 3),
    (EditKind::LateralitySwap, 3),
    (EditKind::MeasurementChange, 1),
    (EditKind::FindingInsert, 1),
    (EditKind::FindingDelete, 1),
];

const MAX_RESAMPLES: usize = 16;
const MEASUREMENT_FACTORS: [f64; 3] = [2.0, 3.0, 0.5];

/// Number of edits for a level: 1, 2, or max(3, ceil(0.3 * findings)).
pub fn edit_budget(level: ErrorLevel, findings: usize) -> usize {
    match level {
        ErrorLevel::One => 1,
        ErrorLevel::Two => 2,
        ErrorLevel::Multiple => 3.max((3 * findings).div_ceil(10)),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Site {
    /// Index into the located findings.
    Finding(usize),
    Sentence(usize),
    Insert,
}

struct Planned {
    kind: EditKind,
    site: Site,
}

fn sites_of(kind: EditKind, located: &[LocatedFinding], sentences: usize) -> Vec<Site> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    match kind {
        EditKind::NegationFlip => {
            for (i, l) in located.iter().enumerate() {
                let anchor = l.cue_bytes.clone().unwrap_or(l.entity_bytes.clone());
                if seen.insert((l.sentence, anchor.start, anchor.end)) {
                    out.push(Site::Finding(i));
                }
            }
        }
        EditKind::LateralitySwap => {
            for (i, l) in located.iter().enumerate() {
                if let Some(r) = &l.laterality_bytes {
                    if seen.insert((l.sentence, r.start, r.end)) {
                        out.push(Site::Finding(i));
                    }
                }
            }
        }
        EditKind::MeasurementChange => {
            for (i, l) in located.iter().enumerate() {
                if let Some(r) = &l.number_bytes {
                    if seen.insert((l.sentence, r.start, r.end)) {
                        out.push(Site::Finding(i));
                    }
                }
            }
        }
        EditKind::FindingDelete => {
            let with_findings: BTreeSet<usize> = located.iter().map(|l| l.sentence).collect();
            out.extend(with_findings.into_iter().filter(|&s| s < sentences).map(Site::Sentence));
        }
        EditKind::FindingInsert => out.push(Site::Insert),
        _ => {}
    }
    out
}

fn sentence_of(site: &Site, located: &[LocatedFinding]) -> Option<usize> {
    match site {
        Site::Finding(i) => Some(located[*i].sentence),
        Site::Sentence(s) => Some(*s),
        Site::Insert => None,
    }
}

/// Picks up to `n` edits, at most one per source sentence.
fn plan(
    n: usize,
    located: &[LocatedFinding],
    sentences: usize,
    insertable: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Planned> {
    let mut pools: Vec<(EditKind, u32, Vec<Site>)> = EDIT_KIND_WEIGHTS
        .iter()
        .map(|&(k, w)| (k, w, sites_of(k, located, sentences)))
        .collect();
    let mut touched = BTreeSet::new();
    let mut inserts = 0;
    let mut out = Vec::new();
    while out.len() < n {
        for (kind, _, pool) in pools.iter_mut() {
            if *kind == EditKind::FindingInsert {
                if inserts >= insertable {
                    pool.clear();
                }
            } else {
                pool.retain(|s| sentence_of(s, located).is_none_or(|x| !touched.contains(&x)));
            }
        }
        let total: u32 = pools.iter().filter(|p| !p.2.is_empty()).map(|p| p.1).sum();
        if total == 0 {
            break;
        }
        let mut ticket = rng.random_range(0..total);
        let slot = pools
            .iter()
            .position(|(_, w, pool)| {
                if pool.is_empty() {
                    return false;
                }
                if ticket < *w {
                    true
                } else {
                    ticket -= w;
                    false
                }
            })
            .expect("ticket within total weight");
        let (kind, _, pool) = &mut pools[slot];
        let site = if *kind == EditKind::FindingInsert {
            inserts += 1;
            Site::Insert
        } else {
            let s = pool.swap_remove(rng.random_range(0..pool.len()));
            if let Some(x) = sentence_of(&s, located) {
                touched.insert(x);
            }
            s
        };
        out.push(Planned { kind: *kind, site });
    }
    out
}

fn remove_with_trailing_space(text: &str, r: Range<usize>) -> String {
    let rest = &text[r.end..];
    let trimmed = rest.trim_start();
    let mut out = String::with_capacity(text.len());
    out.push_str(&text[..r.start]);
    out.push_str(trimmed);
    if r.start == 0 {
        capitalize_first(&out)
    } else {
        out
    }
}

fn strip_terminal(s: &str) -> &str {
    s.trim_end_matches(['.', '!', '?']).trim()
}

fn flip_negation(text: &str, l: &LocatedFinding) -> String {
    match &l.cue_bytes {
        Some(cue) => {
            let after = if text[cue.clone()].eq_ignore_ascii_case("without") {
                let mut t = text.to_string();
                t.replace_range(cue.clone(), &match_case(&text[cue.clone()], "with"));
                t
            } else {
                remove_with_trailing_space(text, cue.clone())
            };
            let surface = &text[l.entity_bytes.clone()];
            if strip_terminal(&after).eq_ignore_ascii_case(surface) {
                format!("{} is present.", capitalize_first(&surface.to_lowercase()))
            } else {
                after
            }
        }
        None => {
            let mut at = l.entity_bytes.start;
            if let Some(lat) = &l.laterality_bytes {
                if lat.end <= at && text[lat.end..at].trim().is_empty() {
                    at = lat.start;
                }
            }
            let head = text[..at].trim_end();
            let prev_word = head.rsplit(char::is_whitespace).next().unwrap_or("");
            if matches!(prev_word.to_ascii_lowercase().as_str(), "a" | "an") {
                let start = head.len() - prev_word.len();
                let mut t = String::with_capacity(text.len() + 2);
                t.push_str(&text[..start]);
                t.push_str(&match_case(prev_word, "no"));
                t.push_str(&text[head.len()..]);
                t
            } else if at == 0 {
                format!("No {}", decapitalize_first(text))
            } else {
                let mut t = text.to_string();
                t.insert_str(at, "no ");
                t
            }
        }
    }
}

fn swap_laterality(text: &str, l: &LocatedFinding, lexicon: &Lexicon) -> String {
    let r = l.laterality_bytes.clone().expect("laterality site");
    let to = match l.finding.laterality {
        Laterality::Left => Laterality::Right,
        _ => Laterality::Left,
    };
    let word = lexicon.laterality_surface(to).unwrap_or("left");
    let mut t = text.to_string();
    t.replace_range(r.clone(), &match_case(&text[r], word));
    t
}

fn change_measurement(text: &str, l: &LocatedFinding, rng: &mut ChaCha8Rng) -> String {
    let r = l.number_bytes.clone().expect("measurement site");
    let old: f64 = text[r.clone()].parse().unwrap_or(0.0);
    let factor = MEASUREMENT_FACTORS[rng.random_range(0..MEASUREMENT_FACTORS.len())];
    let new = if old == 0.0 { 5.0 } else { (old * factor * 10.0).round() / 10.0 };
    let new = if new == old { old + 1.0 } else { new };
    let mut t = text.to_string();
    t.replace_range(r, &format!("{new}"));
    t
}

fn attempt(
    doc: &Sentences,
    located: &[LocatedFinding],
    planned: &[Planned],
    insert_terms: &[&str],
    lexicon: &Lexicon,
    rng: &mut ChaCha8Rng,
) -> (String, Vec<Edit>) {
    let n = doc.len();
    let mut texts: Vec<Option<String>> = doc.parts.iter().map(|p| Some(p.text.clone())).collect();
    let mut inserted: Vec<(usize, String)> = Vec::new();
    let mut manifest = Vec::new();
    let mut next_insert = insert_terms.iter();
    for p in planned {
        match (&p.site, p.kind) {
            (Site::Finding(i), kind) => {
                let l = &located[*i];
                let before = doc.parts[l.sentence].text.clone();
                let after = match kind {
                    EditKind::NegationFlip => flip_negation(&before, l),
                    EditKind::LateralitySwap => swap_laterality(&before, l, lexicon),
                    _ => change_measurement(&before, l, rng),
                };
                texts[l.sentence] = Some(after.clone());
                manifest.push(Edit {
                    kind,
                    sentence_index: l.sentence,
                    before,
                    after,
                    moved_to: None,
                });
            }
            (Site::Sentence(s), _) => {
                texts[*s] = None;
                manifest.push(Edit {
                    kind: EditKind::FindingDelete,
                    sentence_index: *s,
                    before: doc.parts[*s].text.clone(),
                    after: String::new(),
                    moved_to: None,
                });
            }
            (Site::Insert, _) => {
                let term = next_insert.next().expect("insert budget checked");
                let surface = &lexicon.entity(term).expect("lexicon term").variants[0];
                let sentence = format!("{} is present.", capitalize_first(surface));
                let at = rng.random_range(0..=n);
                inserted.push((at, sentence.clone()));
                manifest.push(Edit {
                    kind: EditKind::FindingInsert,
                    sentence_index: at,
                    before: String::new(),
                    after: sentence,
                    moved_to: None,
                });
            }
        }
    }

    let mut parts: Vec<Segment> = Vec::new();
    for slot in 0..=n {
        for (_, s) in inserted.iter().filter(|(at, _)| *at == slot) {
            parts.push(Segment {
                text: s.clone(),
                sep: " ".into(),
            });
        }
        if let Some(Some(text)) = texts.get(slot) {
            parts.push(Segment {
                text: text.clone(),
                sep: doc.parts[slot].sep.clone(),
            });
        }
    }
    let last_sep = doc.parts.last().map(|p| p.sep.clone()).unwrap_or_default();
    let count = parts.len();
    for (k, part) in parts.iter_mut().enumerate() {
        if k + 1 == count {
            part.sep = last_sep.clone();
        } else {
            if !part.text.ends_with(['.', '!', '?']) {
                part.text.push('.');
            }
            if part.sep.is_empty() {
                part.sep.push(' ');
            }
        }
    }
    let text = Sentences {
        lead: doc.lead.clone(),
        parts,
    }
    .join();
    (text, manifest)
}

/// Rule-engine error injection. The result always scores below 1 on
/// `entity_f1` against the source; otherwise the plan is resampled.
pub fn inject_errors(
    src: ReportSource<'_>,
    level: ErrorLevel,
    lexicon: &Lexicon,
    seed: u64,
) -> Result<PerturbedReport, PerturbError> {
    let uninjectable = |reason: &str| PerturbError::Uninjectable {
        case_id: src.case_id.to_string(),
        model_id: src.model_id.to_string(),
        reason: reason.to_string(),
    };
    let doc = Sentences::parse(src.text);
    let located = locate_findings(&doc, lexicon);
    if located.is_empty() {
        return Err(uninjectable("no extractable finding"));
    }
    let n = edit_budget(level, located.len());
    let present: BTreeSet<&str> = located.iter().map(|l| l.finding.entity.as_str()).collect();
    let absent_terms: Vec<&str> = lexicon
        .entities
        .iter()
        .map(|e| e.term.as_str())
        .filter(|t| !present.contains(t))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RESAMPLES {
        let mut pool = absent_terms.clone();
        let mut insert_terms = Vec::new();
        while insert_terms.len() < n && !pool.is_empty() {
            insert_terms.push(pool.swap_remove(rng.random_range(0..pool.len())));
        }
        let planned = plan(n, &located, doc.len(), insert_terms.len(), &mut rng);
        if planned.is_empty() {
            break;
        }
        let (text, manifest) = attempt(&doc, &located, &planned, &insert_terms, lexicon, &mut rng);
        if entity_f1(&text, src.text, lexicon).value < 1.0 {
            return Ok(PerturbedReport {
                text,
                manifest,
                requested_edits: n,
                ..PerturbedReport::unchanged(&src, level.variant(), Engine::Rule, Some(seed))
            });
        }
    }
    Err(uninjectable("no sampled edit changed the findings"))
}

/// Error injection through a language model; flagged when the reply leaves
/// every finding intact.
pub fn inject_llm(
    src: ReportSource<'_>,
    level: ErrorLevel,
    model: &dyn LanguageModel,
    lexicon: &Lexicon,
) -> Result<PerturbedReport, PerturbError> {
    let findings = locate_findings(&Sentences::parse(src.text), lexicon).len();
    if findings == 0 {
        return Err(PerturbError::Uninjectable {
            case_id: src.case_id.to_string(),
            model_id: src.model_id.to_string(),
            reason: "no extractable finding".into(),
        });
    }
    let n = edit_budget(level, findings);
    let count = n.to_string();
    let prompt = inject_template().render(&[("report", src.text), ("count", &count)]);
    let text = model
        .complete(&prompt)
        .map_err(|source| PerturbError::Llm {
            case_id: src.case_id.to_string(),
            model_id: src.model_id.to_string(),
            source,
        })?
        .trim()
        .to_string();
    let guard_failed = entity_f1(&text, src.text, lexicon).value >= 1.0;
    Ok(PerturbedReport {
        text,
        guard_failed,
        requested_edits: n,
        ..PerturbedReport::unchanged(&src, level.variant(), Engine::Llm, None)
    })
}
