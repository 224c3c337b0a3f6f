use std::collections::HashMap;

use super::{f1, MetricId, MetricScore};
use crate::textkit::{stem, Lexicon};

pub const BLEU_MAX_ORDER: usize = 4;

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn as_strs<S: AsRef<str>>(tokens: &[S]) -> Vec<&str> {
    tokens.iter().map(AsRef::as_ref).collect()
}

/// Sentence BLEU-4 with add-one smoothing of empty higher-order matches.
pub fn bleu<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> MetricScore {
    let cand = as_strs(candidate);
    let refs = as_strs(reference);
    let c = cand.len() as f64;
    let r = refs.len() as f64;
    let mut components = Vec::with_capacity(BLEU_MAX_ORDER + 3);
    if cand.is_empty() {
        components.extend([("bp", 0.0), ("ref_len", r), ("cand_len", 0.0)]);
        return MetricScore::new(MetricId::Bleu, 0.0, components);
    }

    const NAMES: [&str; BLEU_MAX_ORDER] = ["p1", "p2", "p3", "p4"];
    let mut log_sum = 0.0;
    for n in 1..=BLEU_MAX_ORDER {
        let cand_counts = ngram_counts(&cand, n);
        let ref_counts = ngram_counts(&refs, n);
        let total = cand.len().saturating_sub(n - 1) as f64;
        let matched: usize = cand_counts
            .iter()
            .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if matched > 0 {
            matched as f64 / total
        } else if n == 1 {
            0.0
        } else {
            1.0 / (total + 1.0)
        };
        components.push((NAMES[n - 1], precision));
        log_sum += precision.ln();
    }
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    components.extend([("bp", bp), ("ref_len", r), ("cand_len", c)]);
    let value = if components[0].1 == 0.0 {
        0.0
    } else {
        bp * (log_sum / BLEU_MAX_ORDER as f64).exp()
    };
    MetricScore::new(MetricId::Bleu, value, components)
}

pub(crate) fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over the longest common subsequence.
pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> MetricScore {
    let cand = as_strs(candidate);
    let refs = as_strs(reference);
    let lcs = lcs_len(&cand, &refs);
    let (precision, recall) = if lcs == 0 {
        (0.0, 0.0)
    } else {
        (lcs as f64 / cand.len() as f64, lcs as f64 / refs.len() as f64)
    };
    MetricScore::new(
        MetricId::RougeL,
        f1(precision, recall),
        vec![("precision", precision), ("recall", recall), ("lcs", lcs as f64)],
    )
}

/// One-to-one alignment from candidate positions to reference positions.
pub(crate) fn meteor_alignment(cand: &[&str], refs: &[&str], lexicon: &Lexicon) -> Vec<Option<usize>> {
    let cand_stems: Vec<String> = cand.iter().map(|t| stem(t)).collect();
    let ref_stems: Vec<String> = refs.iter().map(|t| stem(t)).collect();
    let stages: [&dyn Fn(usize, usize) -> bool; 3] = [
        &|i, j| cand[i] == refs[j],
        &|i, j| cand_stems[i] == ref_stems[j],
        &|i, j| lexicon.are_synonyms(cand[i], refs[j]),
    ];
    let mut align: Vec<Option<usize>> = vec![None; cand.len()];
    let mut taken = vec![false; refs.len()];
    for matches in stages {
        for i in 0..cand.len() {
            if align[i].is_some() {
                continue;
            }
            let follow = i
                .checked_sub(1)
                .and_then(|p| align[p])
                .map(|j| j + 1)
                .filter(|&j| j < refs.len() && !taken[j] && matches(i, j));
            let pick = follow.or_else(|| (0..refs.len()).find(|&j| !taken[j] && matches(i, j)));
            if let Some(j) = pick {
                align[i] = Some(j);
                taken[j] = true;
            }
        }
    }
    align
}

pub(crate) fn count_chunks(align: &[Option<usize>]) -> usize {
    align
        .iter()
        .enumerate()
        .filter(|&(i, a)| {
            a.is_some() && !(i > 0 && align[i - 1].zip(*a).is_some_and(|(p, c)| p + 1 == c))
        })
        .count()
}

/// METEOR with exact, stem and synonym stages and a fragmentation penalty.
pub fn meteor<S: AsRef<str>>(candidate: &[S], reference: &[S], lexicon: &Lexicon) -> MetricScore {
    let cand = as_strs(candidate);
    let refs = as_strs(reference);
    let align = meteor_alignment(&cand, &refs, lexicon);
    let m = align.iter().flatten().count();
    if m == 0 {
        return MetricScore::new(
            MetricId::Meteor,
            0.0,
            vec![("precision", 0.0), ("recall", 0.0), ("matches", 0.0), ("chunks", 0.0), ("penalty", 0.0)],
        );
    }
    let chunks = count_chunks(&align);
    let precision = m as f64 / cand.len() as f64;
    let recall = m as f64 / refs.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = if chunks <= 1 {
        0.0
    } else {
        0.5 * (chunks as f64 / m as f64).powi(3)
    };
    MetricScore::new(
        MetricId::Meteor,
        fmean * (1.0 - penalty),
        vec![
            ("precision", precision),
            ("recall", recall),
            ("matches", m as f64),
            ("chunks", chunks as f64),
            ("penalty", penalty),
        ],
    )
}
