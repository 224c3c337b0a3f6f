//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Oracles here are written from the metric definitions, not from the
//! library code, so agreement is evidence rather than repetition.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ctm_core::analysis::{correlation_matrix, metric_series, select_disagreement, spearman, NamedSeries};
use ctm_core::corpus::{parse_corpus, Corpus};
use ctm_core::metrics::{
    bleu, embed_f1, rouge_l, score_all, FindingsJudge, GreenJudge, MetricId, OneHotProvider, Prevalence,
    SuiteConfig,
};
use ctm_core::outputs::{selection_records, write_delta_csv, write_jsonl};
use ctm_core::par::Execution;
use ctm_core::perturb::ErrorLevel;
use ctm_core::pipeline::{rephrase_corpus, run_sei, run_wsg, score_corpus, PerturbEngine, SeiTarget};
use ctm_core::provenance::Provenance;
use ctm_core::scores::{ScoreTable, Variant};
use ctm_core::synth::{bundled_sample_source, random_report, synthetic_corpus};
use ctm_core::textkit::{finding_multiset, label_report, Lexicon};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;

type Outcome = Result<String, String>;

fn lexicon() -> Arc<Lexicon> {
    Arc::new(Lexicon::bundled())
}

fn sample() -> Corpus {
    parse_corpus(bundled_sample_source(), "sample").expect("bundled sample parses")
}

/// Full suite with the deterministic findings judge and corpus prevalence.
fn suite(lex: &Arc<Lexicon>, corpus: &Corpus) -> SuiteConfig {
    let refs = corpus.references();
    let prevalence = Prevalence::from_references(refs.iter().map(|(_, r)| *r), lex).unwrap();
    SuiteConfig::offline(lex.clone())
        .with_prevalence(prevalence)
        .with_judge(GreenJudge::new(Arc::new(FindingsJudge::new(lex.clone()))))
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.1?}, limit {limit:?}"))
    } else {
        Ok(took)
    }
}

// ---------------------------------------------------------------- self-score

fn self_score() -> Outcome {
    let start = Instant::now();
    let lex = lexicon();
    let cfg = SuiteConfig::offline(lex.clone()).with_judge(GreenJudge::new(Arc::new(FindingsJudge::new(lex.clone()))));
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let report = random_report(&lex, &mut rng);
        for o in score_all(&report, &report, &cfg) {
            let v = o.result.map_err(|e| format!("report {i}, {}: {e}", o.metric))?.value;
            if (v - 1.0).abs() > 1e-12 {
                return Err(format!("report {i}: {} = {v}\n{report}", o.metric));
            }
            worst = worst.max((v - 1.0).abs());
        }
    }
    let took = within(Duration::from_secs(10), start)?;
    Ok(format!("200 reports x 8 metrics, max |1 - score| = {worst:e}, {took:.1?}"))
}

// ------------------------------------------------------------------- oracles

const VOCAB: [&str; 6] = ["the", "lung", "is", "clear", "no", "nodule"];

fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<&'static str> {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect()
}

/// Occurrences of `gram` in `tokens`, by direct comparison at each offset.
fn occurrences(tokens: &[&str], gram: &[&str]) -> usize {
    if gram.len() > tokens.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| &tokens[i..i + gram.len()] == gram)
        .count()
}

/// Sentence BLEU-4: clipped n-gram precisions with 1/(total+1) for empty
/// higher-order matches, geometric mean, brevity penalty exp(1 - r/c).
fn bleu_oracle(cand: &[&str], refs: &[&str]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let total = cand.len().saturating_sub(n - 1);
        let mut matched = 0;
        let mut seen: Vec<&[&str]> = Vec::new();
        for i in 0..total {
            let gram = &cand[i..i + n];
            if seen.contains(&gram) {
                continue;
            }
            seen.push(gram);
            matched += occurrences(cand, gram).min(occurrences(refs, gram));
        }
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let (c, r) = (cand.len() as f64, refs.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / 4.0).exp()
}

fn is_subsequence(sub: &[&str], of: &[&str]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|s| it.any(|o| o == s))
}

/// LCS by trying every subsequence of the candidate.
fn lcs_exhaustive(a: &[&str], b: &[&str]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let sub: Vec<&str> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
        if is_subsequence(&sub, b) {
            best = len;
        }
    }
    best
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn rouge_oracle(cand: &[&str], refs: &[&str]) -> f64 {
    let l = lcs_exhaustive(cand, refs) as f64;
    if l == 0.0 {
        return 0.0;
    }
    f1(l / cand.len() as f64, l / refs.len() as f64)
}

/// With one-hot vectors a token's best cosine is 1 if the other side
/// contains it and 0 otherwise, so precision and recall are unigram hit rates.
fn unigram_f1_oracle(cand: &[&str], refs: &[&str]) -> f64 {
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let hits = |from: &[&str], to: &[&str]| from.iter().filter(|t| to.contains(t)).count() as f64 / from.len() as f64;
    let (p, r) = (hits(cand, refs), hits(refs, cand));
    if p == 0.0 || r == 0.0 {
        0.0
    } else {
        f1(p, r)
    }
}

/// Rank of each value: 1 + number below + half the other ties.
fn enumerated_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&o| o < v).count() as f64;
            let ties = x.iter().filter(|&&o| o == v).count() as f64;
            1.0 + below + (ties - 1.0) / 2.0
        })
        .collect()
}

fn spearman_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (enumerated_ranks(x), enumerated_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx * vy).sqrt())
    }
}

fn oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let onehot = OneHotProvider::new(VOCAB);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut check = |name: &'static str, i: usize, got: f64, want: f64| -> Result<(), String> {
        let d = (got - want).abs();
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(d);
        if d > 1e-9 {
            Err(format!("{name} instance {i}: library {got}, oracle {want}"))
        } else {
            Ok(())
        }
    };
    for i in 0..1000 {
        let (c, r) = (random_tokens(&mut rng, 10), random_tokens(&mut rng, 10));
        check("bleu", i, bleu(&c, &r).value, bleu_oracle(&c, &r))?;
        let (c, r) = (random_tokens(&mut rng, 10), random_tokens(&mut rng, 10));
        check("rouge_l", i, rouge_l(&c, &r).value, rouge_oracle(&c, &r))?;
        let (c, r) = (random_tokens(&mut rng, 10), random_tokens(&mut rng, 10));
        let e = embed_f1(&c, &r, &onehot).map_err(|e| e.to_string())?.value;
        check("embedf1", i, e, unigram_f1_oracle(&c, &r))?;
        let n = rng.random_range(2..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let got = spearman(&x, &y).map_err(|e| e.to_string())?;
        match (got, spearman_oracle(&x, &y)) {
            (Some(a), Some(b)) => check("spearman", i, a, b)?,
            (None, None) => {}
            (a, b) => return Err(format!("spearman instance {i}: library {a:?}, oracle {b:?}")),
        }
    }
    let took = within(Duration::from_secs(60), start)?;
    let detail: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Ok(format!("1000 instances each, max diff: {}, {took:.1?}", detail.join(", ")))
}

// ----------------------------------------------------------------------- SEI

fn sei_direction() -> Outcome {
    let start = Instant::now();
    let lex = lexicon();
    let corpus = sample();
    let suite = suite(&lex, &corpus);
    let run = run_sei(
        &corpus,
        &suite,
        &PerturbEngine::Rule,
        SEED,
        &ErrorLevel::ALL,
        SeiTarget::References,
        Execution::Parallel,
    )
    .map_err(|e| e.to_string())?;
    let delta = |m: MetricId, v: Variant| {
        run.grid
            .iter()
            .find(|r| r.metric_id == m && r.variant == v)
            .map(|r| r.delta_abs)
            .ok_or_else(|| format!("no {m} cell for {}", v.as_str()))
    };
    let mut lines = Vec::new();
    for m in [MetricId::Bleu, MetricId::RougeL, MetricId::Meteor, MetricId::EntityF1] {
        let (d1, d2, dm) = (
            delta(m, Variant::ErrorL1)?,
            delta(m, Variant::ErrorL2)?,
            delta(m, Variant::ErrorLm)?,
        );
        if !(dm <= d2 && d2 <= d1 && d1 <= 0.0) {
            return Err(format!("{m}: not monotone, d1 {d1:.4} d2 {d2:.4} dM {dm:.4}"));
        }
        lines.push(format!("{m} {d1:.3}/{d2:.3}/{dm:.3}"));
        if m == MetricId::EntityF1 && dm.abs() < 2.0 * d1.abs() {
            return Err(format!("entityf1: |dM| {:.4} < 2 |d1| {:.4}", dm.abs(), 2.0 * d1.abs()));
        }
    }
    let took = within(Duration::from_secs(30), start)?;
    Ok(format!(
        "{} cases ({} skipped), delta L1/L2/LM: {}, {took:.1?}",
        corpus.references().len() - run.skipped.len(),
        run.skipped.len(),
        lines.join("; ")
    ))
}

// ----------------------------------------------------------------------- WSG

fn wsg_preservation() -> Outcome {
    let start = Instant::now();
    let lex = lexicon();
    let corpus = sample();
    let records = rephrase_corpus(&corpus, &lex, &PerturbEngine::Rule, SEED, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let originals: BTreeMap<(&str, &str), &str> = corpus
        .pairs()
        .iter()
        .map(|p| ((p.case_id.as_str(), p.model_id.as_str()), p.candidate.as_str()))
        .collect();
    let mut changed = 0;
    for r in &records {
        let before = originals[&(r.case_id.as_str(), r.model_id.as_str())];
        let labels = |t: &str| label_report(t, &lex).map_err(|e| e.to_string());
        if labels(before)? != labels(&r.candidate)? {
            return Err(format!("{} / {}: labels changed\n{before}\n{}", r.case_id, r.model_id, r.candidate));
        }
        if finding_multiset(before, &lex) != finding_multiset(&r.candidate, &lex) {
            return Err(format!("{} / {}: findings changed\n{before}\n{}", r.case_id, r.model_id, r.candidate));
        }
        changed += usize::from(r.candidate != before);
    }

    let suite = SuiteConfig::offline(lex.clone()).with_metrics(&[MetricId::Bleu, MetricId::EntityF1]);
    let run = run_wsg(&corpus, &suite, &PerturbEngine::Rule, SEED, Execution::Parallel).map_err(|e| e.to_string())?;
    let mean = |t: &ScoreTable, v: Variant| {
        let vals: Vec<f64> = t
            .rows
            .iter()
            .filter(|r| r.metric_id == MetricId::Bleu && r.variant == v)
            .filter_map(|r| r.value)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let (before, after) = (mean(&run.original, Variant::Original), mean(&run.rephrased, Variant::Rephrase));
    let drop_pct = 100.0 * (after - before) / before;
    if drop_pct > -5.0 {
        return Err(format!("mean bleu changed by {drop_pct:.2}%, need <= -5%"));
    }
    let per_model: Vec<String> = run
        .grid
        .iter()
        .filter(|r| r.metric_id == MetricId::Bleu)
        .map(|r| format!("{} {:.2}%", r.model_id, r.delta_pct.unwrap_or(f64::NAN)))
        .collect();
    let took = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "{}/{} rephrasings keep labels and findings ({changed} changed text); mean bleu {drop_pct:.2}% ({}), {took:.1?}",
        records.len(),
        records.len(),
        per_model.join(", ")
    ))
}

// ----------------------------------------------------------------------- MvE

fn mve_structure() -> Outcome {
    let start = Instant::now();
    let lex = lexicon();
    let models = ["m1", "m2", "m3", "m4", "m5", "m6", "m7"];
    let corpus = synthetic_corpus(&lex, 100, &models, SEED);
    let table = score_corpus(&corpus, &suite(&lex, &corpus), Execution::Parallel);
    let selection = select_disagreement(&table, 25).map_err(|e| e.to_string())?;
    if selection.cases.len() != 175 {
        return Err(format!("selected {} cases, expected 175", selection.cases.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..3 {
        let mut rows = table.rows.clone();
        rows.shuffle(&mut rng);
        let again = select_disagreement(&ScoreTable::new(rows), 25).map_err(|e| e.to_string())?;
        if again != selection {
            return Err("selection changed under row permutation".into());
        }
    }

    // Expert stand-in: a monotone function of entityf1 plus small noise.
    let keys: BTreeSet<(String, String)> = selection
        .cases
        .iter()
        .map(|c| (c.case_id.clone(), c.model_id.clone()))
        .collect();
    let series: Vec<NamedSeries> = metric_series(&table, Variant::Original)
        .into_iter()
        .map(|s| s.restrict(&keys))
        .collect();
    let entity = series.iter().find(|s| s.name == "entityf1").ok_or("no entityf1 series")?;
    let mut expert = NamedSeries::new("E");
    for ((case, model), v) in &entity.values {
        let noise = rng.random_range(-0.05..0.05);
        expert.insert(case, model, 1.0 + 4.0 * v.powi(2) + noise);
    }
    let mut all = series.clone();
    all.push(expert);
    let m = correlation_matrix(&all).map_err(|e| e.to_string())?;
    let e = m.labels.len() - 1;
    let rho = |name: &str| -> Result<f64, String> {
        let i = m.labels.iter().position(|l| l == name).ok_or(format!("no {name}"))?;
        m.rho[i][e].ok_or(format!("rho({name}, E) undefined"))
    };
    let (re, rb) = (rho("entityf1")?, rho("bleu")?);
    if re <= rb {
        return Err(format!("rho(entityf1, E) {re:.3} <= rho(bleu, E) {rb:.3}"));
    }
    let took = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "175 of 700 selected, stable under 3 permutations; rho(entityf1,E) {re:.3} > rho(bleu,E) {rb:.3}, {took:.1?}"
    ))
}

// --------------------------------------------------------------- determinism

/// score -> wsg -> sei -> mve select, every output serialized to bytes.
fn pipeline_bytes(seed: u64, exec: Execution) -> Result<BTreeMap<&'static str, Vec<u8>>, String> {
    let lex = lexicon();
    let corpus = sample();
    let suite = suite(&lex, &corpus);
    let prov = Provenance::new(seed, "acceptance");
    let mut out = BTreeMap::new();
    let csv = |t: &ScoreTable| {
        let mut b = Vec::new();
        t.write_csv(&mut b, &prov).map(|_| b).map_err(|e| e.to_string())
    };

    let scores = score_corpus(&corpus, &suite, exec);
    out.insert("scores.csv", csv(&scores)?);

    let wsg = run_wsg(&corpus, &suite, &PerturbEngine::Rule, seed, exec).map_err(|e| e.to_string())?;
    out.insert("wsg_scores.csv", csv(&wsg.rephrased)?);
    let mut b = Vec::new();
    write_delta_csv(&wsg.grid, &mut b, &prov).map_err(|e| e.to_string())?;
    out.insert("wsg_deltas.csv", b);

    let sei = run_sei(&corpus, &suite, &PerturbEngine::Rule, seed, &ErrorLevel::ALL, SeiTarget::References, exec)
        .map_err(|e| e.to_string())?;
    let mut injected = ScoreTable::default();
    for t in &sei.injected {
        injected.extend(t.clone());
    }
    out.insert("sei_scores.csv", csv(&injected)?);
    let mut b = Vec::new();
    write_delta_csv(&sei.grid, &mut b, &prov).map_err(|e| e.to_string())?;
    out.insert("sei_deltas.csv", b);

    let selection = select_disagreement(&scores, 25).map_err(|e| e.to_string())?;
    let records = selection_records(&selection.cases, &corpus, &scores).map_err(|e| e.to_string())?;
    let mut b = Vec::new();
    write_jsonl(&records, &mut b, &prov).map_err(|e| e.to_string())?;
    out.insert("selection.jsonl", b);
    Ok(out)
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let first = pipeline_bytes(SEED, Execution::Parallel)?;
    let second = pipeline_bytes(SEED, Execution::Parallel)?;
    for (name, bytes) in &first {
        if second.get(name) != Some(bytes) {
            return Err(format!("{name} differs between runs"));
        }
    }
    let took = within(Duration::from_secs(120), start)?;
    let sizes: usize = first.values().map(Vec::len).sum();
    Ok(format!("{} files, {sizes} bytes, byte-identical across 2 runs, {took:.1?}", first.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("metric self-score", self_score),
        ("oracle equivalence", oracles),
        ("SEI directional shape", sei_direction),
        ("WSG semantic preservation", wsg_preservation),
        ("MvE structure", mve_structure),
        ("pipeline determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
