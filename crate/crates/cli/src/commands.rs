use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ctm_core::analysis::{correlation_matrix, select_disagreement, NamedSeries};
use ctm_core::corpus::{load_corpus, parse_corpus, write_corpus, Corpus, EvalPair};
use ctm_core::llm::LanguageModel;
use ctm_core::metrics::{parse_metric_list, FindingsJudge, GreenJudge, MetricId, Prevalence, SuiteConfig};
use ctm_core::outputs::{
    read_correlation_csv, read_delta_csv, read_jsonl, selection_records, write_correlation_csv, write_delta_csv,
    write_jsonl, write_perturbed, SelectionRecord,
};
use ctm_core::par::Execution;
use ctm_core::perturb::ErrorLevel;
use ctm_core::pipeline::{run_sei, run_wsg, score_corpus, PerturbEngine, SeiTarget};
use ctm_core::provenance::Provenance;
use ctm_core::ratings::load_expert_series;
use ctm_core::report::{emit_figures, ReportSet, CORRELATION_CSV, SEI_CSV, WSG_CSV};
use ctm_core::scores::{ScoreTable, Variant};
use ctm_core::synth::bundled_sample_source;
use ctm_core::textkit::Lexicon;
use ctm_gateway::{Gateway, GatewayConfig};
use serde::Serialize;

use crate::{Common, EngineArg, JudgeArg, Scoring, TargetArg};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const SCORES_FILE: &str = "scores.csv";
pub const WSG_SCORES_FILE: &str = "wsg_scores.csv";
pub const REPHRASED_FILE: &str = "rephrased.jsonl";
pub const SEI_SCORES_FILE: &str = "sei_scores.csv";
pub const INJECTED_FILE: &str = "injected.jsonl";
pub const SELECTION_FILE: &str = "selection.jsonl";

/// Everything that shapes a command's output except the output location;
/// hashed into each file header.
#[derive(Serialize)]
struct RunConfig<'a> {
    command: &'a str,
    corpus: Vec<String>,
    lexicon: Option<String>,
    metrics: Vec<&'static str>,
    judge: String,
    engine: Option<String>,
    levels: Option<Vec<&'static str>>,
    target: Option<&'a str>,
    k: Option<usize>,
}

impl<'a> RunConfig<'a> {
    fn new(command: &'a str, common: &Common, corpus: &[&Path], metrics: &[MetricId], judge: &Judge) -> Self {
        RunConfig {
            command,
            corpus: corpus.iter().map(|p| p.display().to_string()).collect(),
            lexicon: common.lexicon.as_ref().map(|p| p.display().to_string()),
            metrics: metrics.iter().map(|m| m.as_str()).collect(),
            judge: judge.label(),
            engine: None,
            levels: None,
            target: None,
            k: None,
        }
    }

    fn provenance(&self, seed: u64) -> Provenance {
        Provenance::for_config(seed, self)
    }
}

fn execution(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn lexicon(common: &Common) -> Result<Arc<Lexicon>> {
    Ok(Arc::new(match &common.lexicon {
        Some(p) => Lexicon::load(p).with_context(|| format!("lexicon {}", p.display()))?,
        None => Lexicon::bundled(),
    }))
}

fn gateway() -> Result<Option<Arc<Gateway>>> {
    match GatewayConfig::from_env().context("gateway configuration")? {
        Some(c) => Ok(Some(Arc::new(Gateway::new(c).context("gateway")?))),
        None => Ok(None),
    }
}

enum Judge {
    Model(Arc<dyn LanguageModel>, String),
    None,
}

impl Judge {
    fn label(&self) -> String {
        match self {
            Judge::Model(_, name) => name.clone(),
            Judge::None => "none".into(),
        }
    }
}

fn judge(arg: JudgeArg, lex: &Arc<Lexicon>) -> Result<Judge> {
    Ok(match arg {
        JudgeArg::None => Judge::None,
        JudgeArg::Findings => Judge::Model(Arc::new(FindingsJudge::new(lex.clone())), "findings".into()),
        JudgeArg::Gateway => match gateway()? {
            Some(g) => {
                let name = format!("gateway:{}", g.config().model_name);
                Judge::Model(g, name)
            }
            None => bail!("--judge gateway needs CTM_LLM_BASE_URL or CTM_LLM_MODE=mock"),
        },
        JudgeArg::Auto => match gateway()? {
            Some(g) => {
                let name = format!("gateway:{}", g.config().model_name);
                Judge::Model(g, name)
            }
            None => Judge::None,
        },
    })
}

fn metrics(list: Option<&str>) -> Result<Vec<MetricId>> {
    match list {
        None => Ok(MetricId::ALL.to_vec()),
        Some(l) => {
            let ids = parse_metric_list(l).map_err(anyhow::Error::msg)?;
            if ids.is_empty() {
                bail!("--metrics lists no metric");
            }
            Ok(ids)
        }
    }
}

/// Lexicon, judge and prevalence drawn from the corpus references.
fn suite(common: &Common, s: &Scoring, corpus: &Corpus) -> Result<(SuiteConfig, Judge, Vec<MetricId>)> {
    let lex = lexicon(common)?;
    let ids = metrics(s.metrics.as_deref())?;
    let judge = judge(s.judge, &lex)?;
    let refs = corpus.references();
    let prevalence = Prevalence::from_references(refs.iter().map(|(_, r)| *r), &lex)?;
    let mut suite = SuiteConfig::offline(lex).with_metrics(&ids).with_prevalence(prevalence);
    if let Judge::Model(m, _) = &judge {
        suite = suite.with_judge(GreenJudge::new(m.clone()));
    }
    Ok((suite, judge, ids))
}

fn engine(arg: EngineArg) -> Result<PerturbEngine> {
    match arg {
        EngineArg::Rule => Ok(PerturbEngine::Rule),
        EngineArg::Llm => match gateway()? {
            Some(g) => Ok(PerturbEngine::Llm(g)),
            None => bail!("--engine llm needs a gateway: set CTM_LLM_BASE_URL, or CTM_LLM_MODE=mock with CTM_LLM_MOCK_SCRIPT"),
        },
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

fn write_scores(table: &ScoreTable, dir: &Path, name: &str, prov: &Provenance) -> Result<PathBuf> {
    let (path, w) = create(dir, name)?;
    table.write_csv(w, prov).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn load(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("corpus {}", path.display()))
}

fn error_rows(table: &ScoreTable) -> usize {
    table.rows.iter().filter(|r| r.error.is_some()).count()
}

pub fn ingest(_common: &Common, paths: &[PathBuf], sample: bool, out: &Path) -> Result<()> {
    let mut pairs: Vec<EvalPair> = Vec::new();
    let mut sources = Vec::new();
    if sample {
        pairs.extend(parse_corpus(bundled_sample_source(), "sample")?.pairs().iter().cloned());
        sources.push("sample".to_string());
    }
    for p in paths {
        pairs.extend(load(p)?.pairs().iter().cloned());
        sources.push(p.display().to_string());
    }
    let corpus = Corpus::from_pairs(pairs, sources.join(",")).context("merging corpora")?;
    if corpus.is_empty() {
        bail!("no pairs to ingest");
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(CORPUS_FILE);
    write_corpus(&corpus, &path)?;
    let cases: BTreeSet<&str> = corpus.pairs().iter().map(|p| p.case_id.as_str()).collect();
    println!(
        "{}: {} pairs, {} cases, {} models ({})",
        path.display(),
        corpus.len(),
        cases.len(),
        corpus.model_ids().len(),
        corpus.model_ids().join(", ")
    );
    Ok(())
}

pub fn score(common: &Common, s: &Scoring) -> Result<()> {
    let corpus = load(&s.corpus)?;
    let (suite, judge, ids) = suite(common, s, &corpus)?;
    let prov = RunConfig::new("score", common, &[&s.corpus], &ids, &judge).provenance(common.seed);
    let table = score_corpus(&corpus, &suite, execution(common));
    let path = write_scores(&table, &s.out, SCORES_FILE, &prov)?;
    println!("{}: {} rows, {} with errors", path.display(), table.len(), error_rows(&table));
    Ok(())
}

pub fn wsg(common: &Common, s: &Scoring, engine_arg: EngineArg) -> Result<()> {
    let corpus = load(&s.corpus)?;
    let engine = engine(engine_arg)?;
    let (suite, judge, ids) = suite(common, s, &corpus)?;
    let mut cfg = RunConfig::new("wsg", common, &[&s.corpus], &ids, &judge);
    cfg.engine = Some(engine.kind().to_string());
    let prov = cfg.provenance(common.seed);
    let run = run_wsg(&corpus, &suite, &engine, common.seed, execution(common))?;

    let mut all = run.original.clone();
    all.extend(run.rephrased.clone());
    write_scores(&all, &s.out, WSG_SCORES_FILE, &prov)?;
    let (_, w) = create(&s.out, REPHRASED_FILE)?;
    write_perturbed(&run.records, w, &prov)?;
    let (path, w) = create(&s.out, WSG_CSV)?;
    write_delta_csv(&run.grid, w, &prov)?;
    let unchanged = run.records.iter().filter(|r| r.manifest.is_empty()).count();
    let guard = run.records.iter().filter(|r| r.guard_failed).count();
    println!(
        "{}: {} cells; {} rephrasings ({} unchanged, {} guard failures)",
        path.display(),
        run.grid.len(),
        run.records.len(),
        unchanged,
        guard
    );
    Ok(())
}

pub fn sei(common: &Common, s: &Scoring, engine_arg: EngineArg, levels: &str, target: TargetArg) -> Result<()> {
    let levels: Vec<ErrorLevel> = levels
        .split(',')
        .filter(|l| !l.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(anyhow::Error::msg)?;
    if levels.is_empty() {
        bail!("--levels lists no level");
    }
    let corpus = load(&s.corpus)?;
    let engine = engine(engine_arg)?;
    let (suite, judge, ids) = suite(common, s, &corpus)?;
    let target = match target {
        TargetArg::References => SeiTarget::References,
        TargetArg::Predictions => SeiTarget::Predictions,
    };
    let mut cfg = RunConfig::new("sei", common, &[&s.corpus], &ids, &judge);
    cfg.engine = Some(engine.kind().to_string());
    cfg.levels = Some(levels.iter().map(|l| l.label()).collect());
    cfg.target = Some(match target {
        SeiTarget::References => "references",
        SeiTarget::Predictions => "predictions",
    });
    let prov = cfg.provenance(common.seed);
    let run = run_sei(&corpus, &suite, &engine, common.seed, &levels, target, execution(common))?;

    let mut all = run.baseline.clone();
    for t in &run.injected {
        all.extend(t.clone());
    }
    write_scores(&all, &s.out, SEI_SCORES_FILE, &prov)?;
    let (_, w) = create(&s.out, INJECTED_FILE)?;
    write_perturbed(&run.records, w, &prov)?;
    let (path, w) = create(&s.out, SEI_CSV)?;
    write_delta_csv(&run.grid, w, &prov)?;
    let guard = run.records.iter().filter(|r| r.guard_failed).count();
    println!(
        "{}: {} cells; {} injected reports, {} guard failures; skipped {} case(s) with no injectable site",
        path.display(),
        run.grid.len(),
        run.records.len(),
        guard,
        run.skipped.len()
    );
    Ok(())
}

pub fn mve_select(common: &Common, s: &Scoring, scores: Option<&Path>, k: usize) -> Result<()> {
    let corpus = load(&s.corpus)?;
    let (suite, judge, ids) = suite(common, s, &corpus)?;
    let mut cfg = RunConfig::new("mve-select", common, &[&s.corpus], &ids, &judge);
    cfg.k = Some(k);
    let prov = cfg.provenance(common.seed);
    let table = match scores {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("score file {}", p.display()))?;
            ScoreTable::read_csv(f)
                .with_context(|| format!("score file {}", p.display()))?
                .filter_variant(Variant::Original)
        }
        None => {
            let t = score_corpus(&corpus, &suite, execution(common));
            write_scores(&t, &s.out, SCORES_FILE, &prov)?;
            t
        }
    };
    // A metric that failed on every case (green without a judge) carries no
    // signal; dropping it keeps the remaining metrics usable.
    let live: BTreeSet<MetricId> = table
        .rows
        .iter()
        .filter(|r| r.value.is_some() && r.error.is_none())
        .map(|r| r.metric_id)
        .collect();
    let dropped: Vec<&str> = ids.iter().filter(|m| !live.contains(m)).map(|m| m.as_str()).collect();
    if !dropped.is_empty() {
        eprintln!("note: no values for {}; selecting on the other metrics", dropped.join(", "));
    }
    let usable = ScoreTable::new(table.rows.iter().filter(|r| live.contains(&r.metric_id)).cloned().collect());
    let selection = select_disagreement(&usable, k)?;
    let records = selection_records(&selection.cases, &corpus, &usable)?;
    let (path, w) = create(&s.out, SELECTION_FILE)?;
    write_jsonl(&records, w, &prov)?;
    println!(
        "{}: {} cases selected ({} per model), {} excluded for missing scores",
        path.display(),
        records.len(),
        k,
        selection.excluded
    );
    Ok(())
}

/// Metric series taken from the raw scores carried in the selection file.
fn selection_series(records: &[SelectionRecord]) -> Vec<NamedSeries> {
    let mut metrics: Vec<MetricId> = records.iter().flat_map(|r| r.case.metrics.iter().copied()).collect();
    metrics.sort();
    metrics.dedup();
    metrics
        .into_iter()
        .map(|m| {
            let mut s = NamedSeries::new(m.as_str());
            for r in records {
                if let Some(Some(v)) = r.case.metrics.iter().position(|x| *x == m).map(|i| r.scores[i]) {
                    s.insert(&r.case.case_id, &r.case.model_id, v);
                }
            }
            s
        })
        .collect()
}

pub fn mve_correlate(common: &Common, cases: &Path, ratings: &Path, out: &Path) -> Result<()> {
    let selection: Vec<SelectionRecord> = read_jsonl(
        File::open(cases).with_context(|| format!("selection file {}", cases.display()))?,
    )
    .with_context(|| format!("selection file {}", cases.display()))?;
    if !ratings.exists() {
        bail!("ratings file {} does not exist", ratings.display());
    }
    let expert = load_expert_series(ratings).with_context(|| format!("ratings {}", ratings.display()))?;
    let keys: BTreeSet<(String, String)> = selection
        .iter()
        .map(|r| (r.case.case_id.clone(), r.case.model_id.clone()))
        .collect();
    let expert = expert.restrict(&keys);
    if expert.values.is_empty() {
        bail!("no rating matches a selected case");
    }
    let mut series = selection_series(&selection);
    series.push(expert);
    let matrix = correlation_matrix(&series)?;

    #[derive(Serialize)]
    struct CorrelateConfig<'a> {
        command: &'a str,
        cases: String,
        ratings: String,
    }
    let prov = Provenance::for_config(
        common.seed,
        &CorrelateConfig {
            command: "mve-correlate",
            cases: cases.display().to_string(),
            ratings: ratings.display().to_string(),
        },
    );
    let (path, w) = create(out, CORRELATION_CSV)?;
    write_correlation_csv(&matrix, w, &prov)?;
    let e = matrix.labels.len() - 1;
    println!("{}: {} series, {} rated cases", path.display(), matrix.labels.len(), matrix.n[e][e]);
    for (i, label) in matrix.labels[..e].iter().enumerate() {
        let rho = matrix.rho[i][e].map_or("undefined".to_string(), |r| format!("{r:.4}"));
        println!("  rho({label}, {}) = {rho}", matrix.labels[e]);
    }
    Ok(())
}

pub fn report(dir: &Path) -> Result<()> {
    let read_deltas = |name: &str| -> Result<Vec<_>> {
        let p = dir.join(name);
        if !p.exists() {
            return Ok(Vec::new());
        }
        Ok(read_delta_csv(File::open(&p)?).with_context(|| format!("reading {}", p.display()))?)
    };
    let corr = dir.join(CORRELATION_CSV);
    let set = ReportSet {
        wsg: read_deltas(WSG_CSV)?,
        sei: read_deltas(SEI_CSV)?,
        correlation: if corr.exists() {
            Some(read_correlation_csv(File::open(&corr)?).with_context(|| format!("reading {}", corr.display()))?)
        } else {
            None
        },
    };
    if set.is_empty() {
        bail!(
            "nothing to report in {}: expected {WSG_CSV}, {SEI_CSV} or {CORRELATION_CSV}",
            dir.display()
        );
    }
    for p in emit_figures(&set, dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

pub fn rate_serve(cases: &Path, ratings: &Path, port: u16, static_dir: Option<PathBuf>) -> Result<()> {
    let config = ctm_rating::ServiceConfig {
        cases: cases.to_path_buf(),
        ratings: ratings.to_path_buf(),
        port,
        static_dir,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let running = ctm_rating::start(&config).await?;
        println!(
            "serving {} cases on http://{}; ratings -> {}",
            running.store.cases().len(),
            running.addr,
            ratings.display()
        );
        tokio::select! {
            r = running.task => r.context("server task")??,
            _ = tokio::signal::ctrl_c() => println!("stopped"),
        }
        Ok(())
    })
}
