mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctm_core::llm::LlmError;

#[derive(Parser)]
#[command(name = "ctm", version, about = "Stress tests for radiology report generation metrics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Lexicon TOML; the bundled lexicon when omitted.
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Run seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Score on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum JudgeArg {
    /// The gateway when configured, otherwise none.
    Auto,
    Gateway,
    /// Deterministic offline judge built on the lexicon.
    Findings,
    None,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Rule,
    Llm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    References,
    Predictions,
}

#[derive(Args, Clone, Debug)]
pub struct Scoring {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated metric ids; all eight when omitted.
    #[arg(long)]
    pub metrics: Option<String>,
    #[arg(long, value_enum, default_value_t = JudgeArg::Auto)]
    pub judge: JudgeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Validate corpora and write them as one normalized corpus.jsonl.
    Ingest {
        #[arg(long, num_args = 1.., required_unless_present = "sample")]
        corpus: Vec<PathBuf>,
        /// Use the bundled 100-case, 3-model sample corpus.
        #[arg(long)]
        sample: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every pair with the enabled metrics.
    Score(Scoring),
    /// Rephrase predictions and measure each metric's change.
    Wsg {
        #[command(flatten)]
        scoring: Scoring,
        #[arg(long, value_enum, default_value_t = EngineArg::Rule)]
        engine: EngineArg,
    },
    /// Inject 1, 2 or many factual errors and measure each metric's change.
    Sei {
        #[command(flatten)]
        scoring: Scoring,
        #[arg(long, value_enum, default_value_t = EngineArg::Rule)]
        engine: EngineArg,
        #[arg(long, default_value = "1,2,m")]
        levels: String,
        #[arg(long, value_enum, default_value_t = TargetArg::References)]
        target: TargetArg,
    },
    /// Metric-versus-expert analysis.
    Mve {
        #[command(subcommand)]
        command: MveCommand,
    },
    /// Render figures for the delta and correlation tables in a directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Expert rating service.
    Rate {
        #[command(subcommand)]
        command: RateCommand,
    },
}

#[derive(Subcommand)]
enum MveCommand {
    /// Pick the k cases per model on which metrics disagree most.
    Select {
        #[command(flatten)]
        scoring: Scoring,
        /// Existing score file; scored from the corpus when omitted.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = 25)]
        k: usize,
    },
    /// Correlate metric scores of selected cases with expert ratings.
    Correlate {
        /// Selection file written by `mve select`.
        #[arg(long)]
        cases: PathBuf,
        /// Ratings file or export document.
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RateCommand {
    Serve {
        #[arg(long)]
        cases: PathBuf,
        /// Ratings file, appended to.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory of UI assets to serve at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

/// 2 when a language-model call failed, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let external = err
        .chain()
        .filter_map(|e| e.downcast_ref::<LlmError>())
        .any(|e| !matches!(e, LlmError::Config(_)));
    if external {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match cli.command {
        Command::Ingest { corpus, sample, out } => commands::ingest(c, &corpus, sample, &out),
        Command::Score(s) => commands::score(c, &s),
        Command::Wsg { scoring, engine } => commands::wsg(c, &scoring, engine),
        Command::Sei {
            scoring,
            engine,
            levels,
            target,
        } => commands::sei(c, &scoring, engine, &levels, target),
        Command::Mve { command } => match command {
            MveCommand::Select { scoring, scores, k } => commands::mve_select(c, &scoring, scores.as_deref(), k),
            MveCommand::Correlate { cases, ratings, out } => commands::mve_correlate(c, &cases, &ratings, &out),
        },
        Command::Report { out } => commands::report(&out),
        Command::Rate { command } => match command {
            RateCommand::Serve {
                cases,
                out,
                port,
                static_dir,
            } => commands::rate_serve(&cases, &out, port, static_dir),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
