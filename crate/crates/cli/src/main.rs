//! `commonsum`: command-line driver for the commonsense-augmented dialogue
//! summarization pipeline.

mod artifacts;
mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use commonsum::corpus::Split;
use commonsum::multitask::Mode;
use commonsum::selection::Strategy;
use commonsum::Exec;
use thiserror::Error;

use config::{Overrides, RunConfig};
use stages::Ctx;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("upstream artifact missing: run `{stage}` first ({})", path.display())]
    UpstreamArtifactMissing { stage: &'static str, path: PathBuf },
    #[error("malformed artifact {}: {reason}", path.display())]
    BadArtifact { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] commonsum::corpus::CorpusError),
    #[error(transparent)]
    Knowledge(#[from] commonsum::knowledge::KnowledgeError),
    #[error(transparent)]
    Pipeline(#[from] commonsum::pipeline::PipelineError),
    #[error(transparent)]
    Model(#[from] commonsum::multitask::ModelError),
    #[error(transparent)]
    Eval(#[from] commonsum::evaluation::EvalError),
    #[error(transparent)]
    Analysis(#[from] commonsum::analysis::AnalysisError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Parser)]
#[command(name = "commonsum", version, about = "Commonsense-augmented dialogue summarization pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for all stage artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Knowledge backend: `mock` or an HTTP endpoint.
    #[arg(long, global = true, env = "COMMONSUM_KNOWLEDGE_URL")]
    backend: Option<String>,
    /// Sentence embedder for similarity selection: `mock` or an HTTP endpoint.
    #[arg(long, global = true, env = "COMMONSUM_EMBEDDER_URL")]
    embedder: Option<String>,
    /// NLI model for entailment selection: `mock` or an HTTP endpoint.
    #[arg(long, global = true, env = "COMMONSUM_NLI_URL")]
    nli: Option<String>,
    /// Token embedder for BERTScore: `mock` (one-hot) or an HTTP endpoint.
    #[arg(long, global = true, env = "COMMONSUM_TOKEN_EMBEDDER_URL")]
    token_embedder: Option<String>,
    /// Selection strategy: similarity, nli or random.
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// Training mode: sick (summary decoder only) or sick++ (with commonsense supervision).
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Training-data fraction; a comma-separated list for `sweep`.
    #[arg(long, global = true, value_delimiter = ',')]
    fraction: Option<Vec<f64>>,
    /// Beam size for decoding.
    #[arg(long, global = true)]
    beam: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw corpora into validated JSONL under <out>/data.
    Ingest,
    /// Dataset statistics per split.
    Stats,
    /// Generate candidate inferences for utterances and summary sentences.
    GenCommonsense,
    /// Pick one inference per utterance and summary sentence.
    Select,
    /// Build the vocabulary and tokenized training examples.
    Format {
        /// Only write the human-readable (X, Y, Z) views.
        #[arg(long)]
        text_only: bool,
    },
    /// Train the dual-decoder model.
    Train,
    /// Decode summaries with the trained model.
    Infer {
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Score decoded summaries against references.
    Evaluate {
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Compare a frozen model with and without input commonsense.
    ZeroShot {
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Train and evaluate on nested fractions of the training data.
    Sweep,
    /// Per-layer encoder attention mass on commonsense tokens.
    Attn {
        #[arg(long, default_value = "test")]
        split: Split,
        /// Count the <I>/</I> markers as commonsense tokens.
        #[arg(long)]
        markers_as_commonsense: bool,
    },
    /// Write a synthetic toy corpus, knowledge rules and a matching config.
    MakeToy {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        train: usize,
        #[arg(long, default_value_t = 20)]
        dev: usize,
        #[arg(long, default_value_t = 20)]
        test: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    if let Command::MakeToy { dir, train, dev, test } = &cli.command {
        return stages::make_toy(dir, [*train, *dev, *test], g.seed.unwrap_or(7));
    }
    let overrides = Overrides {
        seed: g.seed,
        out: g.out,
        backend: g.backend,
        embedder: g.embedder,
        nli: g.nli,
        token_embedder: g.token_embedder,
        strategy: g.strategy,
        mode: g.mode,
        fraction: g.fraction,
        beam: g.beam,
    };
    let cfg = RunConfig::load(g.config.as_deref(), &overrides)?;
    let exec = if g.sequential { Exec::Sequential } else { Exec::Parallel };
    let ctx = Ctx::new(cfg, exec);
    match cli.command {
        Command::Ingest => stages::ingest(&ctx),
        Command::Stats => stages::stats(&ctx),
        Command::GenCommonsense => stages::gen_commonsense(&ctx),
        Command::Select => stages::select(&ctx),
        Command::Format { text_only } => stages::format(&ctx, text_only),
        Command::Train => stages::train_stage(&ctx),
        Command::Infer { split } => stages::infer(&ctx, split),
        Command::Evaluate { split } => stages::evaluate(&ctx, split),
        Command::ZeroShot { split } => stages::zero_shot(&ctx, split),
        Command::Sweep => stages::sweep(&ctx),
        Command::Attn {
            split,
            markers_as_commonsense,
        } => stages::attn(&ctx, split, markers_as_commonsense),
        Command::MakeToy { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
