//! One function per subcommand.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use commonsum::analysis::{attention_commonsense_mass, AnalysisOptions, AttentionInput};
use commonsum::corpus::{adapters, corpus_stats, load_corpus, write_corpus, Corpus, Schema, Split};
use commonsum::evaluation::{
    data_efficiency_sweep, evaluate_corpus, nested_subsets, write_curve_csv, zero_shot_eval, ArmResult,
    ArmSettings, EvalError, MetricsReport, OneHotEmbedder, ServiceTokenEmbedder, TokenEmbedder,
};
use commonsum::knowledge::{
    CandidateRecord, InferenceCache, KnowledgeBackend, KnowledgeModel, MockKnowledge, MockRule, Profile,
    ServiceKnowledge,
};
use commonsum::multitask::{
    summarize_text, train, write_loss_log, DecodeConfig, DecoderHead, MockBehavior, MockSeq2Seq, Mode,
    Seq2SeqBackend, TinyConfig, TinyTransformer,
};
use commonsum::pipeline::{self, SelectedRecord};
use commonsum::selection::{
    summarize_scores, HashingBowEmbedder, LexicalNli, Scorer, Selector, ServiceEmbedder, ServiceNli, Strategy,
};
use commonsum::sequencing::{TrainingExample, Vocab, WordTokenizer};
use commonsum::text::derive_seed;
use commonsum::{toy, Exec};
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_json, read_jsonl, require, write_json, write_jsonl, write_with, Layout};
use crate::config::{CorpusFormat, RunConfig};
use crate::CliError;

pub struct Ctx {
    pub cfg: RunConfig,
    pub layout: Layout,
    pub exec: Exec,
    pub hash: String,
}

const SPLITS: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

#[derive(Serialize)]
struct Stamp<'a> {
    stage: &'a str,
    config_hash: &'a str,
    seed: u64,
}

impl Ctx {
    pub fn new(cfg: RunConfig, exec: Exec) -> Self {
        let hash = cfg.hash();
        let layout = Layout::new(&cfg.out);
        Ctx { cfg, layout, exec, hash }
    }

    /// Stage directory with a `run.json` stamp.
    fn stage_dir(&self, stage: &str) -> Result<std::path::PathBuf, CliError> {
        let dir = self.layout.dir(stage)?;
        write_json(
            &dir.join("run.json"),
            &Stamp {
                stage,
                config_hash: &self.hash,
                seed: self.cfg.seed,
            },
        )?;
        Ok(dir)
    }

    /// Volatile counters, kept apart from reproducible artifacts.
    fn log<T: Serialize>(&self, stage: &str, value: &T) -> Result<(), CliError> {
        let dir = self.layout.dir("logs")?;
        write_json(&dir.join(format!("{stage}.json")), value)
    }

    fn corpus(&self, split: Split) -> Result<Corpus, CliError> {
        let path = self.layout.path("data", &format!("{split}.jsonl"));
        require(&path, "ingest")?;
        Ok(load_corpus(&path, Schema::JsonlV1)?)
    }

    fn available_splits(&self) -> Vec<Split> {
        SPLITS
            .into_iter()
            .filter(|s| self.layout.path("data", &format!("{s}.jsonl")).exists())
            .collect()
    }

    fn profile(&self) -> Profile {
        Profile::by_name(&self.cfg.knowledge.profile).expect("validated at load")
    }

    fn tokenizer(&self) -> Result<WordTokenizer, CliError> {
        let vocab: Vocab = read_json(&self.layout.path("format", "vocab.json"), "format")?;
        Ok(WordTokenizer::new(vocab))
    }

    fn examples(&self, split: Split) -> Result<Vec<TrainingExample>, CliError> {
        read_jsonl(&self.layout.path("format", &format!("{split}.examples.jsonl")), "format")
    }

    fn selections(&self, split: Split) -> Result<Vec<SelectedRecord>, CliError> {
        read_jsonl(&self.layout.path("selection", &format!("{split}.jsonl")), "select")
    }

    fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            beam: self.cfg.train.beam,
            max_output_len: self.cfg.limits.max_output_len,
        }
    }

    fn token_embedder(&self) -> Box<dyn TokenEmbedder> {
        match self.cfg.backends.token_embedder.as_str() {
            "mock" => Box::new(OneHotEmbedder::new()),
            url => Box::new(ServiceTokenEmbedder::new(url)),
        }
    }

    fn trained_model(&self) -> Result<TinyTransformer, CliError> {
        let best = self.layout.path("train", "best.bin");
        let path = if best.exists() {
            best
        } else {
            self.layout.path("train", "weights.bin")
        };
        require(&path, "train")?;
        Ok(TinyTransformer::load(&path)?)
    }
}

#[derive(Serialize)]
struct IngestEntry {
    examples: usize,
    rejected: Vec<(String, String)>,
}

pub fn ingest(ctx: &Ctx) -> Result<(), CliError> {
    let dir = ctx.stage_dir("data")?;
    let mut report = BTreeMap::new();
    let c = &ctx.cfg.corpus;
    let sources = [(Split::Train, &c.train), (Split::Dev, &c.dev), (Split::Test, &c.test)];
    if sources.iter().all(|(_, p)| p.is_none()) {
        return Err(CliError::ConfigInvalid {
            field: "corpus".into(),
            reason: "no split paths configured".into(),
        });
    }
    for (split, path) in sources {
        let Some(path) = path else { continue };
        let (examples, rejected) = match c.format {
            CorpusFormat::Jsonl => (load_corpus(path, Schema::JsonlV1)?.examples, Vec::new()),
            CorpusFormat::Samsum | CorpusFormat::Dialogsum => {
                let raw = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let conv = if c.format == CorpusFormat::Samsum {
                    adapters::samsum(&raw)?
                } else {
                    adapters::dialogsum(&raw)?
                };
                (conv.examples, conv.rejected)
            }
        };
        let corpus = Corpus::new(&format!("{:?}", c.format).to_lowercase(), split, examples)?;
        let out = dir.join(format!("{split}.jsonl"));
        write_with(&out, |buf| write_corpus(&corpus, buf))?;
        eprintln!("ingest: {} {split} examples -> {}", corpus.len(), out.display());
        report.insert(
            split.to_string(),
            IngestEntry {
                examples: corpus.len(),
                rejected,
            },
        );
    }
    write_json(&dir.join("ingest.json"), &report)
}

pub fn stats(ctx: &Ctx) -> Result<(), CliError> {
    let splits = ctx.available_splits();
    if splits.is_empty() {
        return Err(CliError::UpstreamArtifactMissing {
            stage: "ingest",
            path: ctx.layout.path("data", "*.jsonl"),
        });
    }
    let dir = ctx.stage_dir("stats")?;
    let tokenizer = WordTokenizer::counting();
    for split in splits {
        let report = corpus_stats(&ctx.corpus(split)?, &tokenizer)?;
        eprintln!(
            "stats: {split}: {} examples, compression rate {:.4}, mean turns {:.2}",
            report.example_count, report.compression_rate, report.mean_turns
        );
        write_json(&dir.join(format!("{split}.json")), &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CallLog {
    backend_calls: usize,
    cache_entries: usize,
    recovered_bytes: usize,
}

pub fn gen_commonsense(ctx: &Ctx) -> Result<(), CliError> {
    let splits = ctx.available_splits();
    if splits.is_empty() {
        return Err(CliError::UpstreamArtifactMissing {
            stage: "ingest",
            path: ctx.layout.path("data", "*.jsonl"),
        });
    }
    let dir = ctx.stage_dir("knowledge")?;
    let model: Box<dyn KnowledgeModel> = match ctx.cfg.backends.knowledge.as_str() {
        "mock" => {
            let rules: Vec<MockRule> = match &ctx.cfg.knowledge.rules {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                    serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid {
                        field: "knowledge.rules".into(),
                        reason: e.to_string(),
                    })?
                }
                None => Vec::new(),
            };
            Box::new(MockKnowledge::new().with_rules(rules))
        }
        url => Box::new(ServiceKnowledge::new(url)),
    };
    let (cache, recovered_bytes) = InferenceCache::open_recovering(&dir.join("cache.jsonl"))?;
    if recovered_bytes > 0 {
        eprintln!("gen-commonsense: dropped {recovered_bytes} bytes of a partial cache record");
    }
    let backend = KnowledgeBackend::new(ctx.profile(), model)?
        .with_cache(cache)
        .with_exec(ctx.exec);
    for split in splits {
        let corpus = ctx.corpus(split)?;
        let records = pipeline::generate_candidates(&backend, &corpus, split == Split::Train)?;
        write_jsonl(&dir.join(format!("{split}.candidates.jsonl")), &records)?;
        eprintln!("gen-commonsense: {split}: {} dialogues", records.len());
    }
    let backend_calls = backend.backend_calls();
    let cache_entries = backend.into_cache().map_or(0, |c| c.len());
    eprintln!("gen-commonsense: {backend_calls} backend calls, {cache_entries} cached entries");
    ctx.log(
        "gen-commonsense",
        &CallLog {
            backend_calls,
            cache_entries,
            recovered_bytes,
        },
    )
}

pub fn select(ctx: &Ctx) -> Result<(), CliError> {
    let splits = ctx.available_splits();
    let scorer = match ctx.cfg.strategy {
        Strategy::Similarity => Scorer::Similarity(match ctx.cfg.backends.embedder.as_str() {
            "mock" => Arc::new(HashingBowEmbedder::default()),
            url => Arc::new(ServiceEmbedder::new(url)),
        }),
        Strategy::Nli => Scorer::Nli(match ctx.cfg.backends.nli.as_str() {
            "mock" => Arc::new(LexicalNli),
            url => Arc::new(ServiceNli::new(url)),
        }),
        Strategy::Random => Scorer::Random {
            seed: derive_seed(ctx.cfg.seed, "select"),
        },
    };
    let selector = Selector::new(scorer, ctx.profile().relations).with_exec(ctx.exec);
    let mut pending = Vec::new();
    for split in splits {
        let path = ctx.layout.path("knowledge", &format!("{split}.candidates.jsonl"));
        let candidates: Vec<CandidateRecord> = read_jsonl(&path, "gen-commonsense")?;
        pending.push((split, candidates));
    }
    if pending.is_empty() {
        return Err(CliError::UpstreamArtifactMissing {
            stage: "gen-commonsense",
            path: ctx.layout.path("knowledge", "*.candidates.jsonl"),
        });
    }
    let dir = ctx.stage_dir("selection")?;
    for (split, candidates) in pending {
        let corpus = ctx.corpus(split)?;
        let records = pipeline::select_commonsense(&selector, &corpus, &candidates)?;
        let summary = summarize_scores(records.iter().flat_map(|r| r.input.iter().chain(&r.target)));
        write_jsonl(&dir.join(format!("{split}.jsonl")), &records)?;
        write_json(&dir.join(format!("{split}.scores.json")), &summary)?;
        eprintln!("select: {split}: {} dialogues, mean score {:.4}", records.len(), summary.mean);
    }
    Ok(())
}

pub fn format(ctx: &Ctx, text_only: bool) -> Result<(), CliError> {
    let splits = ctx.available_splits();
    let mut inputs = Vec::new();
    for split in &splits {
        let path = ctx.layout.path("selection", &format!("{split}.jsonl"));
        require(&path, "select")?;
        inputs.push((*split, ctx.corpus(*split)?, ctx.selections(*split)?));
    }
    let Some((_, train_corpus, train_sel)) = inputs.iter().find(|(s, _, _)| *s == Split::Train) else {
        return Err(CliError::UpstreamArtifactMissing {
            stage: "select",
            path: ctx.layout.path("selection", "train.jsonl"),
        });
    };
    let dir = ctx.stage_dir("format")?;
    let train_texts = pipeline::text_examples(train_corpus, train_sel)?;
    let vocab = pipeline::build_vocab(&train_texts, ctx.cfg.model.vocab_size);
    write_json(&dir.join("vocab.json"), &vocab)?;
    let tokenizer = WordTokenizer::new(vocab);
    let multitask = ctx.cfg.train.mode == Mode::SickPlusPlus;
    for (split, corpus, sel) in &inputs {
        let texts = pipeline::text_examples(corpus, sel)?;
        write_jsonl(&dir.join(format!("{split}.text.jsonl")), &texts)?;
        if !text_only {
            let examples = pipeline::training_examples(
                corpus,
                sel,
                &tokenizer,
                ctx.cfg.limits,
                multitask && *split == Split::Train,
            )?;
            write_jsonl(&dir.join(format!("{split}.examples.jsonl")), &examples)?;
        }
        eprintln!("format: {split}: {} examples", texts.len());
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    pub summary: String,
    pub overflowed: bool,
}

fn decode_all<B: Seq2SeqBackend + ?Sized>(
    ctx: &Ctx,
    model: &B,
    tokenizer: &WordTokenizer,
    examples: &[TrainingExample],
) -> Result<Vec<OutputRecord>, CliError> {
    let decode = ctx.decode_config();
    let decoded = ctx
        .exec
        .try_map(examples, |ex| summarize_text(model, tokenizer, ex.input(), decode))?;
    Ok(examples
        .iter()
        .zip(decoded)
        .map(|(ex, d)| OutputRecord {
            id: ex.id.clone(),
            summary: d.text,
            overflowed: d.overflowed,
        })
        .collect())
}

fn score_outputs(ctx: &Ctx, outputs: &[OutputRecord], references: &Corpus) -> Result<MetricsReport, CliError> {
    let lookup: HashMap<String, String> = outputs.iter().map(|o| (o.id.clone(), o.summary.clone())).collect();
    let embedder = ctx.token_embedder();
    let fingerprint = format!("{}:{}", &ctx.hash[..16], embedder.name());
    Ok(evaluate_corpus(&lookup, references, embedder.as_ref(), &fingerprint, ctx.exec)?)
}

#[derive(Serialize)]
struct TrainManifest<'a> {
    config_hash: &'a str,
    seed: u64,
    mode: Mode,
    lambda: f64,
    fraction: f64,
    example_count: usize,
    example_ids: Vec<&'a str>,
    steps: usize,
    best_epoch: Option<usize>,
    epoch_scores: Vec<Option<f64>>,
    weights: String,
}

/// Train on `examples`, writing the loss log, weights and manifest into
/// `dir`. With a dev set, each epoch is scored by ROUGE-2 F1 and the best
/// weights are kept as `best.bin`.
fn train_into(
    ctx: &Ctx,
    dir: &Path,
    examples: &[TrainingExample],
    fraction: f64,
    tokenizer: &WordTokenizer,
    dev: Option<&(Vec<TrainingExample>, Corpus)>,
    checkpoints: bool,
) -> Result<TinyTransformer, CliError> {
    let m = &ctx.cfg.model;
    let config = TinyConfig {
        vocab_size: commonsum::sequencing::Tokenizer::vocab_size(tokenizer),
        d_model: m.d_model,
        heads: m.heads,
        encoder_layers: m.encoder_layers,
        decoder_layers: m.decoder_layers,
        ffn_dim: m.ffn_dim,
        max_input_positions: ctx.cfg.limits.max_input_len,
        max_output_positions: ctx.cfg.limits.max_output_len,
    };
    let mut model = TinyTransformer::new(config, derive_seed(ctx.cfg.seed, "init"))?;
    if checkpoints {
        fs::create_dir_all(dir.join("checkpoints")).map_err(|e| CliError::io(dir, e))?;
    }
    let mut hook_error = None;
    let outcome = train(&ctx.cfg.train, examples, &mut model, ctx.exec, |epoch, m| {
        if checkpoints {
            m.save(&dir.join("checkpoints").join(format!("epoch-{epoch:03}.bin")))?;
        }
        let Some((dev_examples, dev_corpus)) = dev else {
            return Ok(None);
        };
        let scored = decode_all(ctx, m, tokenizer, dev_examples).and_then(|o| score_outputs(ctx, &o, dev_corpus));
        match scored {
            Ok(report) => {
                eprintln!("train: epoch {epoch}: dev ROUGE-2 F1 {:.4}", report.means.rouge2.f1);
                Ok(Some(report.means.rouge2.f1))
            }
            Err(e) => {
                hook_error = Some(e);
                Err(commonsum::multitask::ModelError::InvalidConfig("dev evaluation failed".into()))
            }
        }
    });
    if let Some(e) = hook_error {
        return Err(e);
    }
    let outcome = outcome?;
    write_with(&dir.join("loss.csv"), |buf| write_loss_log(&outcome.log, buf))?;
    model.save(&dir.join("weights.bin"))?;
    let best_path = dir.join("best.bin");
    if let Some((_, best)) = &outcome.best {
        best.save(&best_path)?;
    } else if best_path.exists() {
        fs::remove_file(&best_path).map_err(|e| CliError::io(&best_path, e))?;
    }
    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        eprintln!(
            "train: {} steps, l_ds {:.4} -> {:.4}, l_cs {:.4} -> {:.4}",
            outcome.log.len(),
            first.l_ds,
            last.l_ds,
            first.l_cs,
            last.l_cs
        );
    }
    let manifest = TrainManifest {
        config_hash: &ctx.hash,
        seed: ctx.cfg.seed,
        mode: ctx.cfg.train.mode,
        lambda: ctx.cfg.train.effective_lambda(),
        fraction,
        example_count: examples.len(),
        example_ids: examples.iter().map(|e| e.id.as_str()).collect(),
        steps: outcome.log.len(),
        best_epoch: outcome.best.as_ref().map(|(e, _)| *e),
        epoch_scores: outcome.epoch_scores.clone(),
        weights: model.fingerprint(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(outcome.best.map(|(_, b)| b).unwrap_or(model))
}

fn dev_set(ctx: &Ctx) -> Result<Option<(Vec<TrainingExample>, Corpus)>, CliError> {
    let path = ctx.layout.path("format", "dev.examples.jsonl");
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some((ctx.examples(Split::Dev)?, ctx.corpus(Split::Dev)?)))
}

fn subset(examples: &[TrainingExample], indices: &[usize]) -> Vec<TrainingExample> {
    indices.iter().map(|&i| examples[i].clone()).collect()
}

pub fn train_stage(ctx: &Ctx) -> Result<(), CliError> {
    let examples = ctx.examples(Split::Train)?;
    let tokenizer = ctx.tokenizer()?;
    let dev = dev_set(ctx)?;
    let fraction = ctx.cfg.fraction;
    let indices = nested_subsets(examples.len(), &[fraction], ctx.cfg.seed).map_err(CliError::from)?;
    let chosen = subset(&examples, &indices[0]);
    let dir = ctx.stage_dir("train")?;
    write_json(&dir.join("config.json"), &ctx.cfg)?;
    train_into(ctx, &dir, &chosen, fraction, &tokenizer, dev.as_ref(), true)?;
    Ok(())
}

#[derive(Serialize)]
struct InvocationLog {
    summary_decoder: usize,
    commonsense_decoder: usize,
}

pub fn infer(ctx: &Ctx, split: Split) -> Result<(), CliError> {
    let model = ctx.trained_model()?;
    let tokenizer = ctx.tokenizer()?;
    let examples = ctx.examples(split)?;
    let outputs = decode_all(ctx, &model, &tokenizer, &examples)?;
    let dir = ctx.stage_dir("infer")?;
    write_jsonl(&dir.join(format!("{split}.jsonl")), &outputs)?;
    let overflowed = outputs.iter().filter(|o| o.overflowed).count();
    eprintln!("infer: {split}: {} summaries ({overflowed} overflowed)", outputs.len());
    ctx.log(
        "infer",
        &InvocationLog {
            summary_decoder: model.decoder_invocations(DecoderHead::Summary),
            commonsense_decoder: model.decoder_invocations(DecoderHead::Commonsense),
        },
    )
}

fn write_report(dir: &Path, stem: &str, report: &MetricsReport) -> Result<(), CliError> {
    write_json(&dir.join(format!("{stem}report.json")), &report.summary())?;
    write_with(&dir.join(format!("{stem}per_example.jsonl")), |buf| report.write_jsonl(buf))
}

pub fn evaluate(ctx: &Ctx, split: Split) -> Result<(), CliError> {
    let outputs: Vec<OutputRecord> = read_jsonl(&ctx.layout.path("infer", &format!("{split}.jsonl")), "infer")?;
    let references = ctx.corpus(split)?;
    let report = score_outputs(ctx, &outputs, &references)?;
    let dir = ctx.stage_dir("eval")?;
    write_report(&dir, &format!("{split}."), &report)?;
    let m = &report.means;
    eprintln!(
        "evaluate: {split}: R-1 {:.4} R-2 {:.4} R-L {:.4} B-S {:.4} over {} examples",
        m.rouge1.f1, m.rouge2.f1, m.rouge_l.f1, m.bertscore.f1, report.count
    );
    Ok(())
}

fn write_arm(dir: &Path, arm: &ArmResult) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join("manifest.json"), &arm.manifest)?;
    let outputs: Vec<(&String, &String)> = arm.outputs.iter().collect();
    write_jsonl(&dir.join("outputs.jsonl"), &outputs)?;
    write_report(dir, "", &arm.report)
}

pub fn zero_shot(ctx: &Ctx, split: Split) -> Result<(), CliError> {
    let tokenizer = ctx.tokenizer()?;
    let corpus = ctx.corpus(split)?;
    let selections: HashMap<String, Vec<_>> = ctx
        .selections(split)?
        .into_iter()
        .map(|r| (r.dialogue_id, r.input))
        .collect();
    let backend: Box<dyn Seq2SeqBackend> = match &ctx.cfg.zero_shot.weights {
        Some(p) => Box::new(TinyTransformer::load(p)?),
        None => Box::new(MockSeq2Seq::new(
            MockBehavior::Echo {
                limit: ctx.cfg.limits.max_output_len - 1,
            },
            commonsum::sequencing::Tokenizer::vocab_size(&tokenizer),
        )),
    };
    let embedder = ctx.token_embedder();
    let settings = ArmSettings {
        backend: backend.as_ref(),
        tokenizer: &tokenizer,
        embedder: embedder.as_ref(),
        decode: ctx.decode_config(),
        max_input_len: ctx.cfg.limits.max_input_len,
        exec: ctx.exec,
    };
    let result = zero_shot_eval(&settings, &corpus, &selections)?;
    let dir = ctx.stage_dir("zero-shot")?;
    write_arm(&dir.join("with-commonsense"), &result.with_commonsense)?;
    write_arm(&dir.join("without-commonsense"), &result.without_commonsense)?;
    eprintln!(
        "zero-shot: {split}: R-1 with commonsense {:.4}, without {:.4}",
        result.with_commonsense.report.means.rouge1.f1, result.without_commonsense.report.means.rouge1.f1
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    config_hash: &'a str,
    seed: u64,
    fraction: f64,
    example_count: usize,
}

pub fn sweep(ctx: &Ctx) -> Result<(), CliError> {
    let examples = ctx.examples(Split::Train)?;
    let test_examples = ctx.examples(Split::Test)?;
    let test_corpus = ctx.corpus(Split::Test)?;
    let tokenizer = ctx.tokenizer()?;
    let dev = dev_set(ctx)?;
    let dir = ctx.stage_dir("sweep")?;
    let mut failure = None;
    let points = data_efficiency_sweep(&ctx.cfg.sweep.fractions, examples.len(), ctx.cfg.seed, |fraction, idx| {
        let run = || -> Result<MetricsReport, CliError> {
            let fdir = dir.join(format!("fraction-{fraction}"));
            fs::create_dir_all(&fdir).map_err(|e| CliError::io(&fdir, e))?;
            let chosen = subset(&examples, idx);
            let model = train_into(ctx, &fdir, &chosen, fraction, &tokenizer, dev.as_ref(), false)?;
            let outputs = decode_all(ctx, &model, &tokenizer, &test_examples)?;
            write_jsonl(&fdir.join("test.outputs.jsonl"), &outputs)?;
            let report = score_outputs(ctx, &outputs, &test_corpus)?;
            write_report(&fdir, "test.", &report)?;
            write_json(
                &fdir.join("sweep.json"),
                &SweepManifest {
                    config_hash: &ctx.hash,
                    seed: ctx.cfg.seed,
                    fraction,
                    example_count: idx.len(),
                },
            )?;
            eprintln!("sweep: fraction {fraction}: {} examples, R-2 {:.4}", idx.len(), report.means.rouge2.f1);
            Ok(report)
        };
        run().map_err(|e| {
            let msg = e.to_string();
            failure = Some(e);
            EvalError::BackendUnavailable(msg)
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let points = points?;
    write_with(&dir.join("curve.csv"), |buf| write_curve_csv(&points, buf))
}

pub fn attn(ctx: &Ctx, split: Split, markers_as_commonsense: bool) -> Result<(), CliError> {
    let model = ctx.trained_model()?;
    let examples = ctx.examples(split)?;
    let inputs: Vec<AttentionInput<'_>> = examples
        .iter()
        .map(|e| AttentionInput {
            ids: e.input(),
            segments: e.input_segments_unpadded(),
        })
        .collect();
    let profile = attention_commonsense_mass(
        &model,
        &inputs,
        AnalysisOptions {
            markers_as_commonsense,
        },
        ctx.exec,
    )?;
    let dir = ctx.stage_dir("attn")?;
    write_with(&dir.join(format!("{split}.csv")), |buf| profile.write_csv(buf))?;
    write_json(&dir.join(format!("{split}.json")), &profile)?;
    for (l, v) in profile.commonsense().iter().enumerate() {
        eprintln!("attn: layer {l}: commonsense mass {v:.4}");
    }
    Ok(())
}

const TOY_CONFIG: &str = r#"# Toy pipeline: in-process mock backends and a tiny model.
seed = 7
out = "run"
strategy = "similarity"

[corpus]
format = "jsonl"
train = "train.jsonl"
dev = "dev.jsonl"
test = "test.jsonl"

[backends]
knowledge = "mock"
embedder = "mock"
nli = "mock"
token_embedder = "mock"

[knowledge]
profile = "mock"
rules = "rules.json"

[limits]
max_input_len = 1024
# Toy summaries are one utterance long.
max_output_len = 32

[train]
learning_rate = 0.001
batch_size = 16
warmup_steps = 20
epochs = 2
beam = 4
mode = "sick++"

[sweep]
fractions = [0.25, 0.5, 1.0]
"#;

pub fn make_toy(dir: &Path, sizes: [usize; 3], seed: u64) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (split, n) in SPLITS.into_iter().zip(sizes) {
        let corpus = toy::corpus(n, split, derive_seed(seed, &split.to_string()));
        write_with(&dir.join(format!("{split}.jsonl")), |buf| write_corpus(&corpus, buf))?;
    }
    write_json(&dir.join("rules.json"), &toy::rules())?;
    let config = dir.join("toy.toml");
    fs::write(&config, TOY_CONFIG).map_err(|e| CliError::io(&config, e))?;
    eprintln!("make-toy: wrote {} and corpora to {}", config.display(), dir.display());
    Ok(())
}
