//! Corpus-level scoring and the zero-shot and data-efficiency protocols.

mod metrics;

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::exec::Exec;
use crate::multitask::{summarize_text, DecodeConfig, ModelError, Seq2SeqBackend};
use crate::selection::SelectedCommonsense;
use crate::sequencing::{
    cross_concatenate, plain_concatenate, tokenize_and_fit, AugmentedSequence, SequencingError, TokenId, Tokenizer,
};
use crate::text::derive_seed;

pub use metrics::{
    bert_score_f1, bert_score_tokens, lcs_len, metric_tokens, rouge_l, rouge_l_tokens, rouge_n, rouge_n_tokens,
    MetricTriple, OneHotEmbedder, ServiceTokenEmbedder, TokenEmbedder,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference has {reference_len} tokens, fewer than n = {n}")]
    DegenerateInput { n: usize, reference_len: usize },
    #[error("n-gram order must be positive, got {0}")]
    InvalidOrder(usize),
    #[error("{0} text is empty after normalization")]
    EmptyTokenization(&'static str),
    #[error("token embedder unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no output for reference id {0}")]
    MissingOutput(String),
    #[error("no selected commonsense for dialogue {0}")]
    MissingCommonsense(String),
    #[error("fractions must be ascending and in (0, 1]: {0:?}")]
    InvalidFractions(Vec<f64>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sequencing(#[from] SequencingError),
}

/// Scores for one example. Degenerate pairs (empty text, reference shorter
/// than the n-gram order) score zero and are flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetrics {
    pub id: String,
    pub rouge1: MetricTriple,
    pub rouge2: MetricTriple,
    #[serde(rename = "rougeL")]
    pub rouge_l: MetricTriple,
    pub bertscore: MetricTriple,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusMeans {
    pub rouge1: MetricTriple,
    pub rouge2: MetricTriple,
    #[serde(rename = "rougeL")]
    pub rouge_l: MetricTriple,
    pub bertscore: MetricTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub means: CorpusMeans,
    pub fingerprint: String,
    pub per_example: Vec<ExampleMetrics>,
}

/// Serialized summary of a report without the per-example rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub count: usize,
    pub means: CorpusMeans,
    pub fingerprint: String,
    pub degenerate: usize,
}

impl MetricsReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            count: self.count,
            means: self.means,
            fingerprint: self.fingerprint.clone(),
            degenerate: self.per_example.iter().filter(|e| !e.degenerate.is_empty()).count(),
        }
    }

    /// One JSON line per example.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.per_example {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn or_zero(
    result: Result<MetricTriple, EvalError>,
    name: &str,
    flags: &mut Vec<String>,
) -> Result<MetricTriple, EvalError> {
    match result {
        Ok(t) => Ok(t),
        Err(EvalError::DegenerateInput { .. } | EvalError::EmptyTokenization(_)) => {
            flags.push(name.to_string());
            Ok(MetricTriple::ZERO)
        }
        Err(e) => Err(e),
    }
}

/// All four metrics for one pair.
pub fn score_pair(
    id: &str,
    candidate: &str,
    reference: &str,
    embedder: &dyn TokenEmbedder,
) -> Result<ExampleMetrics, EvalError> {
    let c = metric_tokens(candidate);
    let r = metric_tokens(reference);
    let mut flags = Vec::new();
    let (rouge1, rouge2, rouge_l) = if c.is_empty() || r.is_empty() {
        flags.extend(["rouge1", "rouge2", "rougeL"].map(String::from));
        (MetricTriple::ZERO, MetricTriple::ZERO, MetricTriple::ZERO)
    } else {
        (
            or_zero(rouge_n_tokens(&c, &r, 1), "rouge1", &mut flags)?,
            or_zero(rouge_n_tokens(&c, &r, 2), "rouge2", &mut flags)?,
            or_zero(rouge_l_tokens(&c, &r), "rougeL", &mut flags)?,
        )
    };
    let bertscore = or_zero(bert_score_tokens(embedder, &c, &r), "bertscore", &mut flags)?;
    Ok(ExampleMetrics {
        id: id.to_string(),
        rouge1,
        rouge2,
        rouge_l,
        bertscore,
        degenerate: flags,
    })
}

fn mean_triple<'a>(items: impl Iterator<Item = &'a MetricTriple>, n: usize) -> MetricTriple {
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for t in items {
        p += t.precision;
        r += t.recall;
        f += t.f1;
    }
    let n = n.max(1) as f64;
    MetricTriple {
        precision: p / n,
        recall: r / n,
        f1: f / n,
    }
}

/// Corpus means, summed in id order so they do not depend on example order.
pub fn corpus_means(per_example: &[ExampleMetrics]) -> CorpusMeans {
    let mut sorted: Vec<&ExampleMetrics> = per_example.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let n = sorted.len();
    CorpusMeans {
        rouge1: mean_triple(sorted.iter().map(|e| &e.rouge1), n),
        rouge2: mean_triple(sorted.iter().map(|e| &e.rouge2), n),
        rouge_l: mean_triple(sorted.iter().map(|e| &e.rouge_l), n),
        bertscore: mean_triple(sorted.iter().map(|e| &e.bertscore), n),
    }
}

/// Score `outputs` against every reference summary in `references`.
pub fn evaluate_corpus(
    outputs: &HashMap<String, String>,
    references: &Corpus,
    embedder: &dyn TokenEmbedder,
    fingerprint: &str,
    exec: Exec,
) -> Result<MetricsReport, EvalError> {
    let pairs: Vec<(&str, &str, String)> = references
        .examples
        .iter()
        .map(|ex| {
            let id = ex.dialogue.id.as_str();
            let out = outputs.get(id).ok_or_else(|| EvalError::MissingOutput(id.to_string()))?;
            Ok((id, out.as_str(), ex.summary.normalized()))
        })
        .collect::<Result<_, EvalError>>()?;
    let per_example = exec.try_map(&pairs, |(id, cand, reference)| score_pair(id, cand, reference, embedder))?;
    Ok(MetricsReport {
        count: per_example.len(),
        means: corpus_means(&per_example),
        fingerprint: fingerprint.to_string(),
        per_example,
    })
}

/// How one zero-shot arm builds its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputConstruction {
    CrossConcatenated,
    Plain,
}

/// Everything that determines one arm's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmManifest {
    pub backend: String,
    pub embedder: String,
    pub decode: DecodeConfig,
    pub max_input_len: usize,
    pub mode: String,
    pub example_ids: Vec<String>,
    pub input_construction: InputConstruction,
    pub inputs: Vec<Vec<TokenId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub manifest: ArmManifest,
    pub outputs: BTreeMap<String, String>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotResult {
    pub with_commonsense: ArmResult,
    pub without_commonsense: ArmResult,
}

/// Shared settings for decoding and scoring an arm.
pub struct ArmSettings<'a, B: ?Sized, T: ?Sized> {
    pub backend: &'a B,
    pub tokenizer: &'a T,
    pub embedder: &'a dyn TokenEmbedder,
    pub decode: DecodeConfig,
    pub max_input_len: usize,
    pub exec: Exec,
}

/// Decode every input through the summary decoder and score it.
pub fn run_arm<B, T>(
    settings: &ArmSettings<'_, B, T>,
    construction: InputConstruction,
    inputs: &[(String, AugmentedSequence)],
    references: &Corpus,
) -> Result<ArmResult, EvalError>
where
    B: Seq2SeqBackend + ?Sized,
    T: Tokenizer + ?Sized,
{
    let ids = settings.exec.try_map(inputs, |(_, seq)| {
        tokenize_and_fit(seq, settings.tokenizer, settings.max_input_len).map(|f| f.unpadded().0.to_vec())
    })?;
    let decoded = settings.exec.try_map(&ids, |input| {
        summarize_text(settings.backend, settings.tokenizer, input, settings.decode)
    })?;
    let outputs: BTreeMap<String, String> = inputs
        .iter()
        .zip(&decoded)
        .map(|((id, _), d)| (id.clone(), d.text.clone()))
        .collect();
    let manifest = ArmManifest {
        backend: settings.backend.fingerprint(),
        embedder: settings.embedder.name(),
        decode: settings.decode,
        max_input_len: settings.max_input_len,
        mode: "sick".into(),
        example_ids: inputs.iter().map(|(id, _)| id.clone()).collect(),
        input_construction: construction,
        inputs: ids,
    };
    let lookup: HashMap<String, String> = outputs.clone().into_iter().collect();
    let report = evaluate_corpus(&lookup, references, settings.embedder, &settings.backend.fingerprint(), settings.exec)?;
    Ok(ArmResult {
        manifest,
        outputs,
        report,
    })
}

/// Decode `corpus` with a frozen backend twice: once with cross-concatenated
/// commonsense inputs and once with the plain dialogue.
pub fn zero_shot_eval<B, T>(
    settings: &ArmSettings<'_, B, T>,
    corpus: &Corpus,
    selections: &HashMap<String, Vec<SelectedCommonsense>>,
) -> Result<ZeroShotResult, EvalError>
where
    B: Seq2SeqBackend + ?Sized,
    T: Tokenizer + ?Sized,
{
    let mut with = Vec::with_capacity(corpus.len());
    let mut without = Vec::with_capacity(corpus.len());
    for ex in &corpus.examples {
        let id = &ex.dialogue.id;
        let sel = selections
            .get(id)
            .ok_or_else(|| EvalError::MissingCommonsense(id.clone()))?;
        with.push((id.clone(), cross_concatenate(&ex.dialogue, sel)?));
        without.push((id.clone(), plain_concatenate(&ex.dialogue)?));
    }
    Ok(ZeroShotResult {
        with_commonsense: run_arm(settings, InputConstruction::CrossConcatenated, &with, corpus)?,
        without_commonsense: run_arm(settings, InputConstruction::Plain, &without, corpus)?,
    })
}

/// Nested subsets of `0..n`: one seeded shuffle, prefix of `ceil(f * n)`
/// per fraction, each returned in ascending index order.
pub fn nested_subsets(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    let valid = !fractions.is_empty()
        && fractions.iter().all(|f| *f > 0.0 && *f <= 1.0)
        && fractions.windows(2).all(|w| w[0] <= w[1]);
    if !valid {
        return Err(EvalError::InvalidFractions(fractions.to_vec()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "sweep")));
    Ok(fractions
        .iter()
        .map(|f| {
            let k = ((f * n as f64).ceil() as usize).clamp(1.min(n), n);
            let mut subset = order[..k].to_vec();
            subset.sort_unstable();
            subset
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fraction: f64,
    pub example_count: usize,
    pub report: MetricsReport,
}

/// Run `train_and_eval` once per fraction on nested training subsets.
pub fn data_efficiency_sweep<F>(
    fractions: &[f64],
    corpus_len: usize,
    seed: u64,
    mut train_and_eval: F,
) -> Result<Vec<SweepPoint>, EvalError>
where
    F: FnMut(f64, &[usize]) -> Result<MetricsReport, EvalError>,
{
    let subsets = nested_subsets(corpus_len, fractions, seed)?;
    fractions
        .iter()
        .zip(subsets)
        .map(|(&fraction, subset)| {
            Ok(SweepPoint {
                fraction,
                example_count: subset.len(),
                report: train_and_eval(fraction, &subset)?,
            })
        })
        .collect()
}

/// Curve CSV: `fraction,R-1,R-2,R-L,B-S` with F1 means.
pub fn write_curve_csv<W: Write>(points: &[SweepPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "fraction,R-1,R-2,R-L,B-S")?;
    for p in points {
        let m = &p.report.means;
        writeln!(
            out,
            "{},{},{},{},{}",
            p.fraction, m.rouge1.f1, m.rouge2.f1, m.rouge_l.f1, m.bertscore.f1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split_summary_sentences, Dialogue, Example, Split};

    fn corpus(summaries: &[&str]) -> Corpus {
        let examples = summaries
            .iter()
            .enumerate()
            .map(|(i, s)| Example {
                dialogue: Dialogue::new(format!("d{i}"), &[("A", "hello there"), ("B", "hi")]).unwrap(),
                summary: split_summary_sentences(s).unwrap(),
            })
            .collect();
        Corpus::new("t", Split::Test, examples).unwrap()
    }

    #[test]
    fn identity_corpus_scores_one() {
        let c = corpus(&["Amanda baked cookies.", "Tom will call Lisa later."]);
        let outputs = c
            .examples
            .iter()
            .map(|e| (e.dialogue.id.clone(), e.summary.normalized()))
            .collect();
        let r = evaluate_corpus(&outputs, &c, &OneHotEmbedder::new(), "fp", Exec::Sequential).unwrap();
        assert_eq!(r.count, 2);
        for t in [r.means.rouge1, r.means.rouge2, r.means.rouge_l, r.means.bertscore] {
            assert_eq!(t, MetricTriple::new(1.0, 1.0));
        }
    }

    #[test]
    fn missing_output_is_reported() {
        let c = corpus(&["A b.", "C d."]);
        let outputs = HashMap::from([("d0".to_string(), "a b".to_string())]);
        let r = evaluate_corpus(&outputs, &c, &OneHotEmbedder::new(), "fp", Exec::Sequential);
        assert!(matches!(r, Err(EvalError::MissingOutput(id)) if id == "d1"));
    }

    #[test]
    fn empty_candidate_is_flagged_not_fatal() {
        let m = score_pair("x", "", "a b c", &OneHotEmbedder::new()).unwrap();
        assert_eq!(m.rouge1, MetricTriple::ZERO);
        assert_eq!(m.degenerate.len(), 4);
    }

    #[test]
    fn subsets_are_nested() {
        let s = nested_subsets(50, &[0.3, 0.7, 1.0], 9).unwrap();
        assert_eq!(s.iter().map(Vec::len).collect::<Vec<_>>(), vec![15, 35, 50]);
        assert!(s[0].iter().all(|i| s[1].contains(i)));
        assert_eq!(s[2], (0..50).collect::<Vec<_>>());
        assert!(nested_subsets(10, &[0.7, 0.3], 0).is_err());
        assert!(nested_subsets(10, &[0.0], 0).is_err());
    }

    #[test]
    fn curve_csv_has_one_row_per_fraction() {
        let report = MetricsReport {
            count: 0,
            means: CorpusMeans::default(),
            fingerprint: String::new(),
            per_example: vec![],
        };
        let points = vec![SweepPoint {
            fraction: 0.5,
            example_count: 3,
            report,
        }];
        let mut buf = Vec::new();
        write_curve_csv(&points, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "fraction,R-1,R-2,R-L,B-S\n0.5,0,0,0,0\n");
    }
}
