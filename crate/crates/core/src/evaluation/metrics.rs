//! ROUGE-1/2/L and greedy-alignment BERTScore.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::selection::cosine;
use crate::service::ServiceClient;

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricTriple {
    pub const ZERO: MetricTriple = MetricTriple {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricTriple { precision, recall, f1 }
    }
}

/// Metric tokens: lowercase, every punctuation character its own token,
/// split on whitespace. No stemming.
pub fn metric_tokens(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace()) {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

fn tokens_checked(text: &str, which: &'static str) -> Result<Vec<String>, EvalError> {
    let t = metric_tokens(text);
    if t.is_empty() {
        return Err(EvalError::EmptyTokenization(which));
    }
    Ok(t)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N over token lists.
pub fn rouge_n_tokens(candidate: &[String], reference: &[String], n: usize) -> Result<MetricTriple, EvalError> {
    if n == 0 {
        return Err(EvalError::InvalidOrder(n));
    }
    if reference.len() < n {
        return Err(EvalError::DegenerateInput {
            n,
            reference_len: reference.len(),
        });
    }
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    let cand_total = candidate.len().saturating_sub(n - 1);
    let ref_total = reference.len() - (n - 1);
    let p = if cand_total == 0 {
        0.0
    } else {
        overlap as f64 / cand_total as f64
    };
    Ok(MetricTriple::new(p, overlap as f64 / ref_total as f64))
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<MetricTriple, EvalError> {
    let c = tokens_checked(candidate, "candidate")?;
    let r = tokens_checked(reference, "reference")?;
    rouge_n_tokens(&c, &r, n)
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_tokens(candidate: &[String], reference: &[String]) -> Result<MetricTriple, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::DegenerateInput { n: 1, reference_len: 0 });
    }
    if candidate.is_empty() {
        return Ok(MetricTriple::ZERO);
    }
    let l = lcs_len(candidate, reference) as f64;
    Ok(MetricTriple::new(l / candidate.len() as f64, l / reference.len() as f64))
}

pub fn rouge_l(candidate: &str, reference: &str) -> Result<MetricTriple, EvalError> {
    let c = tokens_checked(candidate, "candidate")?;
    let r = tokens_checked(reference, "reference")?;
    rouge_l_tokens(&c, &r)
}

/// Contextual token embeddings: one vector per input token.
pub trait TokenEmbedder: Send + Sync {
    fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, EvalError>;

    /// Identifies the embedder in report fingerprints.
    fn name(&self) -> String;
}

/// Each distinct token gets its own axis, so cosine is 1 for equal tokens
/// and 0 otherwise. Axes are assigned on first sight and shared across calls.
#[derive(Debug, Default)]
pub struct OneHotEmbedder {
    axes: Mutex<HashMap<String, usize>>,
}

impl OneHotEmbedder {
    pub fn new() -> Self {
        OneHotEmbedder::default()
    }
}

impl TokenEmbedder for OneHotEmbedder {
    fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
        let mut axes = self.axes.lock().expect("axis table lock poisoned");
        Ok(tokens
            .iter()
            .map(|t| {
                let next = axes.len();
                let axis = *axes.entry(t.clone()).or_insert(next);
                let mut v = vec![0.0; axis + 1];
                v[axis] = 1.0;
                v
            })
            .collect())
    }

    fn name(&self) -> String {
        "one-hot".into()
    }
}

#[derive(Debug, Serialize)]
pub struct TokenEmbedRequest<'a> {
    pub tokens: &'a [String],
}

#[derive(Debug, Deserialize)]
pub struct TokenEmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Token embedder behind a JSON endpoint.
#[derive(Debug, Clone)]
pub struct ServiceTokenEmbedder {
    client: ServiceClient,
}

impl ServiceTokenEmbedder {
    pub fn new(endpoint: &str) -> Self {
        ServiceTokenEmbedder {
            client: ServiceClient::new(endpoint),
        }
    }
}

impl TokenEmbedder for ServiceTokenEmbedder {
    fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
        let response: TokenEmbedResponse = self
            .client
            .call(&TokenEmbedRequest { tokens })
            .map_err(|e| EvalError::BackendUnavailable(e.to_string()))?;
        if response.vectors.len() != tokens.len() {
            return Err(EvalError::BackendUnavailable(format!(
                "expected {} vectors, got {}",
                tokens.len(),
                response.vectors.len()
            )));
        }
        Ok(response.vectors)
    }

    fn name(&self) -> String {
        format!("service:{}", self.client.endpoint())
    }
}

/// Greedy-alignment BERTScore without idf weighting. Similarities are
/// clipped at 0 so the triple stays in `[0, 1]`.
pub fn bert_score_tokens(
    embedder: &dyn TokenEmbedder,
    candidate: &[String],
    reference: &[String],
) -> Result<MetricTriple, EvalError> {
    if candidate.is_empty() {
        return Err(EvalError::EmptyTokenization("candidate"));
    }
    if reference.is_empty() {
        return Err(EvalError::EmptyTokenization("reference"));
    }
    let c = embedder.embed_tokens(candidate)?;
    let r = embedder.embed_tokens(reference)?;
    let sims: Vec<Vec<f64>> = c
        .iter()
        .map(|cv| r.iter().map(|rv| cosine(cv, rv).max(0.0)).collect())
        .collect();
    let precision = sims
        .iter()
        .map(|row| row.iter().cloned().fold(0.0, f64::max))
        .sum::<f64>()
        / c.len() as f64;
    let recall = (0..r.len())
        .map(|j| sims.iter().map(|row| row[j]).fold(0.0, f64::max))
        .sum::<f64>()
        / r.len() as f64;
    Ok(MetricTriple::new(precision, recall))
}

pub fn bert_score_f1(embedder: &dyn TokenEmbedder, candidate: &str, reference: &str) -> Result<MetricTriple, EvalError> {
    bert_score_tokens(embedder, &metric_tokens(candidate), &metric_tokens(reference))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        metric_tokens(s)
    }

    #[test]
    fn normalization_splits_punctuation() {
        assert_eq!(toks("Hi, Tom! It's 5pm."), ["hi", ",", "tom", "!", "it", "'", "s", "5pm", "."]);
    }

    #[test]
    fn rouge_examples() {
        let t = rouge_n("the cat sat", "the cat ran", 1).unwrap();
        assert_eq!((t.precision, t.recall), (2.0 / 3.0, 2.0 / 3.0));
        assert!((t.f1 - 2.0 / 3.0).abs() < 1e-15);
        for n in [1, 2] {
            assert_eq!(rouge_n("a b c d", "a b c d", n).unwrap(), MetricTriple::new(1.0, 1.0));
        }
        assert_eq!(rouge_n("x y", "a b", 1).unwrap(), MetricTriple::ZERO);
        assert!(matches!(rouge_n("a b", "a", 2), Err(EvalError::DegenerateInput { n: 2, .. })));
        assert!(rouge_n("...", "a", 1).is_ok());
        assert!(matches!(rouge_n("", "a", 1), Err(EvalError::EmptyTokenization("candidate"))));
    }

    #[test]
    fn clipping_caps_repeats() {
        let t = rouge_n("the the the the", "the cat", 1).unwrap();
        assert_eq!((t.precision, t.recall), (0.25, 0.5));
    }

    #[test]
    fn rouge_l_examples() {
        let t = rouge_l("the cat sat on mat", "the cat on the mat").unwrap();
        assert_eq!((t.precision, t.recall), (4.0 / 5.0, 4.0 / 5.0));
        let t = rouge_l("a b c d", "e f a g").unwrap();
        assert_eq!((t.precision, t.recall), (0.25, 0.25));
        assert_eq!(lcs_len(&[1, 2, 3], &[3, 2, 1]), 1);
    }

    #[test]
    fn one_hot_bertscore() {
        let e = OneHotEmbedder::new();
        assert_eq!(bert_score_f1(&e, "a b c", "a b c").unwrap().f1, 1.0);
        assert_eq!(bert_score_f1(&e, "a b", "c d").unwrap().f1, 0.0);
        let t = bert_score_f1(&e, "a b x y", "b a z").unwrap();
        assert_eq!((t.precision, t.recall), (0.5, 2.0 / 3.0));
    }
}
