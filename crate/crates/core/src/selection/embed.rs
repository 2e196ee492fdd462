//! Sentence embedders and entailment models used to score candidates.

use serde::{Deserialize, Serialize};

use super::SelectionError;
use crate::service::ServiceClient;
use crate::text::fnv1a64;

pub trait SentenceEmbedder: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, SelectionError>;
}

/// Lowercased alphanumeric words.
pub fn bag_of_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Term-count vectorizer over a fixed hashed feature space: word `w` lands
/// in bucket `fnv1a64(w) % dims`.
#[derive(Debug, Clone)]
pub struct HashingBowEmbedder {
    dims: usize,
}

impl HashingBowEmbedder {
    pub const DEFAULT_DIMS: usize = 1 << 12;

    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "embedding needs at least one dimension");
        HashingBowEmbedder { dims }
    }

    pub fn bucket(&self, word: &str) -> usize {
        (fnv1a64(word.as_bytes()) % self.dims as u64) as usize
    }

    fn vectorize(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dims];
        for w in bag_of_words(text) {
            v[self.bucket(&w)] += 1.0;
        }
        v
    }
}

impl Default for HashingBowEmbedder {
    fn default() -> Self {
        HashingBowEmbedder::new(Self::DEFAULT_DIMS)
    }
}

impl SentenceEmbedder for HashingBowEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, SelectionError> {
        Ok(texts.iter().map(|t| self.vectorize(t)).collect())
    }
}

#[derive(Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

pub struct ServiceEmbedder {
    client: ServiceClient,
}

impl ServiceEmbedder {
    pub fn new(endpoint: &str) -> Self {
        ServiceEmbedder {
            client: ServiceClient::new(endpoint),
        }
    }
}

impl SentenceEmbedder for ServiceEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, SelectionError> {
        let request = EmbedRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let response: EmbedResponse = self
            .client
            .call(&request)
            .map_err(|e| SelectionError::BackendUnavailable(e.to_string()))?;
        if response.vectors.len() != texts.len() {
            return Err(SelectionError::BackendUnavailable(format!(
                "expected {} vectors, got {}",
                texts.len(),
                response.vectors.len()
            )));
        }
        Ok(response.vectors)
    }
}

/// Cosine similarity; zero vectors score 0. Vectors of unequal length are
/// compared as if the shorter were zero-padded.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// Three-way entailment distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliDistribution {
    pub entail: f64,
    pub neutral: f64,
    pub contradict: f64,
}

impl NliDistribution {
    /// `P(entail) - P(contradict)` after checking the distribution is proper.
    pub fn score(&self) -> Result<f64, SelectionError> {
        let probs = [self.entail, self.neutral, self.contradict];
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
            || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-6
        {
            return Err(SelectionError::MalformedDistribution(*self));
        }
        Ok((self.entail - self.contradict).clamp(-1.0, 1.0))
    }
}

pub trait NliModel: Send + Sync {
    fn distribution(&self, premise: &str, hypothesis: &str) -> Result<NliDistribution, SelectionError>;
}

/// Overlap-driven stand-in for an entailment classifier: the more of the
/// hypothesis' words occur in the premise, the more it is "entailed".
#[derive(Debug, Clone, Default)]
pub struct LexicalNli;

impl NliModel for LexicalNli {
    fn distribution(&self, premise: &str, hypothesis: &str) -> Result<NliDistribution, SelectionError> {
        let premise: std::collections::BTreeSet<String> = bag_of_words(premise).collect();
        let hyp: Vec<String> = bag_of_words(hypothesis).collect();
        let overlap = if hyp.is_empty() {
            0.0
        } else {
            hyp.iter().filter(|w| premise.contains(*w)).count() as f64 / hyp.len() as f64
        };
        let entail = 0.05 + 0.9 * overlap;
        let contradict = 0.05 + 0.3 * (1.0 - overlap);
        Ok(NliDistribution {
            entail,
            neutral: (1.0 - entail - contradict).max(0.0),
            contradict,
        })
    }
}

#[derive(Serialize, Deserialize)]
pub struct NliRequest {
    pub premise: String,
    pub hypothesis: String,
}

pub struct ServiceNli {
    client: ServiceClient,
}

impl ServiceNli {
    pub fn new(endpoint: &str) -> Self {
        ServiceNli {
            client: ServiceClient::new(endpoint),
        }
    }
}

impl NliModel for ServiceNli {
    fn distribution(&self, premise: &str, hypothesis: &str) -> Result<NliDistribution, SelectionError> {
        self.client
            .call(&NliRequest {
                premise: premise.to_string(),
                hypothesis: hypothesis.to_string(),
            })
            .map_err(|e| SelectionError::BackendUnavailable(e.to_string()))
    }
}
