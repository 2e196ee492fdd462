//! Pick one inference per source unit by argmax over a scorer.
//!
//! Ties are broken by relation catalog order, then by beam rank, so the
//! selection is reproducible regardless of scoring backend.

mod embed;

pub use embed::{
    bag_of_words, cosine, EmbedRequest, EmbedResponse, HashingBowEmbedder, LexicalNli,
    NliDistribution, NliModel, NliRequest, SentenceEmbedder, ServiceEmbedder, ServiceNli,
};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dialogue, SummaryDoc};
use crate::exec::Exec;
use crate::knowledge::{CandidateInference, CandidateSet, RelationType};
use crate::text::derive_seed;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("scoring backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("entailment distribution is not a probability distribution: {0:?}")]
    MalformedDistribution(NliDistribution),
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("expected {expected} candidate sets, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("candidate set {position} is tagged with source index {source_index}")]
    Misaligned { position: usize, source_index: usize },
    #[error("scorer produced a non-finite score")]
    NonFiniteScore,
    #[error("text to score is empty")]
    EmptyText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Similarity,
    Nli,
    Random,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "similarity" => Ok(Strategy::Similarity),
            "nli" => Ok(Strategy::Nli),
            "random" => Ok(Strategy::Random),
            other => Err(format!("unknown selection strategy `{other}`")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Similarity => "similarity",
            Strategy::Nli => "nli",
            Strategy::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedCommonsense {
    pub source_index: usize,
    pub chosen: CandidateInference,
    pub score: f64,
    pub strategy: Strategy,
}

/// Cosine similarity of the two sentence embeddings.
pub fn similarity_score(
    embedder: &dyn SentenceEmbedder,
    a: &str,
    b: &str,
) -> Result<f64, SelectionError> {
    if a.trim().is_empty() || b.trim().is_empty() {
        return Err(SelectionError::EmptyText);
    }
    let v = embedder.embed(&[a, b])?;
    Ok(cosine(&v[0], &v[1]))
}

/// `P(entail) - P(contradict)` with the source as premise and the
/// candidate as hypothesis.
pub fn nli_score(nli: &dyn NliModel, premise: &str, hypothesis: &str) -> Result<f64, SelectionError> {
    nli.distribution(premise, hypothesis)?.score()
}

#[derive(Clone)]
pub enum Scorer {
    Similarity(Arc<dyn SentenceEmbedder>),
    Nli(Arc<dyn NliModel>),
    /// Uniform draw, ignoring text. Seeded per source unit.
    Random { seed: u64 },
}

impl Scorer {
    pub fn strategy(&self) -> Strategy {
        match self {
            Scorer::Similarity(_) => Strategy::Similarity,
            Scorer::Nli(_) => Strategy::Nli,
            Scorer::Random { .. } => Strategy::Random,
        }
    }

    /// Score every candidate against `source`. The random scorer assigns 0.
    pub fn score_all(&self, source: &str, candidates: &[CandidateInference]) -> Result<Vec<f64>, SelectionError> {
        let scores = match self {
            Scorer::Similarity(embedder) => {
                if source.trim().is_empty() || candidates.iter().any(|c| c.text.trim().is_empty()) {
                    return Err(SelectionError::EmptyText);
                }
                let mut texts = Vec::with_capacity(candidates.len() + 1);
                texts.push(source);
                texts.extend(candidates.iter().map(|c| c.text.as_str()));
                let vectors = embedder.embed(&texts)?;
                vectors[1..].iter().map(|v| cosine(&vectors[0], v)).collect()
            }
            Scorer::Nli(model) => candidates
                .iter()
                .map(|c| nli_score(model.as_ref(), source, &c.text))
                .collect::<Result<Vec<_>, _>>()?,
            Scorer::Random { .. } => vec![0.0; candidates.len()],
        };
        if scores.iter().any(|s: &f64| !s.is_finite()) {
            return Err(SelectionError::NonFiniteScore);
        }
        Ok(scores)
    }
}

/// Index of the best-scoring candidate. Equal scores go to the candidate
/// whose relation comes first in `catalog`, then to the lower rank.
pub fn argmax_index(
    candidates: &[CandidateInference],
    scores: &[f64],
    catalog: &[RelationType],
) -> Option<usize> {
    let order = |c: &CandidateInference| {
        (
            catalog.iter().position(|r| *r == c.relation).unwrap_or(usize::MAX),
            c.rank,
        )
    };
    let mut best: Option<usize> = None;
    for (i, (cand, &score)) in candidates.iter().zip(scores).enumerate() {
        best = match best {
            None => Some(i),
            Some(b) if score > scores[b] || (score == scores[b] && order(cand) < order(&candidates[b])) => {
                Some(i)
            }
            keep => keep,
        };
    }
    best
}

/// Scorer plus the relation catalog that defines tie-break order.
#[derive(Clone)]
pub struct Selector {
    pub scorer: Scorer,
    pub catalog: Vec<RelationType>,
    pub exec: Exec,
}

impl Selector {
    pub fn new(scorer: Scorer, catalog: Vec<RelationType>) -> Self {
        Selector {
            scorer,
            catalog,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Select from one candidate set. `unit_key` seeds the random strategy so
    /// the draw does not depend on processing order.
    pub fn select(
        &self,
        set: &CandidateSet,
        source_text: &str,
        unit_key: &str,
    ) -> Result<SelectedCommonsense, SelectionError> {
        if set.candidates.is_empty() {
            return Err(SelectionError::EmptyCandidateSet);
        }
        let scores = self.scorer.score_all(source_text, &set.candidates)?;
        let index = match &self.scorer {
            Scorer::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(*seed, unit_key));
                rng.gen_range(0..set.candidates.len())
            }
            _ => argmax_index(&set.candidates, &scores, &self.catalog)
                .ok_or(SelectionError::EmptyCandidateSet)?,
        };
        Ok(SelectedCommonsense {
            source_index: set.source_index,
            chosen: set.candidates[index].clone(),
            score: scores[index],
            strategy: self.scorer.strategy(),
        })
    }

    /// Select one inference per source unit, preserving unit order.
    pub fn select_all<S: AsRef<str> + Sync>(
        &self,
        doc_key: &str,
        units: &[S],
        sets: &[CandidateSet],
    ) -> Result<Vec<SelectedCommonsense>, SelectionError> {
        if units.len() != sets.len() {
            return Err(SelectionError::LengthMismatch {
                expected: units.len(),
                got: sets.len(),
            });
        }
        for (position, set) in sets.iter().enumerate() {
            if set.source_index != position {
                return Err(SelectionError::Misaligned {
                    position,
                    source_index: set.source_index,
                });
            }
        }
        let jobs: Vec<usize> = (0..units.len()).collect();
        self.exec.try_map(&jobs, |&i| {
            self.select(&sets[i], units[i].as_ref(), &format!("{doc_key}/{i}"))
        })
    }

    /// Input commonsense `C`: scored against the utterances only.
    pub fn select_input(
        &self,
        dialogue: &Dialogue,
        sets: &[CandidateSet],
    ) -> Result<Vec<SelectedCommonsense>, SelectionError> {
        self.select_all(&dialogue.id, &dialogue.attributed_utterances(), sets)
    }

    /// Target commonsense `Z`: scored against the summary sentences only.
    pub fn select_target(
        &self,
        doc_id: &str,
        summary: &SummaryDoc,
        sets: &[CandidateSet],
    ) -> Result<Vec<SelectedCommonsense>, SelectionError> {
        self.select_all(&format!("{doc_id}#summary"), &summary.sentences, sets)
    }
}

/// One line of the selection dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub dialogue_id: String,
    pub source_index: usize,
    pub strategy: Strategy,
    pub relation: RelationType,
    pub rank: usize,
    pub text: String,
    pub score: f64,
}

impl SelectionRecord {
    pub fn new(dialogue_id: &str, s: &SelectedCommonsense) -> Self {
        SelectionRecord {
            dialogue_id: dialogue_id.to_string(),
            source_index: s.source_index,
            strategy: s.strategy,
            relation: s.chosen.relation.clone(),
            rank: s.chosen.rank,
            text: s.chosen.text.clone(),
            score: s.score,
        }
    }

    pub fn into_selection(self) -> (String, SelectedCommonsense) {
        (
            self.dialogue_id,
            SelectedCommonsense {
                source_index: self.source_index,
                chosen: CandidateInference {
                    relation: self.relation,
                    rank: self.rank,
                    text: self.text,
                },
                score: self.score,
                strategy: self.strategy,
            },
        )
    }
}

/// Mean and population standard deviation of selected scores, for the
/// strategy-comparison report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn summarize_scores<'a, I>(selections: I) -> ScoreSummary
where
    I: IntoIterator<Item = &'a SelectedCommonsense>,
{
    let scores: Vec<f64> = selections.into_iter().map(|s| s.score).collect();
    let count = scores.len();
    if count == 0 {
        return ScoreSummary {
            count,
            mean: 0.0,
            std: 0.0,
        };
    }
    let mean = scores.iter().sum::<f64>() / count as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / count as f64;
    ScoreSummary {
        count,
        mean,
        std: var.sqrt(),
    }
}
