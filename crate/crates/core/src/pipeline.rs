//! Stage functions shared by the command line and the integration tests.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError};
use crate::evaluation::EvalError;
use crate::knowledge::{CandidateRecord, KnowledgeBackend, KnowledgeError};
use crate::multitask::ModelError;
use crate::selection::{SelectedCommonsense, SelectionError, Selector};
use crate::sequencing::{
    build_training_example, commonsense_target_text, cross_concatenate, Limits, SequencingError, TextExample,
    Tokenizer, TrainingExample, Vocab,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Sequencing(#[from] SequencingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no {stage} record for dialogue {id}")]
    MissingRecord { stage: &'static str, id: String },
}

/// Candidates for every utterance and, when `with_targets`, every summary
/// sentence. Dialogues are processed in corpus order so the cache journal
/// is written deterministically.
pub fn generate_candidates(
    backend: &KnowledgeBackend,
    corpus: &Corpus,
    with_targets: bool,
) -> Result<Vec<CandidateRecord>, KnowledgeError> {
    corpus
        .examples
        .iter()
        .map(|ex| {
            let input = backend.generate_input_candidates(&ex.dialogue)?;
            let target = if with_targets {
                backend.generate_target_candidates(&ex.dialogue.id, &ex.summary)?
            } else {
                Vec::new()
            };
            Ok(CandidateRecord {
                dialogue_id: ex.dialogue.id.clone(),
                input,
                target,
            })
        })
        .collect()
}

/// Selected input (`C`) and target (`Z`) commonsense for one dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedRecord {
    pub dialogue_id: String,
    pub input: Vec<SelectedCommonsense>,
    #[serde(default)]
    pub target: Vec<SelectedCommonsense>,
}

pub fn select_commonsense(
    selector: &Selector,
    corpus: &Corpus,
    candidates: &[CandidateRecord],
) -> Result<Vec<SelectedRecord>, PipelineError> {
    let by_id: HashMap<&str, &CandidateRecord> = candidates.iter().map(|c| (c.dialogue_id.as_str(), c)).collect();
    corpus
        .examples
        .iter()
        .map(|ex| {
            let id = ex.dialogue.id.as_str();
            let rec = by_id.get(id).ok_or_else(|| PipelineError::MissingRecord {
                stage: "gen-commonsense",
                id: id.to_string(),
            })?;
            let input = selector.select_input(&ex.dialogue, &rec.input)?;
            let target = if rec.target.is_empty() {
                Vec::new()
            } else {
                selector.select_target(id, &ex.summary, &rec.target)?
            };
            Ok(SelectedRecord {
                dialogue_id: id.to_string(),
                input,
                target,
            })
        })
        .collect()
}

fn selection_for<'a>(
    by_id: &HashMap<&str, &'a SelectedRecord>,
    id: &str,
) -> Result<&'a SelectedRecord, PipelineError> {
    by_id.get(id).copied().ok_or_else(|| PipelineError::MissingRecord {
        stage: "select",
        id: id.to_string(),
    })
}

/// Human-readable `(X, Y, Z)` views, without tokenization.
pub fn text_examples(corpus: &Corpus, selections: &[SelectedRecord]) -> Result<Vec<TextExample>, PipelineError> {
    let by_id: HashMap<&str, &SelectedRecord> = selections.iter().map(|s| (s.dialogue_id.as_str(), s)).collect();
    corpus
        .examples
        .iter()
        .map(|ex| {
            let sel = selection_for(&by_id, &ex.dialogue.id)?;
            let x = cross_concatenate(&ex.dialogue, &sel.input)?;
            let z: Vec<&str> = sel.target.iter().map(|s| s.chosen.text.as_str()).collect();
            Ok(TextExample {
                id: ex.dialogue.id.clone(),
                x: x.text,
                y: ex.summary.normalized(),
                z: commonsense_target_text(&z),
            })
        })
        .collect()
}

/// Vocabulary over every input, summary and commonsense target.
pub fn build_vocab(texts: &[TextExample], max_size: usize) -> Vocab {
    Vocab::build(
        texts
            .iter()
            .flat_map(|t| [t.x.as_str(), t.y.as_str(), t.z.as_str()]),
        max_size,
    )
}

pub fn training_examples<T: Tokenizer + ?Sized>(
    corpus: &Corpus,
    selections: &[SelectedRecord],
    tokenizer: &T,
    limits: Limits,
    multitask: bool,
) -> Result<Vec<TrainingExample>, PipelineError> {
    let by_id: HashMap<&str, &SelectedRecord> = selections.iter().map(|s| (s.dialogue_id.as_str(), s)).collect();
    corpus
        .examples
        .iter()
        .map(|ex| {
            let sel = selection_for(&by_id, &ex.dialogue.id)?;
            let (example, _) =
                build_training_example(&ex.dialogue, &sel.input, &ex.summary, &sel.target, tokenizer, limits, multitask)?;
            Ok(example)
        })
        .collect()
}
