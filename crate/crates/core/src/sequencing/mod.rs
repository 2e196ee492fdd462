//! Cross-concatenated model inputs and dual-target training examples.
//!
//! An input interleaves every utterance with its selected inference:
//! `u_1 <I> c_1 </I> u_2 <I> c_2 </I> ...`. Truncation only ever drops whole
//! trailing `(utterance, inference)` blocks.

mod tokenizer;

pub use tokenizer::{
    SpecialTokens, TokenId, Tokenizer, Vocab, WordTokenizer, CLOSE_MARKER, OPEN_MARKER, SPECIALS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dialogue, SummaryDoc};
use crate::selection::SelectedCommonsense;
use crate::text::normalize_whitespace;

pub const DEFAULT_MAX_INPUT_LEN: usize = 1024;
pub const DEFAULT_MAX_OUTPUT_LEN: usize = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SequencingError {
    #[error("expected {expected} aligned items, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("selection at position {position} belongs to source unit {source_index}")]
    Misaligned { position: usize, source_index: usize },
    #[error("text at position {0} contains a segment marker")]
    MarkerInContent(usize),
    #[error("utterance at position {0} is empty")]
    EmptyUtterance(usize),
    #[error("inference at position {0} is empty")]
    EmptyInference(usize),
    #[error("unbalanced segment markers")]
    UnbalancedMarkers,
    #[error("closing marker without an opening marker")]
    StrayMarker,
    #[error("first block needs {needed} tokens but the budget is {budget}")]
    BlockTooLarge { needed: usize, budget: usize },
    #[error("commonsense target is empty")]
    EmptyTarget,
}

/// Per-token role inside a model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Dialogue,
    Commonsense,
    Marker,
    Special,
}

impl Segment {
    pub const ALL: [Segment; 4] = [
        Segment::Dialogue,
        Segment::Commonsense,
        Segment::Marker,
        Segment::Special,
    ];

    pub fn index(self) -> usize {
        match self {
            Segment::Dialogue => 0,
            Segment::Commonsense => 1,
            Segment::Marker => 2,
            Segment::Special => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub utterance: String,
    /// `None` for plain (non-augmented) inputs.
    pub commonsense: Option<String>,
}

/// A formatted input. `segments` and `pair_boundaries` index the
/// whitespace-separated words of `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedSequence {
    pub text: String,
    pub blocks: Vec<Block>,
    pub segments: Vec<Segment>,
    pub pair_boundaries: Vec<usize>,
}

impl AugmentedSequence {
    fn from_blocks(blocks: Vec<Block>) -> Self {
        let mut words: Vec<&str> = Vec::new();
        let mut segments = Vec::new();
        let mut pair_boundaries = Vec::with_capacity(blocks.len());
        for block in &blocks {
            pair_boundaries.push(words.len());
            for w in block.utterance.split(' ') {
                words.push(w);
                segments.push(Segment::Dialogue);
            }
            if let Some(cs) = &block.commonsense {
                words.push(OPEN_MARKER);
                segments.push(Segment::Marker);
                for w in cs.split(' ') {
                    words.push(w);
                    segments.push(Segment::Commonsense);
                }
                words.push(CLOSE_MARKER);
                segments.push(Segment::Marker);
            }
        }
        AugmentedSequence {
            text: words.join(" "),
            blocks,
            segments,
            pair_boundaries,
        }
    }

    pub fn is_augmented(&self) -> bool {
        self.blocks.iter().any(|b| b.commonsense.is_some())
    }
}

fn check_content(text: &str, position: usize) -> Result<String, SequencingError> {
    let text = normalize_whitespace(text);
    if text
        .split(' ')
        .any(|w| w == OPEN_MARKER || w == CLOSE_MARKER)
    {
        return Err(SequencingError::MarkerInContent(position));
    }
    Ok(text)
}

/// Interleave utterance and inference texts turn by turn.
pub fn cross_concatenate_texts<U, C>(
    utterances: &[U],
    inferences: &[C],
) -> Result<AugmentedSequence, SequencingError>
where
    U: AsRef<str>,
    C: AsRef<str>,
{
    if utterances.is_empty() || utterances.len() != inferences.len() {
        return Err(SequencingError::LengthMismatch {
            expected: utterances.len().max(1),
            got: inferences.len(),
        });
    }
    let mut blocks = Vec::with_capacity(utterances.len());
    for (i, (u, c)) in utterances.iter().zip(inferences).enumerate() {
        let utterance = check_content(u.as_ref(), i)?;
        let commonsense = check_content(c.as_ref(), i)?;
        if utterance.is_empty() {
            return Err(SequencingError::EmptyUtterance(i));
        }
        if commonsense.is_empty() {
            return Err(SequencingError::EmptyInference(i));
        }
        blocks.push(Block {
            utterance,
            commonsense: Some(commonsense),
        });
    }
    Ok(AugmentedSequence::from_blocks(blocks))
}

/// Build `X = D ⊕ C` from a dialogue and its per-utterance selections.
pub fn cross_concatenate(
    dialogue: &Dialogue,
    selections: &[SelectedCommonsense],
) -> Result<AugmentedSequence, SequencingError> {
    if dialogue.is_empty() || selections.len() != dialogue.len() {
        return Err(SequencingError::LengthMismatch {
            expected: dialogue.len(),
            got: selections.len(),
        });
    }
    for (position, sel) in selections.iter().enumerate() {
        if sel.source_index != position {
            return Err(SequencingError::Misaligned {
                position,
                source_index: sel.source_index,
            });
        }
    }
    let inferences: Vec<&str> = selections.iter().map(|s| s.chosen.text.as_str()).collect();
    cross_concatenate_texts(&dialogue.attributed_utterances(), &inferences)
}

/// The dialogue alone, one block per utterance, no markers.
pub fn plain_concatenate(dialogue: &Dialogue) -> Result<AugmentedSequence, SequencingError> {
    if dialogue.is_empty() {
        return Err(SequencingError::LengthMismatch {
            expected: 1,
            got: 0,
        });
    }
    let mut blocks = Vec::with_capacity(dialogue.len());
    for (i, u) in dialogue.attributed_utterances().iter().enumerate() {
        blocks.push(Block {
            utterance: check_content(u, i)?,
            commonsense: None,
        });
    }
    Ok(AugmentedSequence::from_blocks(blocks))
}

/// Recover `(utterances, inferences)` from cross-concatenated text.
pub fn parse_augmented(text: &str) -> Result<(Vec<String>, Vec<String>), SequencingError> {
    let mut utterances = Vec::new();
    let mut inferences = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut inside = false;
    for word in text.split_whitespace() {
        match word {
            OPEN_MARKER => {
                if inside || current.is_empty() {
                    return Err(SequencingError::UnbalancedMarkers);
                }
                utterances.push(current.join(" "));
                current.clear();
                inside = true;
            }
            CLOSE_MARKER => {
                if !inside {
                    return Err(SequencingError::StrayMarker);
                }
                if current.is_empty() {
                    return Err(SequencingError::UnbalancedMarkers);
                }
                inferences.push(current.join(" "));
                current.clear();
                inside = false;
            }
            w => current.push(w),
        }
    }
    if inside || !current.is_empty() {
        return Err(SequencingError::UnbalancedMarkers);
    }
    Ok((utterances, inferences))
}

/// A tokenized input fitted to the length budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FittedInput {
    /// `<s> block.. </s> <pad>..`, exactly `max_input_len` long.
    pub ids: Vec<TokenId>,
    pub segments: Vec<Segment>,
    pub kept_blocks: usize,
    /// Number of non-pad tokens.
    pub used: usize,
}

impl FittedInput {
    /// Ids and segments with padding removed.
    pub fn unpadded(&self) -> (&[TokenId], &[Segment]) {
        (&self.ids[..self.used], &self.segments[..self.used])
    }
}

fn encode_block<T: Tokenizer + ?Sized>(block: &Block, tokenizer: &T) -> (Vec<TokenId>, Vec<Segment>) {
    let specials = tokenizer.specials();
    let mut ids = tokenizer.encode(&block.utterance);
    let mut segs = vec![Segment::Dialogue; ids.len()];
    if let Some(cs) = &block.commonsense {
        ids.push(specials.open);
        segs.push(Segment::Marker);
        let c = tokenizer.encode(cs);
        segs.extend(std::iter::repeat_n(Segment::Commonsense, c.len()));
        ids.extend(c);
        ids.push(specials.close);
        segs.push(Segment::Marker);
    }
    (ids, segs)
}

/// Tokenize, keep the longest prefix of whole blocks that fits, and pad.
pub fn tokenize_and_fit<T: Tokenizer + ?Sized>(
    seq: &AugmentedSequence,
    tokenizer: &T,
    max_input_len: usize,
) -> Result<FittedInput, SequencingError> {
    let specials = tokenizer.specials();
    let mut ids = vec![specials.bos];
    let mut segments = vec![Segment::Special];
    let mut kept_blocks = 0;
    for (i, block) in seq.blocks.iter().enumerate() {
        let (block_ids, block_segs) = encode_block(block, tokenizer);
        let needed = ids.len() + block_ids.len() + 1;
        if needed > max_input_len {
            if i == 0 {
                return Err(SequencingError::BlockTooLarge {
                    needed,
                    budget: max_input_len,
                });
            }
            break;
        }
        ids.extend(block_ids);
        segments.extend(block_segs);
        kept_blocks += 1;
    }
    ids.push(specials.eos);
    segments.push(Segment::Special);
    let used = ids.len();
    ids.resize(max_input_len, specials.pad);
    segments.resize(max_input_len, Segment::Special);
    Ok(FittedInput {
        ids,
        segments,
        kept_blocks,
        used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_input_len: usize,
    pub max_output_len: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_input_len: DEFAULT_MAX_INPUT_LEN,
            max_output_len: DEFAULT_MAX_OUTPUT_LEN,
        }
    }
}

/// One `(X, Y, Z)` triple, tokenized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub input_ids: Vec<TokenId>,
    pub input_segments: Vec<Segment>,
    pub summary_ids: Vec<TokenId>,
    /// Empty when the example carries no commonsense target.
    pub commonsense_ids: Vec<TokenId>,
}

impl TrainingExample {
    /// Input ids with padding stripped.
    pub fn input(&self) -> &[TokenId] {
        let end = self
            .input_ids
            .iter()
            .rposition(|&t| t != SPECIALS.pad)
            .map_or(0, |p| p + 1);
        &self.input_ids[..end]
    }

    pub fn input_segments_unpadded(&self) -> &[Segment] {
        &self.input_segments[..self.input().len()]
    }
}

/// Human-readable view of a training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextExample {
    pub id: String,
    pub x: String,
    pub y: String,
    pub z: String,
}

/// Serialize the target inferences: each one sentence-terminated, in
/// summary-sentence order.
pub fn commonsense_target_text<S: AsRef<str>>(inferences: &[S]) -> String {
    inferences
        .iter()
        .map(|z| {
            let z = normalize_whitespace(z.as_ref());
            if z.ends_with(['.', '!', '?']) {
                z
            } else {
                format!("{z}.")
            }
        })
        .filter(|z| z != ".")
        .collect::<Vec<_>>()
        .join(" ")
}

/// Tokenize a target and terminate it with the end marker, within `max_len`.
pub fn encode_target<T: Tokenizer + ?Sized>(text: &str, tokenizer: &T, max_len: usize) -> Vec<TokenId> {
    let mut ids = tokenizer.encode(text);
    ids.truncate(max_len.saturating_sub(1));
    ids.push(tokenizer.specials().eos);
    ids
}

/// Assemble a training example. With `multitask` set the commonsense
/// target must be non-empty.
#[allow(clippy::too_many_arguments)]
pub fn build_training_example<T: Tokenizer + ?Sized>(
    dialogue: &Dialogue,
    input_commonsense: &[SelectedCommonsense],
    summary: &SummaryDoc,
    target_commonsense: &[SelectedCommonsense],
    tokenizer: &T,
    limits: Limits,
    multitask: bool,
) -> Result<(TrainingExample, TextExample), SequencingError> {
    let seq = cross_concatenate(dialogue, input_commonsense)?;
    if !target_commonsense.is_empty() && target_commonsense.len() != summary.sentences.len() {
        return Err(SequencingError::LengthMismatch {
            expected: summary.sentences.len(),
            got: target_commonsense.len(),
        });
    }
    let z_texts: Vec<&str> = target_commonsense
        .iter()
        .map(|s| s.chosen.text.as_str())
        .collect();
    let z = commonsense_target_text(&z_texts);
    if multitask && z.is_empty() {
        return Err(SequencingError::EmptyTarget);
    }
    let fitted = tokenize_and_fit(&seq, tokenizer, limits.max_input_len)?;
    let y = summary.normalized();
    let summary_ids = encode_target(&y, tokenizer, limits.max_output_len);
    let commonsense_ids = if z.is_empty() {
        Vec::new()
    } else {
        encode_target(&z, tokenizer, limits.max_output_len)
    };
    let example = TrainingExample {
        id: dialogue.id.clone(),
        input_ids: fitted.ids,
        input_segments: fitted.segments,
        summary_ids,
        commonsense_ids,
    };
    let text = TextExample {
        id: dialogue.id.clone(),
        x: seq.text,
        y,
        z,
    };
    Ok((example, text))
}
