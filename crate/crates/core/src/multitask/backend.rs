//! The sequence-to-sequence backend contract and a deterministic mock.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use super::ModelError;
use crate::sequencing::{TokenId, SPECIALS};

/// Which decoder head to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderHead {
    Summary,
    Commonsense,
}

/// Encoder output for one input, reusable across decoding steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub input: Vec<TokenId>,
    pub hidden: Option<Matrix>,
}

/// Encoder self-attention probabilities, `layers x heads x queries x keys`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTensor {
    pub layers: usize,
    pub heads: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl AttentionTensor {
    pub fn zeros(layers: usize, heads: usize, len: usize) -> Self {
        AttentionTensor {
            layers,
            heads,
            len,
            data: vec![0.0; layers * heads * len * len],
        }
    }

    #[inline]
    pub fn at(&self, layer: usize, head: usize, query: usize, key: usize) -> f64 {
        self.data[((layer * self.heads + head) * self.len + query) * self.len + key]
    }

    /// The key-axis distribution of one query.
    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[f64] {
        let start = ((layer * self.heads + head) * self.len + query) * self.len;
        &self.data[start..start + self.len]
    }

    pub fn set_head(&mut self, layer: usize, head: usize, probs: &Matrix) {
        assert_eq!(probs.shape(), (self.len, self.len), "attention head shape");
        let start = (layer * self.heads + head) * self.len * self.len;
        self.data[start..start + self.len * self.len].copy_from_slice(&probs.data);
    }

    /// Largest deviation of any key-axis sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        self.data
            .chunks(self.len.max(1))
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// A shared encoder with two decoder heads.
pub trait Seq2SeqBackend: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn encode(&self, input: &[TokenId]) -> Result<EncoderState, ModelError>;

    /// Log-probabilities over the vocabulary for the token following
    /// `prefix` (which starts with the begin marker).
    fn next_token_logprobs(
        &self,
        head: DecoderHead,
        encoded: &EncoderState,
        prefix: &[TokenId],
    ) -> Result<Vec<f64>, ModelError>;

    fn encoder_attention(&self, input: &[TokenId]) -> Result<AttentionTensor, ModelError>;

    /// How many times `head` has been run since construction.
    fn decoder_invocations(&self, head: DecoderHead) -> usize;

    /// Stable identity of the weights, for run manifests.
    fn fingerprint(&self) -> String;
}

#[derive(Debug, Default)]
pub(crate) struct HeadCounters {
    summary: AtomicUsize,
    commonsense: AtomicUsize,
}

impl HeadCounters {
    pub fn bump(&self, head: DecoderHead) {
        match head {
            DecoderHead::Summary => self.summary.fetch_add(1, Ordering::SeqCst),
            DecoderHead::Commonsense => self.commonsense.fetch_add(1, Ordering::SeqCst),
        };
    }

    pub fn get(&self, head: DecoderHead) -> usize {
        match head {
            DecoderHead::Summary => self.summary.load(Ordering::SeqCst),
            DecoderHead::Commonsense => self.commonsense.load(Ordering::SeqCst),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockBehavior {
    /// Always produce this token sequence, then the end marker.
    Fixed(Vec<TokenId>),
    /// Copy the input's content tokens (markers and specials skipped), at
    /// most `limit` of them, then the end marker.
    Echo { limit: usize },
}

/// Backend whose next-token distribution puts all but `1e-6` of its mass on
/// one scripted token.
#[derive(Debug)]
pub struct MockSeq2Seq {
    behavior: MockBehavior,
    vocab_size: usize,
    counters: HeadCounters,
}

impl MockSeq2Seq {
    const LEAK: f64 = 1e-6;

    pub fn new(behavior: MockBehavior, vocab_size: usize) -> Self {
        assert!(vocab_size > 6, "vocabulary must hold the reserved ids");
        MockSeq2Seq {
            behavior,
            vocab_size,
            counters: HeadCounters::default(),
        }
    }

    fn script(&self, input: &[TokenId]) -> Vec<TokenId> {
        match &self.behavior {
            MockBehavior::Fixed(tokens) => tokens.clone(),
            MockBehavior::Echo { limit } => input
                .iter()
                .copied()
                .filter(|&t| {
                    t != SPECIALS.pad
                        && t != SPECIALS.bos
                        && t != SPECIALS.eos
                        && t != SPECIALS.open
                        && t != SPECIALS.close
                })
                .take(*limit)
                .collect(),
        }
    }
}

impl Seq2SeqBackend for MockSeq2Seq {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn encode(&self, input: &[TokenId]) -> Result<EncoderState, ModelError> {
        Ok(EncoderState {
            input: input.to_vec(),
            hidden: None,
        })
    }

    fn next_token_logprobs(
        &self,
        head: DecoderHead,
        encoded: &EncoderState,
        prefix: &[TokenId],
    ) -> Result<Vec<f64>, ModelError> {
        self.counters.bump(head);
        let script = self.script(&encoded.input);
        let position = prefix.len().saturating_sub(1);
        let next = script.get(position).copied().unwrap_or(SPECIALS.eos) as usize;
        if next >= self.vocab_size {
            return Err(ModelError::TokenOutOfRange(next as TokenId));
        }
        let rest = (Self::LEAK / (self.vocab_size - 1) as f64).ln();
        let mut out = vec![rest; self.vocab_size];
        out[next] = (1.0 - Self::LEAK).ln();
        Ok(out)
    }

    fn encoder_attention(&self, input: &[TokenId]) -> Result<AttentionTensor, ModelError> {
        let n = input.len();
        let mut t = AttentionTensor::zeros(1, 1, n);
        t.data.iter_mut().for_each(|v| *v = 1.0 / n as f64);
        Ok(t)
    }

    fn decoder_invocations(&self, head: DecoderHead) -> usize {
        self.counters.get(head)
    }

    fn fingerprint(&self) -> String {
        format!("mock:{:?}:{}", self.behavior, self.vocab_size)
    }
}
