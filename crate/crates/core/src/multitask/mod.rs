//! Shared-encoder, dual-decoder training and summary-only inference.

pub mod autodiff;
pub mod backend;
mod decode;
pub mod tensor;
pub mod tiny;
mod train;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sequencing::{TokenId, SPECIALS};

pub use backend::{AttentionTensor, DecoderHead, EncoderState, MockBehavior, MockSeq2Seq, Seq2SeqBackend};
pub use decode::{summarize, summarize_text, DecodeConfig, Decoded};
pub use tiny::{ExampleNll, TinyConfig, TinyTransformer};
pub use train::{learning_rate_at, train, Adam, TrainOutcome, TrainableBackend};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("target token at position {position} has probability 0")]
    ZeroProbabilityTarget { position: usize },
    #[error("lambda {0} is outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("sequence of {len} tokens exceeds the limit of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {0} is outside the vocabulary")]
    TokenOutOfRange(TokenId),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("example {0} has no commonsense target")]
    EmptyTarget(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Token-mean negative log-likelihood of `targets` under per-position
/// probability distributions. Pad targets are skipped.
pub fn sequence_nll(distributions: &[Vec<f64>], targets: &[TokenId]) -> Result<f64, ModelError> {
    if targets.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if distributions.len() != targets.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} distributions for {} targets",
            distributions.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (position, (dist, &t)) in distributions.iter().zip(targets).enumerate() {
        if t == SPECIALS.pad {
            continue;
        }
        let p = *dist.get(t as usize).ok_or(ModelError::TokenOutOfRange(t))?;
        if p <= 0.0 {
            return Err(ModelError::ZeroProbabilityTarget { position });
        }
        total -= p.ln();
        count += 1;
    }
    if count == 0 {
        return Err(ModelError::EmptySequence);
    }
    Ok(total / count as f64)
}

pub fn combine_losses(l_ds: f64, l_cs: f64, lambda: f64) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ModelError::LambdaOutOfRange(lambda));
    }
    Ok(lambda * l_ds + (1.0 - lambda) * l_cs)
}

/// One optimizer step's losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub step: usize,
    pub epoch: usize,
    pub l_ds: f64,
    pub l_cs: f64,
    pub l_total: f64,
    pub lambda: f64,
    pub lr: f64,
}

/// Write the loss log as CSV (`step,l_ds,l_cs,l_total,lr`).
pub fn write_loss_log<W: std::io::Write>(log: &[LossBreakdown], mut out: W) -> std::io::Result<()> {
    writeln!(out, "step,l_ds,l_cs,l_total,lr")?;
    for r in log {
        writeln!(out, "{},{},{},{},{}", r.step, r.l_ds, r.l_cs, r.l_total, r.lr)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    /// Summary decoder only.
    #[serde(rename = "sick")]
    Sick,
    /// Summary decoder plus commonsense supervision.
    #[default]
    #[serde(rename = "sick++")]
    SickPlusPlus,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sick" => Ok(Mode::Sick),
            "sick++" => Ok(Mode::SickPlusPlus),
            other => Err(format!("unknown mode `{other}` (expected sick or sick++)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sick => "sick",
            Mode::SickPlusPlus => "sick++",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub epochs: usize,
    /// Beam size for evaluation decoding.
    pub beam: usize,
    pub seed: u64,
    pub mode: Mode,
    pub adam: AdamConfig,
    /// Examples per gradient work item; fixed so that results do not depend
    /// on the thread count.
    pub grad_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.66,
            learning_rate: 3e-6,
            batch_size: 32,
            warmup_steps: 600,
            epochs: 20,
            beam: 20,
            seed: 0,
            mode: Mode::SickPlusPlus,
            adam: AdamConfig::default(),
            grad_chunk: 4,
        }
    }
}

impl TrainConfig {
    /// The weight actually applied to the summary loss: SICK forces 1.
    pub fn effective_lambda(&self) -> f64 {
        match self.mode {
            Mode::Sick => 1.0,
            Mode::SickPlusPlus => self.lambda,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ModelError::LambdaOutOfRange(self.lambda));
        }
        if self.batch_size == 0 || self.grad_chunk == 0 || self.beam == 0 {
            return Err(ModelError::InvalidConfig(
                "batch_size, grad_chunk and beam must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(ModelError::InvalidConfig("learning_rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}
