//! Commonsense-augmented dialogue summarization.
//!
//! The pipeline generates commonsense inferences for each utterance,
//! selects one per utterance, interleaves them with the dialogue, and trains
//! a shared-encoder model with a summary decoder and an auxiliary
//! commonsense decoder. Only the summary decoder runs at inference.

pub mod analysis;
pub mod corpus;
pub mod evaluation;
pub mod exec;
pub mod knowledge;
pub mod multitask;
pub mod pipeline;
pub mod selection;
pub mod sequencing;
pub mod service;
pub mod text;
pub mod toy;

pub use exec::Exec;
