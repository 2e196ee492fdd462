//! Per-layer encoder attention mass on each segment class.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::multitask::{ModelError, Seq2SeqBackend};
use crate::sequencing::{Segment, TokenId, SPECIALS};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("example {index}: {reason}")]
    ShapeMismatch { index: usize, reason: String },
    #[error("no examples to analyse")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Count `<I>`/`</I>` as commonsense instead of their own class.
    pub markers_as_commonsense: bool,
}

/// One input: token ids and their segment labels, same length. Pad
/// positions are dropped before analysis.
#[derive(Debug, Clone, Copy)]
pub struct AttentionInput<'a> {
    pub ids: &'a [TokenId],
    pub segments: &'a [Segment],
}

/// Mean attention mass per layer on each segment class, indexed
/// `[layer][Segment::index()]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    pub layers: usize,
    pub examples: usize,
    pub mass: Vec<[f64; 4]>,
}

impl AttentionProfile {
    pub fn commonsense(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m[Segment::Commonsense.index()]).collect()
    }

    /// Largest deviation of a layer's four masses from 1.
    pub fn conservation_error(&self) -> f64 {
        self.mass
            .iter()
            .map(|m| (m.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// CSV: `layer,dialogue_mass,commonsense_mass,marker_mass,special_mass`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "layer,dialogue_mass,commonsense_mass,marker_mass,special_mass")?;
        for (l, m) in self.mass.iter().enumerate() {
            writeln!(out, "{l},{},{},{},{}", m[0], m[1], m[2], m[3])?;
        }
        Ok(())
    }
}

fn example_profile<B: Seq2SeqBackend + ?Sized>(
    backend: &B,
    index: usize,
    input: &AttentionInput<'_>,
    options: AnalysisOptions,
) -> Result<Vec<[f64; 4]>, AnalysisError> {
    if input.ids.len() != input.segments.len() {
        return Err(AnalysisError::ShapeMismatch {
            index,
            reason: format!("{} ids but {} segment labels", input.ids.len(), input.segments.len()),
        });
    }
    let (ids, segments): (Vec<TokenId>, Vec<Segment>) = input
        .ids
        .iter()
        .zip(input.segments)
        .filter(|(&t, _)| t != SPECIALS.pad)
        .map(|(&t, &s)| {
            let s = if options.markers_as_commonsense && s == Segment::Marker {
                Segment::Commonsense
            } else {
                s
            };
            (t, s)
        })
        .unzip();
    let att = backend.encoder_attention(&ids)?;
    if att.len != ids.len() {
        return Err(AnalysisError::ShapeMismatch {
            index,
            reason: format!("attention over {} positions for {} tokens", att.len, ids.len()),
        });
    }
    let classes: Vec<usize> = segments.iter().map(|s| s.index()).collect();
    let mut out = Vec::with_capacity(att.layers);
    for layer in 0..att.layers {
        let mut per_query = [0.0; 4];
        for q in 0..att.len {
            let mut per_head = [0.0; 4];
            for head in 0..att.heads {
                for (k, &p) in att.row(layer, head, q).iter().enumerate() {
                    per_head[classes[k]] += p;
                }
            }
            for c in 0..4 {
                per_query[c] += per_head[c] / att.heads as f64;
            }
        }
        out.push(per_query.map(|v| v / att.len as f64));
    }
    Ok(out)
}

/// Mean over heads, then non-pad queries, then examples, of the attention
/// mass each query puts on keys of each segment class.
pub fn attention_commonsense_mass<B: Seq2SeqBackend + ?Sized>(
    backend: &B,
    inputs: &[AttentionInput<'_>],
    options: AnalysisOptions,
    exec: Exec,
) -> Result<AttentionProfile, AnalysisError> {
    if inputs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let indexed: Vec<(usize, AttentionInput<'_>)> = inputs.iter().copied().enumerate().collect();
    let per_example = exec.try_map(&indexed, |(i, input)| example_profile(backend, *i, input, options))?;
    let layers = per_example[0].len();
    if let Some(i) = per_example.iter().position(|p| p.len() != layers) {
        return Err(AnalysisError::ShapeMismatch {
            index: i,
            reason: "layer count differs between examples".into(),
        });
    }
    // Sorted summation keeps the result independent of example order.
    let mut mass = Vec::with_capacity(layers);
    for l in 0..layers {
        let mut layer = [0.0; 4];
        for (c, slot) in layer.iter_mut().enumerate() {
            let mut values: Vec<f64> = per_example.iter().map(|p| p[l][c]).collect();
            values.sort_by(f64::total_cmp);
            *slot = values.iter().sum::<f64>() / values.len() as f64;
        }
        mass.push(layer);
    }
    Ok(AttentionProfile {
        layers,
        examples: inputs.len(),
        mass,
    })
}
