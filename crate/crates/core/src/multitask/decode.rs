use serde::{Deserialize, Serialize};

use super::{DecoderHead, ModelError, Seq2SeqBackend};
use crate::sequencing::{TokenId, Tokenizer, DEFAULT_MAX_OUTPUT_LEN, SPECIALS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam: usize,
    /// Generated tokens allowed, end marker included.
    pub max_output_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 20,
            max_output_len: DEFAULT_MAX_OUTPUT_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    /// Generated ids without the end marker.
    pub ids: Vec<TokenId>,
    pub text: String,
    /// No end marker was produced within the budget; `ids` is truncated.
    pub overflowed: bool,
}

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<TokenId>,
    score: f64,
}

impl Hypothesis {
    fn normalized(&self, extra: usize) -> f64 {
        self.score / (self.tokens.len() + extra).max(1) as f64
    }
}

/// Beam search through the summary decoder only. Hypotheses are ranked by
/// summed log-probability while searching; finished ones are compared by
/// per-token average.
pub fn summarize<B: Seq2SeqBackend + ?Sized>(
    backend: &B,
    input: &[TokenId],
    config: DecodeConfig,
) -> Result<(Vec<TokenId>, bool), ModelError> {
    if config.beam == 0 || config.max_output_len == 0 {
        return Err(ModelError::InvalidConfig("beam and max_output_len must be positive".into()));
    }
    let encoded = backend.encode(input)?;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..config.max_output_len {
        // (score, hypothesis index, token)
        let mut expansions: Vec<(f64, usize, TokenId)> = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            let mut prefix = Vec::with_capacity(hyp.tokens.len() + 1);
            prefix.push(SPECIALS.bos);
            prefix.extend_from_slice(&hyp.tokens);
            let logprobs = backend.next_token_logprobs(DecoderHead::Summary, &encoded, &prefix)?;
            let mut ranked: Vec<(f64, TokenId)> = logprobs
                .iter()
                .enumerate()
                .filter(|&(t, lp)| t as TokenId != SPECIALS.pad && t as TokenId != SPECIALS.bos && lp.is_finite())
                .map(|(t, &lp)| (hyp.score + lp, t as TokenId))
                .collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            expansions.extend(ranked.into_iter().take(config.beam).map(|(s, t)| (s, h, t)));
        }
        expansions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut next = Vec::with_capacity(config.beam);
        for (score, h, token) in expansions {
            if next.len() == config.beam {
                break;
            }
            if token == SPECIALS.eos {
                finished.push(Hypothesis {
                    tokens: live[h].tokens.clone(),
                    score,
                });
            } else {
                let mut tokens = live[h].tokens.clone();
                tokens.push(token);
                next.push(Hypothesis { tokens, score });
            }
        }
        live = next;
        if finished.len() >= config.beam || live.is_empty() {
            break;
        }
    }

    let best_of = |hyps: &[Hypothesis], extra: usize| {
        hyps.iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.normalized(extra).total_cmp(&b.normalized(extra)).then(j.cmp(i)))
            .map(|(_, h)| h.tokens.clone())
    };
    if let Some(tokens) = best_of(&finished, 1) {
        return Ok((tokens, false));
    }
    Ok((best_of(&live, 0).unwrap_or_default(), true))
}

/// [`summarize`] followed by detokenization.
pub fn summarize_text<B: Seq2SeqBackend + ?Sized, T: Tokenizer + ?Sized>(
    backend: &B,
    tokenizer: &T,
    input: &[TokenId],
    config: DecodeConfig,
) -> Result<Decoded, ModelError> {
    let (ids, overflowed) = summarize(backend, input, config)?;
    let text = tokenizer.decode(&ids);
    Ok(Decoded { ids, text, overflowed })
}
