//! Word-piece tokenizer with atomic segment markers.
//!
//! Every whitespace-separated word is split into alphanumeric runs and single
//! punctuation characters. The first piece of a word carries a `▁` prefix so
//! decoding can restore the original spacing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub type TokenId = u32;

pub const OPEN_MARKER: &str = "<I>";
pub const CLOSE_MARKER: &str = "</I>";
const WORD_START: char = '\u{2581}';

/// Reserved ids; identical for every tokenizer in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub pad: TokenId,
    pub bos: TokenId,
    pub eos: TokenId,
    pub unk: TokenId,
    pub open: TokenId,
    pub close: TokenId,
}

pub const SPECIALS: SpecialTokens = SpecialTokens {
    pad: 0,
    bos: 1,
    eos: 2,
    unk: 3,
    open: 4,
    close: 5,
};

const SPECIAL_PIECES: [&str; 6] = ["<pad>", "<s>", "</s>", "<unk>", OPEN_MARKER, CLOSE_MARKER];

pub trait Tokenizer: Send + Sync {
    /// Surface pieces, before vocabulary lookup.
    fn pieces(&self, text: &str) -> Vec<String>;

    fn count_tokens(&self, text: &str) -> usize {
        self.pieces(text).len()
    }

    fn encode(&self, text: &str) -> Vec<TokenId>;

    /// Inverse of [`Tokenizer::encode`]; pad, begin and end ids are dropped.
    fn decode(&self, ids: &[TokenId]) -> String;

    fn specials(&self) -> SpecialTokens {
        SPECIALS
    }

    fn vocab_size(&self) -> usize;
}

/// Piece inventory. Ids 0..6 are the reserved specials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    pieces: Vec<String>,
    index: BTreeMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    pieces: Vec<String>,
}

impl From<VocabFile> for Vocab {
    fn from(file: VocabFile) -> Self {
        Vocab::from_pieces(file.pieces)
    }
}

impl From<Vocab> for VocabFile {
    fn from(vocab: Vocab) -> Self {
        VocabFile {
            pieces: vocab.pieces,
        }
    }
}

impl Vocab {
    pub fn from_pieces(mut pieces: Vec<String>) -> Self {
        for (i, special) in SPECIAL_PIECES.iter().enumerate() {
            if pieces.get(i).map(String::as_str) != Some(*special) {
                pieces.retain(|p| p != special);
                pieces.insert(i, special.to_string());
            }
        }
        let index = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i as TokenId))
            .collect();
        Vocab { pieces, index }
    }

    /// Most frequent pieces first (ties by piece text), capped so the whole
    /// vocabulary including specials has at most `max_size` entries.
    pub fn build<'a, I>(texts: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for piece in split_pieces(text) {
                if !SPECIAL_PIECES.contains(&piece.as_str()) {
                    *counts.entry(piece).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = max_size.saturating_sub(SPECIAL_PIECES.len());
        let pieces = SPECIAL_PIECES
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(room).map(|(p, _)| p))
            .collect();
        Vocab::from_pieces(pieces)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<TokenId> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: TokenId) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }
}

fn split_pieces(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        if word == OPEN_MARKER || word == CLOSE_MARKER {
            out.push(word.to_string());
            continue;
        }
        let mut first = true;
        let mut run = String::new();
        let flush = |run: &mut String, first: &mut bool, out: &mut Vec<String>| {
            if run.is_empty() {
                return;
            }
            let piece = if *first {
                format!("{WORD_START}{run}")
            } else {
                run.clone()
            };
            out.push(piece);
            run.clear();
            *first = false;
        };
        for c in word.chars() {
            if c.is_alphanumeric() {
                run.push(c);
            } else {
                flush(&mut run, &mut first, &mut out);
                run.push(c);
                flush(&mut run, &mut first, &mut out);
            }
        }
        flush(&mut run, &mut first, &mut out);
    }
    out
}

/// The pipeline tokenizer. Without a vocabulary it only counts pieces.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    vocab: Option<Vocab>,
}

impl WordTokenizer {
    pub fn new(vocab: Vocab) -> Self {
        WordTokenizer { vocab: Some(vocab) }
    }

    pub fn counting() -> Self {
        WordTokenizer { vocab: None }
    }

    pub fn vocab(&self) -> Option<&Vocab> {
        self.vocab.as_ref()
    }
}

impl Tokenizer for WordTokenizer {
    fn pieces(&self, text: &str) -> Vec<String> {
        split_pieces(text)
    }

    fn encode(&self, text: &str) -> Vec<TokenId> {
        split_pieces(text)
            .iter()
            .map(|p| {
                self.vocab
                    .as_ref()
                    .and_then(|v| v.id(p))
                    .unwrap_or(SPECIALS.unk)
            })
            .collect()
    }

    fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == SPECIALS.pad || id == SPECIALS.bos || id == SPECIALS.eos {
                continue;
            }
            let piece = self
                .vocab
                .as_ref()
                .and_then(|v| v.piece(id))
                .unwrap_or("<unk>");
            if SPECIAL_PIECES.contains(&piece) {
                out.push(' ');
                out.push_str(piece);
            } else if let Some(rest) = piece.strip_prefix(WORD_START) {
                out.push(' ');
                out.push_str(rest);
            } else {
                out.push_str(piece);
            }
        }
        out.trim_start().to_string()
    }

    fn vocab_size(&self) -> usize {
        self.vocab.as_ref().map_or(SPECIAL_PIECES.len(), Vocab::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pieces_mark_word_starts() {
        assert_eq!(
            split_pieces("A : hi. <I> I'll </I>"),
            vec!["▁A", "▁:", "▁hi", ".", "<I>", "▁I", "'", "ll", "</I>"]
        );
    }

    #[test]
    fn markers_are_single_tokens() {
        let vocab = Vocab::build(["hello there"], 64);
        let tok = WordTokenizer::new(vocab);
        let ids = tok.encode("hello <I> there </I>");
        assert_eq!(ids.len(), 4);
        assert_eq!(ids[1], SPECIALS.open);
        assert_eq!(ids[3], SPECIALS.close);
        assert_eq!(tok.decode(&ids), "hello <I> there </I>");
    }

    #[test]
    fn vocab_cap_and_unknowns() {
        let vocab = Vocab::build(["a a a b b c"], 8);
        assert_eq!(vocab.len(), 8);
        assert!(vocab.id("▁a").is_some() && vocab.id("▁b").is_some());
        assert!(vocab.id("▁c").is_none());
        let tok = WordTokenizer::new(vocab);
        assert_eq!(tok.encode("c"), vec![SPECIALS.unk]);
    }

    #[test]
    fn vocab_serde_roundtrip() {
        let vocab = Vocab::build(["x y z"], 32);
        let json = serde_json::to_string(&vocab).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vocab);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode_on_in_vocab_text(words in prop::collection::vec("[a-zA-Z0-9]{1,6}[.,!?']?", 1..20)) {
            let text = words.join(" ");
            let tok = WordTokenizer::new(Vocab::build([text.as_str()], 10_000));
            prop_assert_eq!(tok.decode(&tok.encode(&text)), text);
        }
    }
}
