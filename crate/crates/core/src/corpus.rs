//! Dialogue-summarization corpora: loading, validation, sentence splitting
//! and dataset statistics.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::sequencing::Tokenizer;
use crate::text::normalize_whitespace;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    FileMissing(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("record {record}: field `{field}` {reason}")]
    SchemaViolation {
        record: String,
        field: String,
        reason: String,
    },
    #[error("duplicate dialogue id `{0}`")]
    DuplicateId(String),
    #[error("unknown corpus schema `{0}`")]
    UnknownSchema(String),
    #[error("summary is empty after whitespace normalization")]
    EmptySummary,
    #[error("corpus has no examples")]
    EmptyCorpus,
}

fn violation(record: &str, field: &str, reason: &str) -> CorpusError {
    CorpusError::SchemaViolation {
        record: record.to_string(),
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

/// One speaker turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    pub speaker: String,
    pub text: String,
}

impl Utterance {
    /// The speaker-attributed surface form `Name : text` fed to every
    /// downstream model.
    pub fn attributed(&self) -> String {
        format!("{} : {}", self.speaker, self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    /// Build a dialogue from `(speaker, text)` turns, normalizing whitespace
    /// and assigning contiguous indices.
    pub fn new<S: Into<String>>(id: S, turns: &[(&str, &str)]) -> Result<Self, CorpusError> {
        let id = id.into();
        let owned: Vec<(String, String)> = turns
            .iter()
            .map(|(s, t)| (s.to_string(), t.to_string()))
            .collect();
        Self::from_turns(&id, owned)
    }

    fn from_turns(id: &str, turns: Vec<(String, String)>) -> Result<Self, CorpusError> {
        if turns.is_empty() {
            return Err(violation(id, "dialogue", "has no turns"));
        }
        let mut utterances = Vec::with_capacity(turns.len());
        for (index, (speaker, text)) in turns.into_iter().enumerate() {
            let speaker = normalize_whitespace(&speaker);
            let text = normalize_whitespace(&text);
            if speaker.is_empty() {
                return Err(violation(id, &format!("dialogue[{index}].speaker"), "is empty"));
            }
            if text.is_empty() {
                return Err(violation(id, &format!("dialogue[{index}].text"), "is empty"));
            }
            utterances.push(Utterance {
                index,
                speaker,
                text,
            });
        }
        Ok(Dialogue {
            id: id.to_string(),
            utterances,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn attributed_utterances(&self) -> Vec<String> {
        self.utterances.iter().map(Utterance::attributed).collect()
    }

    pub fn speaker_count(&self) -> usize {
        self.utterances
            .iter()
            .map(|u| u.speaker.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// A reference summary and its sentence segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub sentences: Vec<String>,
    pub raw: String,
}

impl SummaryDoc {
    pub fn normalized(&self) -> String {
        normalize_whitespace(&self.raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    /// Guess the split from a file name (`train`, `dev`/`val`, `test`).
    pub fn from_path(path: &Path) -> Split {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if stem.contains("test") {
            Split::Test
        } else if stem.contains("dev") || stem.contains("val") {
            Split::Dev
        } else {
            Split::Train
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub dialogue: Dialogue,
    pub summary: SummaryDoc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub split: Split,
    pub examples: Vec<Example>,
}

impl Corpus {
    /// Assemble a corpus, rejecting duplicate dialogue ids.
    pub fn new(name: &str, split: Split, examples: Vec<Example>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for ex in &examples {
            if !seen.insert(ex.dialogue.id.as_str()) {
                return Err(CorpusError::DuplicateId(ex.dialogue.id.clone()));
            }
        }
        Ok(Corpus {
            name: name.to_string(),
            split,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.dialogue.id == id)
    }
}

/// On-disk corpus formats understood by [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// `{"id": str, "dialogue": [{"speaker": str, "text": str}], "summary": str}` per line.
    JsonlV1,
}

impl std::str::FromStr for Schema {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl-v1" => Ok(Schema::JsonlV1),
            other => Err(CorpusError::UnknownSchema(other.to_string())),
        }
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    dialogue: Vec<TurnOut<'a>>,
    summary: &'a str,
}

#[derive(Serialize)]
struct TurnOut<'a> {
    speaker: &'a str,
    text: &'a str,
}

/// Load and validate a corpus file.
pub fn load_corpus(path: &Path, schema: Schema) -> Result<Corpus, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::FileMissing(path.to_path_buf()));
    }
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let Schema::JsonlV1 = schema;
    let mut examples = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        examples.push(parse_record(&line, lineno + 1)?);
    }
    Corpus::new(&name, Split::from_path(path), examples)
}

/// Parse one `jsonl-v1` record. `lineno` labels records whose id is unusable.
pub fn parse_record(line: &str, lineno: usize) -> Result<Example, CorpusError> {
    let fallback = format!("line {lineno}");
    let value: Value = serde_json::from_str(line)
        .map_err(|e| violation(&fallback, "<record>", &format!("is not valid JSON ({e})")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| violation(&fallback, "<record>", "is not an object"))?;
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(violation(&fallback, "id", "must be a non-empty string")),
        None => return Err(violation(&fallback, "id", "is missing")),
    };
    let turns = match obj.get("dialogue") {
        Some(Value::Array(turns)) => turns,
        Some(_) => return Err(violation(&id, "dialogue", "must be an array")),
        None => return Err(violation(&id, "dialogue", "is missing")),
    };
    let mut pairs = Vec::with_capacity(turns.len());
    for (i, turn) in turns.iter().enumerate() {
        let speaker = turn.get("speaker").and_then(Value::as_str);
        let text = turn.get("text").and_then(Value::as_str);
        match (speaker, text) {
            (Some(s), Some(t)) => pairs.push((s.to_string(), t.to_string())),
            (None, _) => {
                return Err(violation(&id, &format!("dialogue[{i}].speaker"), "is missing"))
            }
            (_, None) => return Err(violation(&id, &format!("dialogue[{i}].text"), "is missing")),
        }
    }
    let dialogue = Dialogue::from_turns(&id, pairs)?;
    let summary = match obj.get("summary") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(violation(&id, "summary", "must be a string")),
        None => return Err(violation(&id, "summary", "is missing")),
    };
    let summary = split_summary_sentences(summary).map_err(|_| violation(&id, "summary", "is empty"))?;
    Ok(Example { dialogue, summary })
}

/// Serialize a corpus to `jsonl-v1`.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> io::Result<()> {
    for ex in &corpus.examples {
        let record = RecordOut {
            id: &ex.dialogue.id,
            dialogue: ex
                .dialogue
                .utterances
                .iter()
                .map(|u| TurnOut {
                    speaker: &u.speaker,
                    text: &u.text,
                })
                .collect(),
            summary: &ex.summary.raw,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "inc", "ltd",
    "co", "mt", "no", "approx", "dept", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opening_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201c}' | '\u{2018}')
}

/// Segment a summary into sentences.
///
/// A boundary is a run of `.`/`!`/`?` (plus closing quotes or brackets)
/// followed by whitespace and an uppercase letter or opening quote. A period
/// ending a known abbreviation never closes a sentence.
pub fn split_summary_sentences(raw: &str) -> Result<SummaryDoc, CorpusError> {
    let text = normalize_whitespace(raw);
    if text.is_empty() {
        return Err(CorpusError::EmptySummary);
    }
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let first_terminal = i;
        let mut j = i;
        while j + 1 < chars.len() && (is_terminal(chars[j + 1].1) || is_closer(chars[j + 1].1)) {
            j += 1;
        }
        // j is the last char of the punctuation run.
        let boundary = j + 2 < chars.len()
            && chars[j + 1].1 == ' '
            && (chars[j + 2].1.is_uppercase() || is_opening_quote(chars[j + 2].1))
            && !(c == '.' && j == first_terminal && ends_with_abbreviation(&text, start, chars[i].0));
        if boundary {
            let end = chars[j + 1].0;
            sentences.push(text[start..end].to_string());
            start = chars[j + 2].0;
            i = j + 2;
        } else {
            i = j + 1;
        }
    }
    sentences.push(text[start..].to_string());
    Ok(SummaryDoc {
        sentences,
        raw: raw.to_string(),
    })
}

fn ends_with_abbreviation(text: &str, sentence_start: usize, period_at: usize) -> bool {
    let head = &text[sentence_start..period_at];
    let word = head.rsplit(' ').next().unwrap_or("");
    let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Table-style dataset statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub example_count: usize,
    pub mean_tokens_per_dialogue: f64,
    pub mean_tokens_per_summary: f64,
    pub mean_turns: f64,
    pub mean_speakers: f64,
    /// Mean over examples of summary tokens / dialogue tokens.
    pub compression_rate: f64,
}

/// Per-example averages; dialogue length counts the speaker-attributed turns.
pub fn corpus_stats<T: Tokenizer + ?Sized>(
    corpus: &Corpus,
    tokenizer: &T,
) -> Result<StatsReport, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut dialogue_tokens = 0.0;
    let mut summary_tokens = 0.0;
    let mut turns = 0.0;
    let mut speakers = 0.0;
    let mut ratio = 0.0;
    for ex in &corpus.examples {
        let d: usize = ex
            .dialogue
            .utterances
            .iter()
            .map(|u| tokenizer.count_tokens(&u.attributed()))
            .sum();
        let s = tokenizer.count_tokens(&ex.summary.normalized());
        dialogue_tokens += d as f64;
        summary_tokens += s as f64;
        turns += ex.dialogue.len() as f64;
        speakers += ex.dialogue.speaker_count() as f64;
        ratio += s as f64 / d as f64;
    }
    let n = corpus.len() as f64;
    Ok(StatsReport {
        example_count: corpus.len(),
        mean_tokens_per_dialogue: dialogue_tokens / n,
        mean_tokens_per_summary: summary_tokens / n,
        mean_turns: turns / n,
        mean_speakers: speakers / n,
        compression_rate: ratio / n,
    })
}

/// Converters from the native release formats of public dialogue
/// summarization datasets into `jsonl-v1` examples.
pub mod adapters {
    use super::*;

    /// Outcome of converting a native file: usable examples plus the ids of
    /// records that failed validation.
    #[derive(Debug, Default)]
    pub struct Converted {
        pub examples: Vec<Example>,
        pub rejected: Vec<(String, String)>,
    }

    fn split_turns(block: &str, separator: char) -> Vec<(String, String)> {
        let mut turns: Vec<(String, String)> = Vec::new();
        for line in block.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match speaker_prefix(line, separator) {
                Some((speaker, text)) => turns.push((speaker.to_string(), text.to_string())),
                None => match turns.last_mut() {
                    Some(last) => {
                        last.1.push(' ');
                        last.1.push_str(line);
                    }
                    None => turns.push(("unknown".to_string(), line.to_string())),
                },
            }
        }
        turns
    }

    /// `Speaker: text` where the speaker is at most three words.
    fn speaker_prefix(line: &str, separator: char) -> Option<(&str, &str)> {
        let (speaker, text) = line.split_once(separator)?;
        let speaker = speaker.trim();
        if speaker.is_empty() || speaker.split_whitespace().count() > 3 {
            return None;
        }
        Some((speaker, text.trim()))
    }

    fn convert(id: String, dialogue: &str, summary: &str, out: &mut Converted) {
        let turns = split_turns(dialogue, ':');
        let result = Dialogue::from_turns(&id, turns).and_then(|d| {
            split_summary_sentences(summary)
                .map(|s| Example {
                    dialogue: d,
                    summary: s,
                })
                .map_err(|_| violation(&id, "summary", "is empty"))
        });
        match result {
            Ok(ex) => out.examples.push(ex),
            Err(e) => out.rejected.push((id, e.to_string())),
        }
    }

    /// SAMSum release: a JSON array of `{id, summary, dialogue}` where the
    /// dialogue is newline-separated `Speaker: text` lines.
    pub fn samsum(raw: &str) -> Result<Converted, CorpusError> {
        let records: Vec<Value> = serde_json::from_str(raw)
            .map_err(|e| violation("<file>", "<root>", &format!("is not a JSON array ({e})")))?;
        let mut out = Converted::default();
        for (i, rec) in records.iter().enumerate() {
            let id = match rec.get("id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => format!("record {i}"),
            };
            let dialogue = rec.get("dialogue").and_then(Value::as_str).unwrap_or("");
            let summary = rec.get("summary").and_then(Value::as_str).unwrap_or("");
            convert(id, dialogue, summary, &mut out);
        }
        Ok(out)
    }

    /// DialogSum release: JSONL of `{fname, dialogue, summary}` with
    /// `#Person1#: text` lines. Test files carry `summary1..3`; the first
    /// reference is used.
    pub fn dialogsum(raw: &str) -> Result<Converted, CorpusError> {
        let mut out = Converted::default();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Value = serde_json::from_str(line).map_err(|e| {
                violation(&format!("line {}", i + 1), "<record>", &format!("is not valid JSON ({e})"))
            })?;
            let id = rec
                .get("fname")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("line {}", i + 1));
            let dialogue = rec.get("dialogue").and_then(Value::as_str).unwrap_or("");
            let summary = rec
                .get("summary")
                .or_else(|| rec.get("summary1"))
                .and_then(Value::as_str)
                .unwrap_or("");
            convert(id, dialogue, summary, &mut out);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequencing::WordTokenizer;

    const GOOD: &str = r#"{"id": "d1", "dialogue": [{"speaker": "Amanda", "text": "I baked  cookies."}, {"speaker": "Jerry", "text": "Sure!"}], "summary": "Amanda baked cookies."}"#;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_single_record() {
        let f = write_tmp(GOOD);
        let corpus = load_corpus(f.path(), Schema::JsonlV1).unwrap();
        assert_eq!(corpus.len(), 1);
        let d = &corpus.examples[0].dialogue;
        assert_eq!(d.utterances[0].text, "I baked cookies.");
        assert_eq!(d.utterances[1].index, 1);
    }

    #[test]
    fn missing_summary_is_a_schema_violation() {
        let f = write_tmp(r#"{"id": "x9", "dialogue": [{"speaker": "A", "text": "hi"}]}"#);
        match load_corpus(f.path(), Schema::JsonlV1) {
            Err(CorpusError::SchemaViolation { record, field, .. }) => {
                assert_eq!(record, "x9");
                assert_eq!(field, "summary");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_missing_files_rejected() {
        let f = write_tmp(&format!("{GOOD}\n{GOOD}\n"));
        assert!(matches!(
            load_corpus(f.path(), Schema::JsonlV1),
            Err(CorpusError::DuplicateId(id)) if id == "d1"
        ));
        assert!(matches!(
            load_corpus(Path::new("/nonexistent/x.jsonl"), Schema::JsonlV1),
            Err(CorpusError::FileMissing(_))
        ));
        assert!("csv".parse::<Schema>().is_err());
    }

    #[test]
    fn empty_turn_text_rejected() {
        let err = parse_record(r#"{"id": "e", "dialogue": [{"speaker": "A", "text": "  "}], "summary": "s"}"#, 1)
            .unwrap_err();
        assert!(matches!(err, CorpusError::SchemaViolation { ref field, .. } if field == "dialogue[0].text"));
        let err = parse_record(r#"{"id": "e", "dialogue": [], "summary": "s"}"#, 1).unwrap_err();
        assert!(matches!(err, CorpusError::SchemaViolation { .. }));
    }

    #[test]
    fn write_then_load_is_identity() {
        let f = write_tmp(GOOD);
        let corpus = load_corpus(f.path(), Schema::JsonlV1).unwrap();
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let g = write_tmp(std::str::from_utf8(&buf).unwrap());
        let again = load_corpus(g.path(), Schema::JsonlV1).unwrap();
        assert_eq!(corpus.examples, again.examples);
    }

    #[test]
    fn sentence_splitting_basics() {
        assert_eq!(split_summary_sentences("A meets B.").unwrap().sentences.len(), 1);
        assert_eq!(
            split_summary_sentences("A meets B. They talk.").unwrap().sentences,
            vec!["A meets B.", "They talk."]
        );
        assert_eq!(
            split_summary_sentences("Mr. Smith is late! Is he ok? \"Yes\" said Tom.")
                .unwrap()
                .sentences,
            vec!["Mr. Smith is late!", "Is he ok?", "\"Yes\" said Tom."]
        );
        assert_eq!(
            split_summary_sentences("It costs 3.5 dollars. fine").unwrap().sentences.len(),
            1
        );
        assert!(matches!(split_summary_sentences(" \n "), Err(CorpusError::EmptySummary)));
    }

    #[test]
    fn stats_direct_ratio() {
        let d = Dialogue::new("a", &[("A", "w1 w2 w3 w4 w5 w6 w7 w8")]).unwrap();
        // "A : w1 .. w8" is 10 tokens.
        let ex = Example {
            dialogue: d,
            summary: split_summary_sentences("s1 s2 s3 s4 s5").unwrap(),
        };
        let corpus = Corpus::new("t", Split::Train, vec![ex]).unwrap();
        let stats = corpus_stats(&corpus, &WordTokenizer::counting()).unwrap();
        assert_eq!(stats.mean_tokens_per_dialogue, 10.0);
        assert_eq!(stats.compression_rate, 0.5);
        assert_eq!(stats.mean_speakers, 1.0);
        let empty = Corpus::new("e", Split::Dev, vec![]).unwrap();
        assert!(matches!(
            corpus_stats(&empty, &WordTokenizer::counting()),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn samsum_adapter_preserves_ids() {
        let raw = r#"[{"id": "13818513", "summary": "Amanda baked cookies and will bring Jerry some tomorrow.", "dialogue": "Amanda: I baked  cookies. Do you want some?\r\nJerry: Sure!\r\nAmanda: I'll bring you tomorrow :-)"},
                      {"id": "bad", "summary": "", "dialogue": "A: hi"}]"#;
        let out = adapters::samsum(raw).unwrap();
        assert_eq!(out.examples.len(), 1);
        assert_eq!(out.rejected.len(), 1);
        let d = &out.examples[0].dialogue;
        assert_eq!(d.id, "13818513");
        assert_eq!(d.len(), 3);
        assert_eq!(d.utterances[2].text, "I'll bring you tomorrow :-)");
    }

    #[test]
    fn dialogsum_adapter() {
        let raw = "{\"fname\": \"train_0\", \"dialogue\": \"#Person1#: Hi, Mr. Smith.\\n#Person2#: Hello.\", \"summary\": \"Mr. Smith gets a check-up.\"}\n";
        let out = adapters::dialogsum(raw).unwrap();
        assert_eq!(out.examples[0].dialogue.id, "train_0");
        assert_eq!(out.examples[0].dialogue.utterances[0].speaker, "#Person1#");
        assert_eq!(out.examples[0].summary.sentences.len(), 1);
    }
}
