//! Synthetic dialogue corpus for smoke runs and the toy training task.
//!
//! Each dialogue opens with a request naming a verb, an object and a time;
//! the reference summary is that first utterance. Knowledge rules keyed by
//! verb make the commonsense target predictable from the input.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::sync::Arc;

use crate::corpus::{split_summary_sentences, Corpus, Dialogue, Example, Split};
use crate::exec::Exec;
use crate::knowledge::{KnowledgeBackend, MockKnowledge, MockRule, Profile};
use crate::pipeline::{self, PipelineError};
use crate::selection::{HashingBowEmbedder, Scorer, Selector};
use crate::sequencing::{Limits, TrainingExample, WordTokenizer};

const NAMES: [&str; 8] = ["Amanda", "Tom", "Lisa", "Mark", "Nina", "Paul", "Rita", "Sam"];
const VERBS: [&str; 8] = ["buy", "fix", "paint", "sell", "clean", "cook", "bring", "borrow"];
const OBJECTS: [&str; 8] = ["car", "laptop", "cake", "bike", "door", "lamp", "book", "phone"];
const TIMES: [&str; 4] = ["today", "tomorrow", "tonight", "later"];
const OPENERS: [&str; 3] = ["I will", "We should", "Can you"];
const REPLIES: [&str; 6] = [
    "Sure, no problem.",
    "Okay, see you then.",
    "Do not forget the {object}.",
    "Great, thanks a lot.",
    "Fine by me.",
    "Let me know when you are done.",
];

const RELATION_PHRASES: [(&str, &str); 5] = [
    ("HinderedBy", "they cannot"),
    ("xWant", "wants to"),
    ("xIntent", "to"),
    ("xNeed", "needs to"),
    ("xReason", "has to"),
];
const RANK_SUFFIXES: [&str; 5] = ["it", "it soon", "it well", "it now", "it again"];

/// Knowledge rules giving five inferences per relation for each toy verb.
pub fn rules() -> Vec<MockRule> {
    let mut out = Vec::with_capacity(VERBS.len() * RELATION_PHRASES.len());
    for verb in VERBS {
        for (relation, phrase) in RELATION_PHRASES {
            let texts: Vec<String> = RANK_SUFFIXES.iter().map(|s| format!("{phrase} {verb} {s}")).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            out.push(MockRule::new(verb, Some(relation), &refs));
        }
    }
    out
}

fn example(id: String, rng: &mut ChaCha8Rng) -> Example {
    let mut speakers: Vec<&str> = NAMES.choose_multiple(rng, 2).copied().collect();
    speakers.shuffle(rng);
    let object = *OBJECTS.choose(rng).expect("non-empty");
    let first = format!(
        "{} {} the {} {}.",
        OPENERS.choose(rng).expect("non-empty"),
        VERBS.choose(rng).expect("non-empty"),
        object,
        TIMES.choose(rng).expect("non-empty"),
    );
    let turns = rng.gen_range(2..=4);
    let mut lines = vec![first.clone()];
    for _ in 1..turns {
        lines.push(REPLIES.choose(rng).expect("non-empty").replace("{object}", object));
    }
    let pairs: Vec<(&str, &str)> = lines
        .iter()
        .enumerate()
        .map(|(i, l)| (speakers[i % 2], l.as_str()))
        .collect();
    Example {
        dialogue: Dialogue::new(id, &pairs).expect("toy dialogues are well formed"),
        summary: split_summary_sentences(&first).expect("toy summaries are non-empty"),
    }
}

/// `n` toy examples with ids `toy-<split>-<i>`.
pub fn corpus(n: usize, split: Split, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| example(format!("toy-{split}-{i:04}"), &mut rng))
        .collect();
    Corpus::new("toy", split, examples).expect("ids are unique")
}

/// Toy examples run through mock knowledge and similarity selection, with a
/// vocabulary built from them: ready for training.
pub fn prepared(n: usize, seed: u64, exec: Exec) -> Result<(Vec<TrainingExample>, WordTokenizer), PipelineError> {
    let corpus = corpus(n, Split::Train, seed);
    let profile = Profile::mock();
    let knowledge = KnowledgeBackend::new(profile.clone(), Box::new(MockKnowledge::new().with_rules(rules())))?
        .with_exec(exec);
    let candidates = pipeline::generate_candidates(&knowledge, &corpus, true)?;
    let selector = Selector::new(
        Scorer::Similarity(Arc::new(HashingBowEmbedder::default())),
        profile.relations.clone(),
    )
    .with_exec(exec);
    let selections = pipeline::select_commonsense(&selector, &corpus, &candidates)?;
    let texts = pipeline::text_examples(&corpus, &selections)?;
    let tokenizer = WordTokenizer::new(pipeline::build_vocab(&texts, 512));
    let examples = pipeline::training_examples(&corpus, &selections, &tokenizer, Limits::default(), true)?;
    Ok((examples, tokenizer))
}
