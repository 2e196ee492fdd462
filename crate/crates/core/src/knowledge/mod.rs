//! Candidate commonsense inferences from a pluggable knowledge model.
//!
//! For every source unit (utterance or summary sentence) the model is asked
//! once per relation; each relation contributes a fixed number of ranked
//! beams, so every unit gets `|relations| x beams` candidates.

mod cache;
mod mock;

pub use cache::{CacheKey, InferenceCache};
pub use mock::{MockKnowledge, MockRule};

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dialogue, SummaryDoc};
use crate::exec::Exec;
use crate::service::{ServiceClient, ServiceError};
use crate::text::normalize_whitespace;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("knowledge backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("knowledge backend returned malformed output for relation {relation}: {reason}")]
    BackendMalformedOutput { relation: String, reason: String },
    #[error("inference cache corrupt: {0}")]
    CacheCorrupt(String),
    #[error("invalid knowledge profile: {0}")]
    InvalidProfile(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<ServiceError> for KnowledgeError {
    fn from(e: ServiceError) -> Self {
        KnowledgeError::BackendUnavailable(e.to_string())
    }
}

/// An ATOMIC-style relation tag such as `xIntent` or `HinderedBy`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationType(String);

impl RelationType {
    pub fn new(name: &str) -> Self {
        RelationType(name.to_string())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for RelationType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateInference {
    pub relation: RelationType,
    pub rank: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub source_index: usize,
    pub candidates: Vec<CandidateInference>,
}

/// What the knowledge model sees when asked about unit `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextPolicy {
    /// Unit `i` alone.
    Sentence,
    /// Units `0..=i`, so the model can condition on the preceding turns.
    History,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub id: String,
    pub context: ContextPolicy,
    pub relations: Vec<RelationType>,
    /// Beams requested from the model per relation.
    pub beams_requested: usize,
    /// Top beams kept per relation.
    pub beams_kept: usize,
}

fn relations(names: &[&str]) -> Vec<RelationType> {
    names.iter().map(|n| RelationType::new(n)).collect()
}

impl Profile {
    /// Sentence-level model, beam 5.
    pub fn per_sentence() -> Self {
        Profile {
            id: "per-sentence".into(),
            context: ContextPolicy::Sentence,
            relations: relations(&["HinderedBy", "xWant", "xIntent", "xNeed", "xReason"]),
            beams_requested: 5,
            beams_kept: 5,
        }
    }

    /// Paragraph-level model with a memory of earlier turns; beam 10 cut to 5.
    pub fn history_conditioned() -> Self {
        Profile {
            id: "history-conditioned".into(),
            context: ContextPolicy::History,
            relations: relations(&["xIntent", "xWant", "xReact", "xEffect", "xAttr"]),
            beams_requested: 10,
            beams_kept: 5,
        }
    }

    /// Deterministic in-process profile used with [`MockKnowledge`].
    pub fn mock() -> Self {
        Profile {
            id: "mock".into(),
            ..Self::per_sentence()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "per-sentence" => Some(Self::per_sentence()),
            "history-conditioned" => Some(Self::history_conditioned()),
            "mock" => Some(Self::mock()),
            _ => None,
        }
    }

    pub fn with_relations(mut self, names: &[&str]) -> Self {
        self.relations = relations(names);
        self
    }

    pub fn candidates_per_unit(&self) -> usize {
        self.relations.len() * self.beams_kept
    }

    pub fn validate(&self) -> Result<(), KnowledgeError> {
        if self.relations.is_empty() {
            return Err(KnowledgeError::InvalidProfile("empty relation catalog".into()));
        }
        let unique: HashSet<_> = self.relations.iter().collect();
        if unique.len() != self.relations.len() {
            return Err(KnowledgeError::InvalidProfile("duplicate relations".into()));
        }
        if self.beams_kept == 0 || self.beams_kept > self.beams_requested {
            return Err(KnowledgeError::InvalidProfile(format!(
                "cannot keep {} of {} beams",
                self.beams_kept, self.beams_requested
            )));
        }
        Ok(())
    }

    /// Position of `relation` in the catalog; used for tie-breaking.
    pub fn relation_order(&self, relation: &RelationType) -> usize {
        self.relations
            .iter()
            .position(|r| r == relation)
            .unwrap_or(usize::MAX)
    }
}

/// Wire request for a knowledge service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRequest {
    pub context: Vec<String>,
    pub target_index: usize,
    pub relation: String,
    pub beams: usize,
}

impl KnowledgeRequest {
    pub fn target(&self) -> &str {
        self.context
            .get(self.target_index)
            .map(String::as_str)
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeResponse {
    pub texts: Vec<String>,
}

/// `f(x, r) -> ranked inferences`.
pub trait KnowledgeModel: Send + Sync {
    fn infer(&self, request: &KnowledgeRequest) -> Result<Vec<String>, KnowledgeError>;
}

/// Knowledge model behind an HTTP endpoint.
pub struct ServiceKnowledge {
    client: ServiceClient,
}

impl ServiceKnowledge {
    pub fn new(endpoint: &str) -> Self {
        ServiceKnowledge {
            client: ServiceClient::new(endpoint),
        }
    }
}

impl KnowledgeModel for ServiceKnowledge {
    fn infer(&self, request: &KnowledgeRequest) -> Result<Vec<String>, KnowledgeError> {
        let response: KnowledgeResponse = self.client.call(request).map_err(|e| match e {
            ServiceError::Malformed { reason, .. } => KnowledgeError::BackendMalformedOutput {
                relation: request.relation.clone(),
                reason,
            },
            other => other.into(),
        })?;
        Ok(response.texts)
    }
}

/// A knowledge model bound to a profile, optionally backed by a cache.
pub struct KnowledgeBackend {
    profile: Profile,
    model: Box<dyn KnowledgeModel>,
    cache: Option<RwLock<InferenceCache>>,
    calls: AtomicUsize,
    exec: Exec,
}

struct Fetched {
    key: CacheKey,
    texts: Vec<String>,
    fresh: bool,
}

impl KnowledgeBackend {
    pub fn new(profile: Profile, model: Box<dyn KnowledgeModel>) -> Result<Self, KnowledgeError> {
        profile.validate()?;
        Ok(KnowledgeBackend {
            profile,
            model,
            cache: None,
            calls: AtomicUsize::new(0),
            exec: Exec::default(),
        })
    }

    /// Route every request through `cache`; hits never reach the model.
    pub fn with_cache(mut self, cache: InferenceCache) -> Self {
        self.cache = Some(RwLock::new(cache));
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Number of requests that reached the model.
    pub fn backend_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn into_cache(self) -> Option<InferenceCache> {
        self.cache.map(|c| c.into_inner().expect("cache lock poisoned"))
    }

    /// One candidate set per utterance.
    pub fn generate_input_candidates(
        &self,
        dialogue: &Dialogue,
    ) -> Result<Vec<CandidateSet>, KnowledgeError> {
        self.generate(&dialogue.id, &dialogue.attributed_utterances())
    }

    /// One candidate set per summary sentence. `doc_id` keys the cache.
    pub fn generate_target_candidates(
        &self,
        doc_id: &str,
        summary: &SummaryDoc,
    ) -> Result<Vec<CandidateSet>, KnowledgeError> {
        self.generate(&format!("{doc_id}#summary"), &summary.sentences)
    }

    fn context_for(&self, units: &[String], index: usize) -> (Vec<String>, usize) {
        match self.profile.context {
            ContextPolicy::Sentence => (vec![units[index].clone()], 0),
            ContextPolicy::History => (units[..=index].to_vec(), index),
        }
    }

    fn fetch(&self, doc: &str, units: &[String], index: usize) -> Result<Vec<Fetched>, KnowledgeError> {
        let (context, target_index) = self.context_for(units, index);
        let mut out = Vec::with_capacity(self.profile.relations.len());
        for relation in &self.profile.relations {
            let key = CacheKey {
                profile: self.profile.id.clone(),
                doc: doc.to_string(),
                source_index: index,
                relation: relation.name().to_string(),
            };
            let hit = self.cache.as_ref().and_then(|c| {
                c.read()
                    .expect("cache lock poisoned")
                    .get(&key)
                    .map(<[String]>::to_vec)
            });
            let (texts, fresh) = match hit {
                Some(texts) => (texts, false),
                None => {
                    let request = KnowledgeRequest {
                        context: context.clone(),
                        target_index,
                        relation: relation.name().to_string(),
                        beams: self.profile.beams_requested,
                    };
                    self.calls.fetch_add(1, Ordering::SeqCst);
                    (self.model.infer(&request)?, true)
                }
            };
            out.push(Fetched { key, texts, fresh });
        }
        Ok(out)
    }

    fn generate(&self, doc: &str, units: &[String]) -> Result<Vec<CandidateSet>, KnowledgeError> {
        let indices: Vec<usize> = (0..units.len()).collect();
        let fetched = self
            .exec
            .try_map(&indices, |&i| self.fetch(doc, units, i))?;
        if let Some(cache) = &self.cache {
            let mut cache = cache.write().expect("cache lock poisoned");
            for f in fetched.iter().flatten().filter(|f| f.fresh) {
                cache.insert(f.key.clone(), f.texts.clone())?;
            }
        }
        fetched
            .into_iter()
            .enumerate()
            .map(|(source_index, per_relation)| {
                let mut candidates = Vec::with_capacity(self.profile.candidates_per_unit());
                for (relation, f) in self.profile.relations.iter().zip(per_relation) {
                    candidates.extend(self.validate_beams(relation, f.texts)?);
                }
                Ok(CandidateSet {
                    source_index,
                    candidates,
                })
            })
            .collect()
    }

    fn validate_beams(
        &self,
        relation: &RelationType,
        texts: Vec<String>,
    ) -> Result<Vec<CandidateInference>, KnowledgeError> {
        if texts.len() < self.profile.beams_kept {
            return Err(KnowledgeError::BackendMalformedOutput {
                relation: relation.name().to_string(),
                reason: format!(
                    "expected {} beams, got {}",
                    self.profile.beams_kept,
                    texts.len()
                ),
            });
        }
        texts
            .into_iter()
            .take(self.profile.beams_kept)
            .enumerate()
            .map(|(rank, text)| {
                let text = normalize_whitespace(&text);
                if text.is_empty() {
                    return Err(KnowledgeError::BackendMalformedOutput {
                        relation: relation.name().to_string(),
                        reason: format!("empty text at rank {rank}"),
                    });
                }
                Ok(CandidateInference {
                    relation: relation.clone(),
                    rank,
                    text,
                })
            })
            .collect()
    }
}

/// One line of the candidate dump written by the generation stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub dialogue_id: String,
    /// One set per utterance.
    pub input: Vec<CandidateSet>,
    /// One set per summary sentence; empty when targets were not generated.
    #[serde(default)]
    pub target: Vec<CandidateSet>,
}
