use serde::{Deserialize, Serialize};

use super::{KnowledgeError, KnowledgeModel, KnowledgeRequest};
use crate::text::short_digest;

/// Canned inferences for targets containing `trigger` (case-insensitive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub trigger: String,
    /// Restrict the rule to one relation; `None` applies it to all.
    #[serde(default)]
    pub relation: Option<String>,
    /// Text for rank `k` is `texts[k]`; ranks past the end fall back to the
    /// hash form.
    pub texts: Vec<String>,
}

impl MockRule {
    pub fn new(trigger: &str, relation: Option<&str>, texts: &[&str]) -> Self {
        MockRule {
            trigger: trigger.to_string(),
            relation: relation.map(str::to_string),
            texts: texts.iter().map(|t| t.to_string()).collect(),
        }
    }

    /// Inferences matching the motivating examples used in documentation
    /// and demos.
    pub fn illustrations() -> Vec<MockRule> {
        vec![
            MockRule::new(
                "make fun",
                Some("xIntent"),
                &["to make fun of", "to make fun of someone", "to be funny"],
            ),
            MockRule::new(
                "ancient by laptop standards",
                Some("xReason"),
                &["the laptop is too old", "it is old"],
            ),
        ]
    }
}

/// In-process deterministic knowledge model. Without a matching rule every
/// beam is `mock:<relation>:<rank>:<hash>`, where `hash` is a digest of the
/// request context.
#[derive(Debug, Clone, Default)]
pub struct MockKnowledge {
    rules: Vec<MockRule>,
}

impl MockKnowledge {
    pub fn new() -> Self {
        MockKnowledge::default()
    }

    pub fn with_rules(mut self, rules: Vec<MockRule>) -> Self {
        self.rules = rules;
        self
    }

    fn rule_for(&self, request: &KnowledgeRequest) -> Option<&MockRule> {
        let target = request.target().to_lowercase();
        self.rules.iter().find(|rule| {
            target.contains(&rule.trigger.to_lowercase())
                && rule
                    .relation
                    .as_deref()
                    .is_none_or(|r| r == request.relation)
        })
    }
}

impl KnowledgeModel for MockKnowledge {
    fn infer(&self, request: &KnowledgeRequest) -> Result<Vec<String>, KnowledgeError> {
        let hash = short_digest(request.context.join("\n").as_bytes(), 8);
        let rule = self.rule_for(request);
        Ok((0..request.beams)
            .map(|rank| {
                rule.and_then(|r| r.texts.get(rank).cloned())
                    .unwrap_or_else(|| format!("mock:{}:{rank}:{hash}", request.relation))
            })
            .collect())
    }
}
