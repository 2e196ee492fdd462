//! Run configuration: one TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use commonsum::multitask::{Mode, TrainConfig};
use commonsum::selection::Strategy;
use commonsum::sequencing::Limits;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    Jsonl,
    Samsum,
    Dialogsum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusPaths {
    pub format: CorpusFormat,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl Default for CorpusPaths {
    fn default() -> Self {
        CorpusPaths {
            format: CorpusFormat::Jsonl,
            train: None,
            dev: None,
            test: None,
        }
    }
}

/// Each backend is `mock` or an HTTP endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub knowledge: String,
    pub embedder: String,
    pub nli: String,
    pub token_embedder: String,
}

impl Default for Backends {
    fn default() -> Self {
        Backends {
            knowledge: "mock".into(),
            embedder: "mock".into(),
            nli: "mock".into(),
            token_embedder: "mock".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeSection {
    pub profile: String,
    /// JSON list of mock rules; only used with the mock backend.
    pub rules: Option<PathBuf>,
}

impl Default for KnowledgeSection {
    fn default() -> Self {
        KnowledgeSection {
            profile: "per-sentence".into(),
            rules: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ffn_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            vocab_size: 512,
            d_model: 64,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ffn_dim: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeroShotSection {
    /// Frozen weights to decode with; the echo mock when unset.
    pub weights: Option<PathBuf>,
}

#[allow(clippy::derivable_impls)]
impl Default for ZeroShotSection {
    fn default() -> Self {
        ZeroShotSection { weights: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub fractions: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            fractions: vec![0.1, 0.25, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub strategy: Strategy,
    /// Fraction of the training split used by `train`.
    pub fraction: f64,
    pub corpus: CorpusPaths,
    pub backends: Backends,
    pub knowledge: KnowledgeSection,
    pub limits: Limits,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub zero_shot: ZeroShotSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            strategy: Strategy::Similarity,
            fraction: 1.0,
            corpus: CorpusPaths::default(),
            backends: Backends::default(),
            knowledge: KnowledgeSection::default(),
            limits: Limits::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            zero_shot: ZeroShotSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub backend: Option<String>,
    pub embedder: Option<String>,
    pub nli: Option<String>,
    pub token_embedder: Option<String>,
    pub strategy: Option<Strategy>,
    pub mode: Option<Mode>,
    pub fraction: Option<Vec<f64>>,
    pub beam: Option<usize>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn check_endpoint(field: &str, value: &str) -> Result<(), CliError> {
    if value == "mock" || value.starts_with("http://") || value.starts_with("https://") {
        Ok(())
    } else {
        Err(invalid(field, format!("`{value}` is neither `mock` nor an http(s) URL")))
    }
}

impl RunConfig {
    /// Load `path` (or defaults), apply overrides, resolve relative paths
    /// against the config file's directory, and validate.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let (mut cfg, base) = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| invalid("--config", format!("{}: {e}", p.display())))?;
                let cfg: RunConfig = toml::from_str(&text).map_err(|e| invalid("--config", e.to_string()))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (cfg, base)
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        match &overrides.out {
            Some(out) => cfg.out = out.clone(),
            None => {
                if cfg.out.is_relative() {
                    cfg.out = base.join(&cfg.out);
                }
            }
        }
        if let Some(b) = &overrides.backend {
            cfg.backends.knowledge = b.clone();
        }
        if let Some(b) = &overrides.embedder {
            cfg.backends.embedder = b.clone();
        }
        if let Some(b) = &overrides.nli {
            cfg.backends.nli = b.clone();
        }
        if let Some(b) = &overrides.token_embedder {
            cfg.backends.token_embedder = b.clone();
        }
        if let Some(s) = overrides.strategy {
            cfg.strategy = s;
        }
        if let Some(m) = overrides.mode {
            cfg.train.mode = m;
        }
        if let Some(f) = &overrides.fraction {
            if let [single] = f.as_slice() {
                cfg.fraction = *single;
            }
            cfg.sweep.fractions = f.clone();
        }
        if let Some(b) = overrides.beam {
            cfg.train.beam = b;
        }
        // The root seed drives training too.
        cfg.train.seed = cfg.seed;
        resolve(&base, &mut cfg.corpus.train);
        resolve(&base, &mut cfg.corpus.dev);
        resolve(&base, &mut cfg.corpus.test);
        resolve(&base, &mut cfg.knowledge.rules);
        resolve(&base, &mut cfg.zero_shot.weights);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        check_endpoint("backends.knowledge", &self.backends.knowledge)?;
        check_endpoint("backends.embedder", &self.backends.embedder)?;
        check_endpoint("backends.nli", &self.backends.nli)?;
        check_endpoint("backends.token_embedder", &self.backends.token_embedder)?;
        for (field, p) in [
            ("corpus.train", &self.corpus.train),
            ("corpus.dev", &self.corpus.dev),
            ("corpus.test", &self.corpus.test),
            ("knowledge.rules", &self.knowledge.rules),
            ("zero_shot.weights", &self.zero_shot.weights),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(invalid(field, format!("{} does not exist", p.display())));
                }
            }
        }
        let profile = commonsum::knowledge::Profile::by_name(&self.knowledge.profile)
            .ok_or_else(|| invalid("knowledge.profile", format!("unknown profile `{}`", self.knowledge.profile)))?;
        profile
            .validate()
            .map_err(|e| invalid("knowledge.profile", e.to_string()))?;
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(invalid("fraction", "must be in (0, 1]"));
        }
        self.train.validate().map_err(|e| invalid("train", e.to_string()))?;
        if self.limits.max_input_len < 3 || self.limits.max_output_len < 2 {
            return Err(invalid("limits", "budgets are too small"));
        }
        if self.model.vocab_size < 16 {
            return Err(invalid("model.vocab_size", "must be at least 16"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_hash_stably() {
        let a = RunConfig::load(None, &Overrides::default()).unwrap();
        let b = RunConfig::load(None, &Overrides::default()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::load(
            None,
            &Overrides {
                seed: Some(5),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(c.train.seed, 5);
    }

    #[test]
    fn bad_endpoint_names_the_field() {
        let err = RunConfig::load(
            None,
            &Overrides {
                backend: Some("ftp://x".into()),
                ..Overrides::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, CliError::ConfigInvalid { field, .. } if field == "backends.knowledge"));
    }

    #[test]
    fn file_round_trip_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("train.jsonl"), "").unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 3\nout = \"out\"\n[corpus]\ntrain = \"train.jsonl\"\n[train]\nepochs = 2\nmode = \"sick\"\n",
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&path), &Overrides::default()).unwrap();
        assert_eq!(cfg.out, dir.path().join("out"));
        assert_eq!(cfg.corpus.train, Some(dir.path().join("train.jsonl")));
        assert_eq!(cfg.train.mode, Mode::Sick);
        assert_eq!(cfg.train.epochs, 2);
        std::fs::write(&path, "bogus = 1\n").unwrap();
        assert!(RunConfig::load(Some(&path), &Overrides::default()).is_err());
    }
}
