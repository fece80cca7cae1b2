//! Global configuration: one TOML file binding endpoints, environment,
//! inference and collection settings plus the root seed.
//!
//! Parsing is strict — unknown keys are rejected with field-level
//! diagnostics. Command-line flags override file values; secrets (the API
//! key) come only from the environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::RetryConfig;
use crate::inference::{CriticFailurePolicy, InferenceConfig};
use crate::process::{CollectionConfig, PairingPolicy};
use crate::retrieval::{DenseFailurePolicy, EnvConfig};

/// Configuration errors carry the parser's field-level diagnostics.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config: {0}")]
    Invalid(String),
}

/// One chat-backend endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EndpointSpec {
    /// Strict scripted lookup from an exchange-log JSONL file.
    Mock { path: PathBuf },
    /// OpenAI-compatible chat-completion endpoint.
    Http {
        url: String,
        model: String,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
        #[serde(default)]
        retry: RetryConfig,
    },
    /// The built-in scripted two-hop backend for this role.
    FixtureTwoHop,
    /// The built-in never-answering actor (step-cap testing).
    FixtureAdversarial,
}

fn default_max_in_flight() -> usize {
    4
}

/// The per-role backend wiring: each role resolves to exactly one backend
/// per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleEndpoints {
    pub actor: EndpointSpec,
    pub summarizer: EndpointSpec,
    pub annotator: EndpointSpec,
}

impl Default for RoleEndpoints {
    fn default() -> Self {
        RoleEndpoints {
            actor: EndpointSpec::FixtureTwoHop,
            summarizer: EndpointSpec::FixtureTwoHop,
            annotator: EndpointSpec::FixtureTwoHop,
        }
    }
}

/// Parameters of the built-in two-hop fixture (shared by fixture endpoints
/// and the fixture environment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSection {
    pub questions: usize,
    pub seed: u64,
    pub gold_prob: f64,
    pub always_include_gold: bool,
}

impl Default for FixtureSection {
    fn default() -> Self {
        FixtureSection {
            questions: 20,
            seed: 7,
            gold_prob: 1.0,
            always_include_gold: true,
        }
    }
}

/// Where retrieval documents come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EnvSource {
    /// The built-in two-hop fixture corpus.
    #[default]
    FixtureTwoHop,
    /// A lexical index built by the `index` command.
    Index,
}

/// Environment section: source plus the retrieval parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub source: EnvSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_url: Option<String>,
    pub top_k: usize,
    pub rrf_k: f64,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub fusion_pool_multiplier: usize,
    pub dense_failure_policy: DenseFailurePolicy,
}

impl Default for EnvSection {
    fn default() -> Self {
        let base = EnvConfig::default();
        EnvSection {
            source: EnvSource::default(),
            index_path: None,
            dense_url: None,
            top_k: base.top_k,
            rrf_k: base.rrf_k,
            bm25_k1: base.bm25_k1,
            bm25_b: base.bm25_b,
            fusion_pool_multiplier: base.fusion_pool_multiplier,
            dense_failure_policy: base.dense_failure_policy,
        }
    }
}

impl EnvSection {
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            top_k: self.top_k,
            rrf_k: self.rrf_k,
            bm25_k1: self.bm25_k1,
            bm25_b: self.bm25_b,
            fusion_pool_multiplier: self.fusion_pool_multiplier,
            dense_failure_policy: self.dense_failure_policy,
        }
    }
}

/// Inference section (defaults mirror [`InferenceConfig`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub n_candidates: usize,
    pub max_steps: usize,
    pub temperature: f64,
    pub force_answer_at_cap: bool,
    pub critic_failure_policy: CriticFailurePolicy,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let base = InferenceConfig::default();
        InferenceSection {
            n_candidates: base.n_candidates,
            max_steps: base.max_steps,
            temperature: base.temperature,
            force_answer_at_cap: base.force_answer_at_cap,
            critic_failure_policy: base.critic_failure_policy,
        }
    }
}

impl InferenceSection {
    pub fn inference_config(&self, use_critic: bool) -> InferenceConfig {
        InferenceConfig {
            n_candidates: self.n_candidates,
            max_steps: self.max_steps,
            temperature: self.temperature,
            use_critic,
            force_answer_at_cap: self.force_answer_at_cap,
            critic_failure_policy: self.critic_failure_policy,
        }
    }
}

/// Collection section (defaults mirror [`CollectionConfig`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectionSection {
    pub n_candidates: usize,
    pub max_steps: usize,
    pub temperature: f64,
    pub pairing: PairingPolicy,
    pub force_answer_at_cap: bool,
}

impl Default for CollectionSection {
    fn default() -> Self {
        let base = CollectionConfig::default();
        CollectionSection {
            n_candidates: base.n_candidates,
            max_steps: base.max_steps,
            temperature: base.temperature,
            pairing: base.pairing,
            force_answer_at_cap: base.force_answer_at_cap,
        }
    }
}

impl CollectionSection {
    pub fn collection_config(&self) -> CollectionConfig {
        CollectionConfig {
            n_candidates: self.n_candidates,
            max_steps: self.max_steps,
            temperature: self.temperature,
            pairing: self.pairing,
            force_answer_at_cap: self.force_answer_at_cap,
        }
    }
}

/// Critic-training section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    /// Hashed bag-of-words dimension as a power of two.
    pub dimension_log2: u32,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: 0.5,
            epochs: 20,
            batch_size: 32,
            l2: 1e-4,
            dimension_log2: 18,
        }
    }
}

/// Agent rendering knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub doc_char_budget: usize,
    pub max_tokens: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            doc_char_budget: 1500,
            max_tokens: 1024,
        }
    }
}

/// Filesystem paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Directory of prompt-template overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_dir: Option<PathBuf>,
}

/// The full configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub seed: u64,
    pub endpoints: RoleEndpoints,
    pub fixture: FixtureSection,
    pub env: EnvSection,
    pub inference: InferenceSection,
    pub collection: CollectionSection,
    pub train: TrainSection,
    pub agent: AgentSection,
    pub paths: PathsSection,
}

impl GlobalConfig {
    /// Parses a TOML config file, rejecting unknown keys.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: GlobalConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.env.source == EnvSource::Index && self.env.index_path.is_none() {
            return Err(ConfigError::Invalid(
                "env.source = \"index\" requires env.index_path".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.fixture.gold_prob) {
            return Err(ConfigError::Invalid(format!(
                "fixture.gold_prob {} is not in [0, 1]",
                self.fixture.gold_prob
            )));
        }
        if self.train.dimension_log2 > 26 {
            return Err(ConfigError::Invalid(format!(
                "train.dimension_log2 {} is unreasonably large",
                self.train.dimension_log2
            )));
        }
        Ok(())
    }

    /// Canonical TOML rendering; `parse(canonical_toml(c)) == c`.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
