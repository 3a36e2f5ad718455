//! Run configuration: one TOML file with CLI-flag overrides on top.
//!
//! The shipped defaults carry every headline knob explicitly (retrieval
//! k = 3, branches M = 3, three label-guided rounds, 400/600 output-token
//! caps, uniform collaboration weights), so ablations are plain config
//! diffs.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::ExecConfig;
use crate::gold::BuildConfig;
use crate::model::TaskKind;
use crate::provider::{
    api_key_from_env, ChatOptions, HttpProvider, HttpProviderConfig, MockProvider, Provider,
    ProviderError, RetryPolicy, ScriptedReply,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid mock script {path}: {message}")]
    BadScript { path: String, message: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Any OpenAI-compatible chat/embeddings endpoint.
    Openai,
    /// Deterministic scripted backend.
    Mock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    /// Environment variable holding the API key; unset it for keyless
    /// gateways.
    pub api_key_env: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    pub embedding_dimension: usize,
    pub temperature: f64,
    pub max_output_tokens_math: u32,
    pub max_output_tokens_code: u32,
    pub retry_max_attempts: u32,
    pub retry_base_delay_ms: u64,
    pub request_timeout_secs: u64,
    pub seed: Option<u64>,
    /// Scripted replies for the mock backend (JSON list).
    pub mock_script: Option<PathBuf>,
    pub mock_embedding_dimension: usize,
    pub mock_seed: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Openai,
            endpoint: "https://api.openai.com/v1".to_string(),
            api_key_env: Some("OPENAI_API_KEY".to_string()),
            chat_model: "gpt-4o-mini".to_string(),
            embed_model: "text-embedding-3-small".to_string(),
            embedding_dimension: 1536,
            temperature: 0.7,
            max_output_tokens_math: 400,
            max_output_tokens_code: 600,
            retry_max_attempts: 3,
            retry_base_delay_ms: 1000,
            request_timeout_secs: 120,
            seed: None,
            mock_script: None,
            mock_embedding_dimension: 64,
            mock_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub provider: ProviderConfig,
    pub train: BuildConfig,
    pub eval: ExecConfig,
    /// Prompt-template override directory.
    pub prompt_dir: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// The documented default configuration file.
    pub fn default_toml() -> &'static str {
        DEFAULT_TOML
    }

    /// Embedding dimension of the active backend.
    pub fn embedding_dimension(&self) -> usize {
        match self.provider.kind {
            ProviderKind::Openai => self.provider.embedding_dimension,
            ProviderKind::Mock => self.provider.mock_embedding_dimension,
        }
    }

    /// Default chat options for a task kind (output caps differ).
    pub fn chat_options(&self, task: TaskKind) -> ChatOptions {
        let mut options = ChatOptions::new(self.provider.chat_model.clone());
        options.temperature = self.provider.temperature;
        options.max_output_tokens = match task {
            TaskKind::Math => self.provider.max_output_tokens_math,
            TaskKind::Code => self.provider.max_output_tokens_code,
        };
        options.seed = self.provider.seed;
        options
    }

    /// Construct the configured backend.
    pub fn build_provider(&self) -> Result<Box<dyn Provider>, ConfigError> {
        match self.provider.kind {
            ProviderKind::Openai => {
                let api_key = match &self.provider.api_key_env {
                    Some(var) if !var.is_empty() => Some(api_key_from_env(var)?),
                    _ => None,
                };
                let provider = HttpProvider::new(HttpProviderConfig {
                    endpoint: self.provider.endpoint.clone(),
                    api_key,
                    embed_model: self.provider.embed_model.clone(),
                    embedding_dimension: self.provider.embedding_dimension,
                    retry: RetryPolicy {
                        max_attempts: self.provider.retry_max_attempts,
                        base_delay: Duration::from_millis(self.provider.retry_base_delay_ms),
                    },
                    request_timeout: Duration::from_secs(self.provider.request_timeout_secs),
                })?;
                Ok(Box::new(provider))
            }
            ProviderKind::Mock => {
                let replies = match &self.provider.mock_script {
                    Some(path) => load_mock_script(path)?,
                    None => Vec::new(),
                };
                Ok(Box::new(MockProvider::new(
                    replies,
                    self.provider.mock_embedding_dimension,
                    self.provider.mock_seed,
                )))
            }
        }
    }
}

/// Script file: a JSON list whose items are strings or
/// `{content, prompt_tokens?, completion_tokens?}` objects.
pub fn load_mock_script(path: &Path) -> Result<Vec<ScriptedReply>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let items: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| ConfigError::BadScript {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    items
        .into_iter()
        .map(|item| match item {
            serde_json::Value::String(s) => Ok(ScriptedReply::new(s)),
            other => serde_json::from_value(other).map_err(|e| ConfigError::BadScript {
                path: path.display().to_string(),
                message: e.to_string(),
            }),
        })
        .collect()
}

const DEFAULT_TOML: &str = r##"# trellis configuration (shipped defaults)

[provider]
kind = "openai"                 # "openai" (any compatible endpoint) or "mock"
endpoint = "https://api.openai.com/v1"
api_key_env = "OPENAI_API_KEY"  # env var holding the key
chat_model = "gpt-4o-mini"
embed_model = "text-embedding-3-small"
embedding_dimension = 1536
temperature = 0.7
max_output_tokens_math = 400    # output cap for math tasks
max_output_tokens_code = 600    # output cap for code tasks
retry_max_attempts = 3          # transient-failure retries (timeouts, 5xx)
retry_base_delay_ms = 1000      # exponential backoff base
request_timeout_secs = 120
mock_embedding_dimension = 64   # used when kind = "mock"
mock_seed = 0
# seed = 42                     # optional sampling seed forwarded to the API
# mock_script = "script.json"   # scripted replies for kind = "mock"

[train]
label_guided_rounds = 3         # best-of-n rounds conditioned on the label
tot_breadth = 3                 # tree-exploration beam width
tot_depth = 3                   # tree-exploration depth bound
memory_fallback_enabled = true  # memory-guided last resort
retrieval_k = 3                 # positive samples retrieved for that stage
llm_verifier = false            # judge-based verification (experimental)

[eval]
branches = 3                    # parallel guideline branches M
refinement_enabled = true       # per-step self-correction pass
aggregation_mode = "stepwise"   # "stepwise" or "final"
max_step_retries = 1            # retries for empty step replies
retrieval_k = 3                 # positive samples retrieved per problem
guideline_mode = "rewrite"      # "rewrite" or "induce_per_branch"
# category_filter = "algebra"   # restrict retrieval to one dataset tag

# Multi-model collaboration: one entry per branch; weights are uniform (1.0)
# unless overridden.
# [[eval.collaboration]]
# model_id = "gpt-4o-mini"
# weight = 1.0
"##;
