//! Uniform interface to chat-completion and embedding backends.
//!
//! Two implementations: [`HttpProvider`] speaks the OpenAI-compatible wire
//! protocol, and [`MockProvider`] replays a script for offline deterministic
//! tests. Both are safe for concurrent calls.

mod http;
mod ledger;
mod mock;

pub use http::{api_key_from_env, HttpProvider, HttpProviderConfig, RetryPolicy};
pub use ledger::{TagTotals, UsageLedger};
pub use mock::{MockProvider, ScriptedReply};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TokenUsage;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("mock script exhausted after {0} replies")]
    ScriptExhausted(usize),
    #[error("embedding input must be non-empty")]
    EmptyInput,
    #[error("chat request invalid: {0}")]
    InvalidRequest(String),
    #[error("backend returned malformed response: {0}")]
    MalformedResponse(String),
}

/// Message role in a chat conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// One chat-completion request. Requests are never mutated by providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: 0.7,
            max_output_tokens: 400,
            seed: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_output_tokens(mut self, max: u32) -> Self {
        self.max_output_tokens = max;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "at least one message required".into(),
            ));
        }
        if self.max_output_tokens == 0 {
            return Err(ProviderError::InvalidRequest(
                "max_output_tokens must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Concatenated content of all messages, useful for prompt assertions.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: TokenUsage,
    pub model_id: String,
}

/// A model participating in multi-model collaboration, with its reliability
/// weight. Weights default to 1 (uniform).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub weight: f64,
    #[serde(default)]
    pub reliability: String,
}

impl ModelSpec {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            weight: 1.0,
            reliability: "uniform".to_string(),
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// Default sampling parameters a pipeline component uses when building
/// requests; collaboration mode swaps the model id per branch.
#[derive(Debug, Clone)]
pub struct ChatOptions {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed: Option<u64>,
}

impl ChatOptions {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: 0.7,
            max_output_tokens: 400,
            seed: None,
        }
    }

    pub fn request(&self, prompt: &str) -> ChatRequest {
        self.request_for_model(&self.model_id, prompt)
    }

    pub fn request_for_model(&self, model_id: &str, prompt: &str) -> ChatRequest {
        ChatRequest::new(model_id, vec![Message::user(prompt)])
            .with_temperature(self.temperature)
            .with_max_output_tokens(self.max_output_tokens)
            .with_seed(self.seed)
    }
}

/// Backend abstraction: chat completion plus text embedding.
pub trait Provider: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError>;

    /// Embed text into a vector of [`Provider::embedding_dimension`] length.
    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError>;

    fn embedding_dimension(&self) -> usize;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_request_validation() {
        let req = ChatRequest::new("m", vec![]);
        assert!(matches!(
            req.validate(),
            Err(ProviderError::InvalidRequest(_))
        ));
        let req = ChatRequest::new("m", vec![Message::user("hi")]).with_max_output_tokens(0);
        assert!(req.validate().is_err());
        let req = ChatRequest::new("m", vec![Message::user("hi")]);
        assert!(req.validate().is_ok());
    }

    #[test]
    fn model_spec_defaults_to_uniform_weight() {
        let spec = ModelSpec::new("gpt-4o-mini");
        assert_eq!(spec.weight, 1.0);
    }
}
