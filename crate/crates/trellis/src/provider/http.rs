//! OpenAI-compatible HTTP backend (chat completions + embeddings).

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatRequest, ChatResponse, Provider, ProviderError, Role};
use crate::model::TokenUsage;

/// Retry contract: transient failures (timeouts, 5xx) are retried with
/// exponential backoff; 4xx-class responses are never retried.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub embed_model: String,
    pub embedding_dimension: usize,
    pub retry: RetryPolicy,
    pub request_timeout: Duration,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".to_string(),
            api_key: None,
            embed_model: "text-embedding-3-small".to_string(),
            embedding_dimension: 1536,
            retry: RetryPolicy::default(),
            request_timeout: Duration::from_secs(120),
        }
    }
}

/// Resolve an API key from the named environment variable.
pub fn api_key_from_env(var: &str) -> Result<String, ProviderError> {
    std::env::var(var)
        .map_err(|_| ProviderError::Auth(format!("environment variable {var} is not set")))
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct WireChatChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireChatChoice {
    message: WireChatChoiceMessage,
}

#[derive(Deserialize)]
struct WireChatResponse {
    choices: Vec<WireChatChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Deserialize)]
struct WireEmbeddingDatum {
    embedding: Vec<f32>,
}

#[derive(Deserialize)]
struct WireEmbeddingResponse {
    data: Vec<WireEmbeddingDatum>,
}

enum AttemptError {
    /// Worth retrying: timeout, connection failure, 5xx.
    Transient(String),
    /// Not worth retrying.
    Fatal(ProviderError),
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| ProviderError::Transport {
                attempts: 0,
                message: format!("client construction failed: {e}"),
            })?;
        Ok(Self { config, client })
    }

    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<String, ProviderError> {
        let url = format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.try_post(&url, body) {
                Ok(text) => return Ok(text),
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::Transient(message)) => {
                    if attempt >= self.config.retry.max_attempts {
                        return Err(ProviderError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    let delay = self.config.retry.base_delay * 2u32.pow(attempt - 1);
                    log::warn!("transient provider failure (attempt {attempt}): {message}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn try_post(&self, url: &str, body: &serde_json::Value) -> Result<String, AttemptError> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            AttemptError::Transient(format!("request failed: {e}"))
        })?;
        let status = resp.status();
        if status.is_success() {
            return resp
                .text()
                .map_err(|e| AttemptError::Transient(format!("body read failed: {e}")));
        }
        let body_text = resp.text().unwrap_or_default();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(AttemptError::Fatal(ProviderError::Auth(format!(
                "{status}: {body_text}"
            ))));
        }
        if status.is_server_error() {
            return Err(AttemptError::Transient(format!("{status}: {body_text}")));
        }
        // Remaining 4xx-class errors are caller mistakes; do not retry.
        Err(AttemptError::Fatal(ProviderError::Transport {
            attempts: 1,
            message: format!("{status}: {body_text}"),
        }))
    }
}

impl Provider for HttpProvider {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        req.validate()?;
        let messages: Vec<serde_json::Value> = req
            .messages
            .iter()
            .map(|m| {
                json!({
                    "role": match m.role {
                        Role::System => "system",
                        Role::User => "user",
                        Role::Assistant => "assistant",
                    },
                    "content": m.content,
                })
            })
            .collect();
        let mut body = json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        let text = self.post_json("chat/completions", &body)?;
        let wire: WireChatResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::MalformedResponse(format!("chat response: {e}")))?;
        let content = wire
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| ProviderError::MalformedResponse("no choices in response".into()))?;
        let usage = wire
            .usage
            .map(|u| TokenUsage::new(u.prompt_tokens, u.completion_tokens))
            .unwrap_or_else(|| TokenUsage::new(0, 0));
        Ok(ChatResponse {
            content,
            usage,
            model_id: wire.model.unwrap_or_else(|| req.model_id.clone()),
        })
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let body = json!({
            "model": self.config.embed_model,
            "input": text,
        });
        let raw = self.post_json("embeddings", &body)?;
        let wire: WireEmbeddingResponse = serde_json::from_str(&raw)
            .map_err(|e| ProviderError::MalformedResponse(format!("embedding response: {e}")))?;
        let vector = wire
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| ProviderError::MalformedResponse("no embedding in response".into()))?;
        Ok(vector)
    }

    fn embedding_dimension(&self) -> usize {
        self.config.embedding_dimension
    }
}
