//! Deterministic scripted provider for offline testing.
//!
//! Chat replies come from a FIFO script and are consumed in call order; the
//! embedder is a pure function of (text, seed). Given the same script and
//! seed, any pipeline built on this provider replays byte-identically.

use std::collections::VecDeque;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, ChatResponse, Provider, ProviderError};
use crate::model::TokenUsage;

/// One scripted chat reply. Token counts default to a deterministic
/// length-based estimate when not given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedReply {
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl ScriptedReply {
    pub fn new(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            prompt_tokens: None,
            completion_tokens: None,
        }
    }

    pub fn with_usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.prompt_tokens = Some(prompt_tokens);
        self.completion_tokens = Some(completion_tokens);
        self
    }
}

impl<T: Into<String>> From<T> for ScriptedReply {
    fn from(content: T) -> Self {
        ScriptedReply::new(content)
    }
}

/// Rough token estimate used when the script does not pin counts: one token
/// per four characters, minimum one.
fn approx_tokens(text: &str) -> u64 {
    ((text.chars().count() as u64) / 4).max(1)
}

struct MockState {
    replies: VecDeque<ScriptedReply>,
    served: usize,
    requests: Vec<ChatRequest>,
}

/// Scripted chat backend plus seeded hash embedder.
pub struct MockProvider {
    state: Mutex<MockState>,
    embed_dim: usize,
    seed: u64,
}

impl MockProvider {
    pub fn new(replies: Vec<ScriptedReply>, embed_dim: usize, seed: u64) -> Self {
        Self {
            state: Mutex::new(MockState {
                replies: replies.into(),
                served: 0,
                requests: Vec::new(),
            }),
            embed_dim,
            seed,
        }
    }

    /// Script from plain strings with a small default embedding space.
    pub fn scripted<S: Into<String>>(replies: Vec<S>) -> Self {
        Self::new(
            replies.into_iter().map(ScriptedReply::from).collect(),
            16,
            0,
        )
    }

    /// Append further replies to the end of the script.
    pub fn push_replies<R: Into<ScriptedReply>>(&self, replies: Vec<R>) {
        let mut state = self.state.lock().unwrap();
        state.replies.extend(replies.into_iter().map(Into::into));
    }

    /// All chat requests received so far, in call order.
    pub fn captured_requests(&self) -> Vec<ChatRequest> {
        self.state.lock().unwrap().requests.clone()
    }

    /// Number of chat calls served.
    pub fn calls_served(&self) -> usize {
        self.state.lock().unwrap().served
    }

    /// Number of scripted replies not yet consumed.
    pub fn remaining_replies(&self) -> usize {
        self.state.lock().unwrap().replies.len()
    }
}

impl Provider for MockProvider {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let mut state = self.state.lock().unwrap();
        state.requests.push(req.clone());
        let served = state.served;
        let reply = state
            .replies
            .pop_front()
            .ok_or(ProviderError::ScriptExhausted(served))?;
        state.served += 1;
        let prompt_tokens = reply
            .prompt_tokens
            .unwrap_or_else(|| approx_tokens(&req.full_text()));
        let completion_tokens = reply
            .completion_tokens
            .unwrap_or_else(|| approx_tokens(&reply.content));
        Ok(ChatResponse {
            content: reply.content,
            usage: TokenUsage::new(prompt_tokens, completion_tokens),
            model_id: req.model_id.clone(),
        })
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        Ok(hash_embedding(text, self.seed, self.embed_dim))
    }

    fn embedding_dimension(&self) -> usize {
        self.embed_dim
    }
}

/// Map text to a seeded pseudo-random unit vector via a stable hash.
pub fn hash_embedding(text: &str, seed: u64, dim: usize) -> Vec<f32> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut rng_seed = [0u8; 32];
    rng_seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(rng_seed);
    let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x = (*x as f64 / norm) as f32;
        }
    } else {
        v[0] = 1.0;
    }
    v
}
