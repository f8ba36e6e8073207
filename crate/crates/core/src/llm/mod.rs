//! Completion and embedding providers.
//!
//! [`LlmProvider`] is the only surface the pipeline and simulator see. Two
//! implementations ship: [`HttpProvider`] for OpenAI-compatible endpoints and
//! [`MockProvider`], which is fully deterministic for a given seed.

mod http;
mod mock;
mod rate;

use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

pub use http::HttpProvider;
pub use mock::{fnv1a64, mock_embedding, tokenize, MockProvider, MockRule, MOCK_EMBEDDING_DIMS};
pub use rate::RateLimiter;

use crate::error::LlmError;
use crate::pipeline::EmbeddingVector;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionParams {
    pub temperature: f32,
    pub max_tokens: u32,
    /// Ask the provider for a single JSON object.
    pub json_output: bool,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 400,
            json_output: false,
        }
    }
}

#[async_trait]
pub trait LlmProvider: Send + Sync {
    async fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, LlmError>;

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ProviderKind {
    LiveHttp,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateLimit {
    pub requests_per_second: f64,
    pub burst: u32,
}

impl Default for RateLimit {
    fn default() -> Self {
        Self {
            requests_per_second: 5.0,
            burst: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Base URL; `/chat/completions` and `/embeddings` are appended.
    pub endpoint: Option<String>,
    pub completion_model: String,
    pub embedding_model: String,
    /// Name of the environment variable holding the API key. The key itself
    /// never appears in configuration files.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub rate_limit: RateLimit,
    pub seed: Option<u64>,
    /// Mock only: simulated latency per call.
    pub mock_latency_ms: u64,
    /// Mock only: scripted prompt-pattern overrides.
    pub mock_rules: Vec<MockRule>,
    /// Mock only: make every completion fail (fault injection).
    pub mock_fail_completions: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            completion_model: "gpt-4o".into(),
            embedding_model: "text-embedding-3-small".into(),
            api_key_env: None,
            timeout_secs: 30,
            retry: RetryPolicy::default(),
            rate_limit: RateLimit::default(),
            seed: Some(0),
            mock_latency_ms: 0,
            mock_rules: Vec::new(),
            mock_fail_completions: false,
        }
    }
}

impl ProviderConfig {
    pub fn mock(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.kind {
            ProviderKind::LiveHttp => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(LlmError::InvalidConfig("live provider needs an endpoint".into()));
                }
                if self.api_key_env.as_deref().is_none_or(str::is_empty) {
                    return Err(LlmError::InvalidConfig("live provider needs api_key_env".into()));
                }
                if self.retry.max_attempts == 0 || self.timeout_secs == 0 {
                    return Err(LlmError::InvalidConfig("timeout and retry attempts must be positive".into()));
                }
            }
            ProviderKind::Mock => {
                if self.seed.is_none() {
                    return Err(LlmError::InvalidConfig("mock provider needs a seed".into()));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn LlmProvider>, LlmError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::LiveHttp => Arc::new(HttpProvider::from_config(self)?),
            ProviderKind::Mock => Arc::new(MockProvider::from_config(self)),
        })
    }
}
