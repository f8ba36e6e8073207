//! OpenAI-compatible HTTP provider.
//!
//! Request mapping:
//! - completion: `POST {endpoint}/chat/completions` with
//!   `{model, messages: [{role: "user", content}], temperature, max_tokens}`
//!   plus `response_format: {type: "json_object"}` when JSON output is requested;
//!   the reply text is `choices[0].message.content`.
//! - embedding: `POST {endpoint}/embeddings` with `{model, input}`; the vector
//!   is `data[0].embedding`.
//!
//! Transient failures (connection errors, timeouts, 429, 5xx) are retried with
//! exponential backoff. A whole call never takes longer than
//! `timeout * max_attempts`.

use std::time::Duration;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tracing::warn;

use super::{CompletionParams, LlmProvider, ProviderConfig, RateLimiter, RetryPolicy};
use crate::error::LlmError;
use crate::pipeline::EmbeddingVector;

#[derive(Debug)]
pub struct HttpProvider {
    client: reqwest::Client,
    endpoint: String,
    api_key: String,
    completion_model: String,
    embedding_model: String,
    timeout: Duration,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

enum Failure {
    Transient(LlmError),
    Fatal(LlmError),
}

impl HttpProvider {
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, LlmError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| LlmError::InvalidConfig("missing endpoint".into()))?;
        let var = cfg
            .api_key_env
            .as_deref()
            .ok_or_else(|| LlmError::InvalidConfig("missing api_key_env".into()))?;
        let api_key =
            std::env::var(var).map_err(|_| LlmError::InvalidConfig(format!("environment variable {var} is not set")))?;
        let timeout = Duration::from_secs(cfg.timeout_secs.max(1));
        Self::new(endpoint, api_key, cfg, timeout)
    }

    /// Builds a provider with an explicit key and timeout (mainly for tests).
    pub fn new(endpoint: String, api_key: String, cfg: &ProviderConfig, timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key,
            completion_model: cfg.completion_model.clone(),
            embedding_model: cfg.embedding_model.clone(),
            timeout,
            retry: cfg.retry.clone(),
            limiter: RateLimiter::new(cfg.rate_limit.requests_per_second, cfg.rate_limit.burst),
        })
    }

    async fn post_once(&self, path: &str, body: &Value) -> Result<Value, Failure> {
        self.limiter.acquire().await;
        let url = format!("{}/{path}", self.endpoint);
        let resp = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    Failure::Transient(LlmError::Timeout(self.timeout.as_millis() as u64))
                } else {
                    Failure::Transient(LlmError::ProviderUnavailable(e.to_string()))
                }
            })?;
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Failure::Transient(LlmError::ProviderUnavailable(format!("{url} returned {status}"))));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(LlmError::ProviderUnavailable(format!("{url} returned {status}"))));
        }
        resp.json::<Value>()
            .await
            .map_err(|e| Failure::Fatal(LlmError::ProviderUnavailable(format!("bad response body: {e}"))))
    }

    async fn post_with_retry(&self, path: &str, body: Value) -> Result<Value, LlmError> {
        let attempts = self.retry.max_attempts.max(1);
        let budget = self.timeout * attempts;
        let run = async {
            let mut last = LlmError::ProviderUnavailable("no attempt made".into());
            for attempt in 1..=attempts {
                match self.post_once(path, &body).await {
                    Ok(v) => return Ok(v),
                    Err(Failure::Fatal(e)) => return Err(e),
                    Err(Failure::Transient(e)) => {
                        warn!(attempt, error = %e, "transient provider failure");
                        last = e;
                        if attempt < attempts {
                            let backoff = self.retry.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                            tokio::time::sleep(Duration::from_millis(backoff)).await;
                        }
                    }
                }
            }
            Err(last)
        };
        tokio::time::timeout(budget, run)
            .await
            .unwrap_or(Err(LlmError::Timeout(budget.as_millis() as u64)))
    }
}

#[async_trait]
impl LlmProvider for HttpProvider {
    async fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, LlmError> {
        if prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let mut body = json!({
            "model": self.completion_model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if params.json_output {
            body["response_format"] = json!({"type": "json_object"});
        }
        let value = self.post_with_retry("chat/completions", body).await?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::ProviderUnavailable("completion response lacks choices[0].message.content".into()))
    }

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::EmptyText);
        }
        let body = json!({"model": self.embedding_model, "input": text});
        let value = self.post_with_retry("embeddings", body).await?;
        let values: Vec<f64> = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| LlmError::ProviderUnavailable("embedding response lacks data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| LlmError::ProviderUnavailable("non-numeric embedding value".into())))
            .collect::<Result<_, _>>()?;
        EmbeddingVector::new(values).map_err(|e| LlmError::ProviderUnavailable(e.to_string()))
    }
}
