//! Chat-completions transport with bounded retries.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{GatewayError, PromptBundle, RawCompletion, Role, ScoutConfig};

const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { base_backoff_ms: 250, max_backoff_ms: 8_000 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based): base * 2^attempt, capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.base_backoff_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_backoff_ms))
    }

    /// Upper bound on the sleep time of a call with `retries` retries.
    pub fn budget(&self, retries: u32) -> Duration {
        (0..retries).map(|a| self.backoff(a)).sum()
    }
}

#[derive(Debug, Default)]
pub struct GatewayMetrics {
    requests: AtomicU64,
    retries: AtomicU64,
    failures: AtomicU64,
    completion_tokens: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub requests: u64,
    pub retries: u64,
    pub failures: u64,
    pub completion_tokens: u64,
}

impl GatewayMetrics {
    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            requests: self.requests.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            failures: self.failures.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    retry: RetryPolicy,
    metrics: Arc<GatewayMetrics>,
}

impl ChatClient {
    pub fn new(retry: RetryPolicy) -> Self {
        ChatClient {
            http: reqwest::Client::new(),
            retry,
            metrics: Arc::new(GatewayMetrics::default()),
        }
    }

    pub fn metrics(&self) -> Arc<GatewayMetrics> {
        Arc::clone(&self.metrics)
    }

    pub async fn query(&self, config: &ScoutConfig, prompt: &PromptBundle) -> Result<RawCompletion, GatewayError> {
        config.validate()?;
        let body = request_body(config, prompt);
        let mut attempt = 0;
        loop {
            self.metrics.requests.fetch_add(1, Ordering::Relaxed);
            match self.send_once(config, &body).await {
                Ok(completion) => {
                    if let Some(n) = completion.completion_tokens {
                        self.metrics.completion_tokens.fetch_add(n, Ordering::Relaxed);
                    }
                    return Ok(completion);
                }
                Err(err) if err.is_retryable() && attempt < config.max_retries => {
                    let delay = self.retry.backoff(attempt);
                    tracing::warn!(scout = %config.name, attempt, ?delay, error = %err, "retrying");
                    self.metrics.retries.fetch_add(1, Ordering::Relaxed);
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
                Err(err) => {
                    self.metrics.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(err);
                }
            }
        }
    }

    async fn send_once(&self, config: &ScoutConfig, body: &Value) -> Result<RawCompletion, GatewayError> {
        let started = Instant::now();
        let mut request = self
            .http
            .post(&config.endpoint_url)
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .json(body);
        if let Some(key) = &config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().await.map_err(|e| classify(e, config.timeout_s))?;
        let status = response.status();
        let text = response.text().await.map_err(|e| classify(e, config.timeout_s))?;
        let latency_s = started.elapsed().as_secs_f64();
        if !status.is_success() {
            return Err(GatewayError::Endpoint {
                status: status.as_u16(),
                body: text.chars().take(BODY_EXCERPT).collect(),
            });
        }
        parse_completion_body(&text, latency_s, &config.model_id)
    }
}

impl Default for ChatClient {
    fn default() -> Self {
        Self::new(RetryPolicy::default())
    }
}

fn classify(err: reqwest::Error, timeout_s: f64) -> GatewayError {
    if err.is_timeout() {
        GatewayError::Timeout(timeout_s)
    } else {
        GatewayError::Transport(err.to_string())
    }
}

/// Convenience wrapper using a default client.
pub async fn query_scout(config: &ScoutConfig, prompt: &PromptBundle) -> Result<RawCompletion, GatewayError> {
    ChatClient::default().query(config, prompt).await
}

pub(crate) fn request_body(config: &ScoutConfig, prompt: &PromptBundle) -> Value {
    let user_content = if prompt.images.is_empty() || config.role == Role::Judge {
        Value::String(prompt.user_text.clone())
    } else {
        let mut parts = vec![json!({"type": "text", "text": prompt.user_text})];
        parts.extend(
            prompt
                .images
                .iter()
                .map(|img| json!({"type": "image_url", "image_url": {"url": img.data_url()}})),
        );
        Value::Array(parts)
    };
    json!({
        "model": config.model_id,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": user_content},
        ],
    })
}

pub(crate) fn parse_completion_body(text: &str, latency_s: f64, model_id: &str) -> Result<RawCompletion, GatewayError> {
    let value: Value = serde_json::from_str(text).map_err(|e| GatewayError::Malformed(e.to_string()))?;
    let message = &value["choices"][0]["message"];
    let content = message["content"]
        .as_str()
        .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))?;
    let reasoning_content = message["reasoning_content"].as_str().map(str::to_string);
    Ok(RawCompletion {
        text: content.to_string(),
        reasoning_content,
        completion_tokens: value["usage"]["completion_tokens"].as_u64(),
        latency_s,
        model_id: value["model"].as_str().unwrap_or(model_id).to_string(),
    })
}
