//! Blocking client for chat-completion style endpoints.
//!
//! Wire format: `POST {base_url}/chat/completions` with
//! `{"model", "messages": [{"role": "user", "content"}], "temperature", "max_tokens", "seed"}`;
//! the reply must carry `choices[0].message.content` and
//! `usage.{prompt_tokens, completion_tokens}`.

use std::collections::BTreeMap;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::rng::derive_seed;
use super::{CompletionRequest, CompletionResponse, Provider, ProviderError};
use crate::pricing::TokenUsage;

fn default_retry_budget() -> u32 {
    3
}

fn default_backoff_base_ms() -> u64 {
    500
}

fn default_backoff_max_ms() -> u64 {
    30_000
}

fn default_timeout_ms() -> u64 {
    60_000
}

/// Endpoint settings. The credential is referenced by environment variable
/// name and read at call time; the secret itself never appears in config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    /// Ledger model id to the id sent on the wire.
    pub models: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
    /// Retries after the first attempt when rate limited.
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_max_ms")]
    pub backoff_max_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            models: BTreeMap::new(),
            credential_env: None,
            retry_budget: default_retry_budget(),
            backoff_base_ms: default_backoff_base_ms(),
            backoff_max_ms: default_backoff_max_ms(),
            timeout_ms: default_timeout_ms(),
        }
    }

    pub fn with_model(mut self, id: impl Into<String>, remote: impl Into<String>) -> Self {
        self.models.insert(id.into(), remote.into());
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::InvalidRequest(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| ProviderError::InvalidRequest(format!("{}: {e}", path.display())))
    }

    /// Wait before retry number `retry` (1-based), honoring a server hint.
    pub fn backoff_ms(&self, retry: u32, retry_after_ms: Option<u64>) -> u64 {
        let exp = self
            .backoff_base_ms
            .saturating_mul(1u64 << (retry - 1).min(32));
        exp.max(retry_after_ms.unwrap_or(0))
            .min(self.backoff_max_ms)
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 1],
    temperature: f64,
    max_tokens: u64,
    seed: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: WireUsage,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Debug)]
pub struct HttpProvider {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .new_agent();
        HttpProvider { config, agent }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn credential(&self) -> Result<Option<String>, ProviderError> {
        match &self.config.credential_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ProviderError::Auth(format!("environment variable {var} is not set"))),
        }
    }
}

fn retry_after_header(response: &ureq::http::Response<ureq::Body>) -> Option<u64> {
    let raw = response.headers().get("retry-after")?.to_str().ok()?;
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|s| *s >= 0.0)
        .map(|s| (s * 1000.0) as u64)
}

impl Provider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        let remote = self
            .config
            .models
            .get(request.model())
            .ok_or_else(|| ProviderError::UnknownModel(request.model().into()))?;
        let credential = self.credential()?;
        let body = serde_json::to_string(&WireRequest {
            model: remote,
            messages: [WireMessage {
                role: "user",
                content: request.prompt(),
            }],
            temperature: request.temperature(),
            max_tokens: request.max_output_tokens(),
            seed: derive_seed(&[&request.seed().to_bytes()]) >> 1,
        })
        .expect("request serializes");
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let started = Instant::now();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let mut call = self
                .agent
                .post(&url)
                .header("content-type", "application/json");
            if let Some(token) = &credential {
                call = call.header("authorization", &format!("Bearer {token}"));
            }
            let mut response = call
                .send(body.as_str())
                .map_err(|e| ProviderError::Transport(e.to_string()))?;
            let status = response.status().as_u16();
            match status {
                200..=299 => {
                    let text = response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| ProviderError::Transport(e.to_string()))?;
                    let wire: WireResponse = serde_json::from_str(&text).map_err(|e| {
                        ProviderError::Transport(format!("malformed completion: {e}"))
                    })?;
                    let content = wire
                        .choices
                        .into_iter()
                        .next()
                        .ok_or_else(|| {
                            ProviderError::Transport("completion has no choices".into())
                        })?
                        .message
                        .content
                        .unwrap_or_default();
                    return Ok(CompletionResponse {
                        text: content,
                        usage: TokenUsage::new(
                            wire.usage.prompt_tokens,
                            wire.usage.completion_tokens,
                        ),
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts,
                    });
                }
                429 => {
                    let hint = retry_after_header(&response);
                    if attempts > self.config.retry_budget {
                        return Err(ProviderError::RateLimited {
                            retry_after_ms: hint.unwrap_or(self.config.backoff_ms(attempts, None)),
                            attempts,
                        });
                    }
                    thread::sleep(Duration::from_millis(
                        self.config.backoff_ms(attempts, hint),
                    ));
                }
                401 | 403 => return Err(ProviderError::Auth(format!("HTTP {status}"))),
                _ => {
                    let detail = response.body_mut().read_to_string().unwrap_or_default();
                    let detail: String = detail.chars().take(200).collect();
                    return Err(ProviderError::Transport(format!("HTTP {status}: {detail}")));
                }
            }
        }
    }

    fn knows_model(&self, model: &str) -> bool {
        self.config.models.contains_key(model)
    }
}
