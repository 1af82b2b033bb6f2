//! The model-call boundary.
//!
//! A [`Provider`] turns a [`CompletionRequest`] into a [`CompletionResponse`]
//! with token usage. [`SimProvider`] is a deterministic stand-in whose draws
//! depend only on the request's seed material, model, task and temperature;
//! `HttpProvider` (feature `http`) speaks a minimal chat-completion protocol.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricing::TokenUsage;

#[cfg(feature = "http")]
mod http;
pub mod rng;
mod sim;
mod tokens;

#[cfg(feature = "http")]
pub use http::{EndpointConfig, HttpProvider};
pub use rng::{derive_seed, quantize_temperature, DrawKey};
pub use sim::{
    candidate_text, parse_candidate, sim_success_draws, Clock, ManualClock, RateLimit, SimDraws,
    SimModelSpec, SimProvider, SimTaskSpec, SystemClock, HIDDEN_RESIDUAL_FACTOR, TEMPERATURE_GAIN,
};
pub use tokens::{count_tokens, default_token_count, TokenCounter, Tokenizer};

pub const MAX_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("rate limited after {attempts} attempt(s); retry after {retry_after_ms} ms")]
    RateLimited { retry_after_ms: u64, attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ProviderError {
    /// Short tag stored in ledger records.
    pub fn annotation(&self) -> &'static str {
        match self {
            ProviderError::UnknownModel(_) => "unknown_model",
            ProviderError::RateLimited { .. } => "rate_limited",
            ProviderError::Transport(_) => "transport",
            ProviderError::Auth(_) => "auth",
            ProviderError::InvalidRequest(_) => "invalid_request",
        }
    }

    /// Number of wire attempts made before giving up.
    pub fn attempts(&self) -> u32 {
        match self {
            ProviderError::RateLimited { attempts, .. } => *attempts,
            _ => 1,
        }
    }
}

/// The randomness inputs of one call: run seed, task and attempt index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedMaterial {
    pub run_seed: u64,
    pub task_id: String,
    pub attempt: u32,
}

impl SeedMaterial {
    pub fn new(run_seed: u64, task_id: impl Into<String>, attempt: u32) -> Self {
        SeedMaterial {
            run_seed,
            task_id: task_id.into(),
            attempt,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.task_id.len());
        out.extend_from_slice(&self.run_seed.to_le_bytes());
        out.extend_from_slice(&(self.task_id.len() as u64).to_le_bytes());
        out.extend_from_slice(self.task_id.as_bytes());
        out.extend_from_slice(&self.attempt.to_le_bytes());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    model: String,
    prompt: String,
    temperature: f64,
    max_output_tokens: u64,
    seed: SeedMaterial,
}

impl CompletionRequest {
    pub fn new(
        model: impl Into<String>,
        prompt: impl Into<String>,
        temperature: f64,
        max_output_tokens: u64,
        seed: SeedMaterial,
    ) -> Result<Self, ProviderError> {
        if !(0.0..=MAX_TEMPERATURE).contains(&temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        if max_output_tokens == 0 {
            return Err(ProviderError::InvalidRequest(
                "max_output_tokens must be at least 1".into(),
            ));
        }
        Ok(CompletionRequest {
            model: model.into(),
            prompt: prompt.into(),
            temperature,
            max_output_tokens,
            seed,
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn max_output_tokens(&self) -> u64 {
        self.max_output_tokens
    }

    pub fn seed(&self) -> &SeedMaterial {
        &self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResponse {
    pub text: String,
    pub usage: TokenUsage,
    /// Wall time including any backoff waits.
    pub latency_ms: u64,
    /// Wire attempts, 1 unless the provider retried.
    pub attempts: u32,
}

/// A model endpoint. Implementations must tolerate concurrent calls.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError>;

    fn knows_model(&self, model: &str) -> bool;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        (**self).complete(request)
    }

    fn knows_model(&self, model: &str) -> bool {
        (**self).knows_model(model)
    }
}

impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        (**self).complete(request)
    }

    fn knows_model(&self, model: &str) -> bool {
        (**self).knows_model(model)
    }
}

impl fmt::Display for SeedMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.run_seed, self.task_id, self.attempt)
    }
}
