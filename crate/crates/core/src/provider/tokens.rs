use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Exact tokenizer for one model.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

impl<F: Fn(&str) -> u64 + Send + Sync> Tokenizer for F {
    fn count(&self, text: &str) -> u64 {
        self(text)
    }
}

/// One token per four bytes, rounded up.
pub fn default_token_count(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

/// Token counting with per-model overrides and a byte-length fallback.
#[derive(Clone, Default)]
pub struct TokenCounter {
    overrides: BTreeMap<String, Arc<dyn Tokenizer>>,
}

impl TokenCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_override(
        mut self,
        model: impl Into<String>,
        tokenizer: impl Tokenizer + 'static,
    ) -> Self {
        self.overrides.insert(model.into(), Arc::new(tokenizer));
        self
    }

    pub fn count(&self, text: &str, model: &str) -> u64 {
        match self.overrides.get(model) {
            Some(t) => t.count(text),
            None => default_token_count(text),
        }
    }
}

impl fmt::Debug for TokenCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TokenCounter")
            .field("overrides", &self.overrides.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Default-heuristic count, independent of model.
pub fn count_tokens(text: &str, _model: &str) -> u64 {
    default_token_count(text)
}
