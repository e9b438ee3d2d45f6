//! Provider port for text-generation models.
//!
//! Every model call in the pipeline goes through [`TextProvider`]. Besides
//! the HTTP-backed [`LiveProvider`], the port ships a [`ReplayProvider`] that
//! answers from recorded cassettes so the whole pipeline runs offline and
//! deterministically.

mod cassette;
mod fingerprint;
mod live;
mod score;
mod scripted;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{
    Cassette, CassetteEntry, CassetteError, RecordedResponse, RecordingProvider, ReplayMode, ReplayProvider,
};
pub use fingerprint::{canonical_json, fingerprint, Fingerprint};
pub use live::{LiveProvider, LiveSettings};
pub use score::{correctness_prompt, parse_probability, score_correctness, ScoreError};
pub use scripted::{CallLog, LoggedCall, LoggingProvider, ScriptedProvider};

/// Sampling parameters for one provider call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub n_candidates: u32,
    pub max_tokens: u32,
    pub model_id: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { temperature: 0.0, n_candidates: 1, max_tokens: 1024, model_id: "gpt-3.5-turbo".to_string(), seed: None }
    }
}

impl GenerationConfig {
    /// Reproducibility preset used for benchmarking: greedy decoding, a
    /// single sample.
    pub fn benchmark() -> Self {
        Self::default()
    }

    pub fn with_candidates(mut self, n: u32) -> Self {
        self.n_candidates = n;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(0.0..=2.0).contains(&self.temperature) || self.temperature.is_nan() {
            return Err(ProviderError::InvalidConfig(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.n_candidates == 0 {
            return Err(ProviderError::InvalidConfig("n_candidates must be >= 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidConfig("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Completion,
    FillInMiddle,
}

/// A model request. In fill-in-the-middle mode the provider must return
/// only the text that belongs between `fim_prefix` and `fim_suffix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub system: String,
    pub messages: Vec<Message>,
    pub mode: PromptMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fim_prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fim_suffix: Option<String>,
    /// Routing hints (task, dataset, grammar...). Key order is not significant.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub metadata: IndexMap<String, String>,
}

impl PromptRequest {
    pub fn completion(system: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            system: system.into(),
            messages,
            mode: PromptMode::Completion,
            fim_prefix: None,
            fim_suffix: None,
            metadata: IndexMap::new(),
        }
    }

    pub fn fill_in_middle(
        system: impl Into<String>,
        messages: Vec<Message>,
        prefix: impl Into<String>,
        suffix: impl Into<String>,
    ) -> Self {
        Self {
            system: system.into(),
            messages,
            mode: PromptMode::FillInMiddle,
            fim_prefix: Some(prefix.into()),
            fim_suffix: Some(suffix.into()),
            metadata: IndexMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Concatenated text of every part of the prompt, in order.
    pub fn full_text(&self) -> String {
        let mut out = self.system.clone();
        for m in &self.messages {
            out.push('\n');
            out.push_str(&m.content);
        }
        for part in [&self.fim_prefix, &self.fim_suffix].into_iter().flatten() {
            out.push('\n');
            out.push_str(part);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let has_fim = self.fim_prefix.is_some() && self.fim_suffix.is_some();
        let any_fim = self.fim_prefix.is_some() || self.fim_suffix.is_some();
        match self.mode {
            PromptMode::FillInMiddle if !has_fim => {
                Err(ProviderError::MalformedRequest("fill_in_middle requires both fim_prefix and fim_suffix".into()))
            }
            PromptMode::Completion if any_fim => Err(ProviderError::MalformedRequest(
                "fim_prefix/fim_suffix are only valid in fill_in_middle mode".into(),
            )),
            _ if self.messages.is_empty() => Err(ProviderError::MalformedRequest("request has no messages".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub candidates: Vec<String>,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub provider_meta: BTreeMap<String, serde_json::Value>,
}

impl ProviderResponse {
    pub fn new(candidates: Vec<String>) -> Self {
        Self { candidates, usage: Usage::default(), provider_meta: BTreeMap::new() }
    }

    pub fn first(&self) -> &str {
        self.candidates.first().map(String::as_str).unwrap_or_default()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("no cassette entry for fingerprint {fingerprint} ({summary})")]
    CassetteMiss { fingerprint: String, summary: String },
    #[error("token budget exceeded: ~{estimated} tokens requested, limit {limit}")]
    TokenBudgetExceeded { estimated: u64, limit: u64 },
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("provider returned no candidates")]
    EmptyResponse,
}

impl ProviderError {
    /// Stable class name used in API error bodies.
    pub fn class(&self) -> &'static str {
        match self {
            ProviderError::Unavailable(_) => "provider_unavailable",
            ProviderError::CassetteMiss { .. } => "cassette_miss",
            ProviderError::TokenBudgetExceeded { .. } => "token_budget_exceeded",
            ProviderError::MalformedRequest(_) => "malformed_request",
            ProviderError::InvalidConfig(_) => "invalid_config",
            ProviderError::EmptyResponse => "empty_response",
        }
    }
}

/// A text-generation backend. Implementations must tolerate concurrent
/// calls.
pub trait TextProvider: Send + Sync {
    fn generate(&self, request: &PromptRequest, config: &GenerationConfig) -> Result<ProviderResponse, ProviderError>;

    fn name(&self) -> &str {
        "provider"
    }
}

impl<P: TextProvider + ?Sized> TextProvider for std::sync::Arc<P> {
    fn generate(&self, request: &PromptRequest, config: &GenerationConfig) -> Result<ProviderResponse, ProviderError> {
        (**self).generate(request, config)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<P: TextProvider + ?Sized> TextProvider for &P {
    fn generate(&self, request: &PromptRequest, config: &GenerationConfig) -> Result<ProviderResponse, ProviderError> {
        (**self).generate(request, config)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Validated call into a provider. All pipeline modules go through this so
/// the request/config contracts and the candidate cap hold for every
/// backend.
pub fn generate(
    provider: &dyn TextProvider,
    request: &PromptRequest,
    config: &GenerationConfig,
) -> Result<ProviderResponse, ProviderError> {
    request.validate()?;
    config.validate()?;
    let mut response = provider.generate(request, config)?;
    response.candidates.truncate(config.n_candidates as usize);
    if response.candidates.is_empty() {
        return Err(ProviderError::EmptyResponse);
    }
    Ok(response)
}

/// Rough token estimate (4 characters per token) used for budget checks.
pub fn estimate_tokens(request: &PromptRequest) -> u64 {
    (request.full_text().chars().count() as u64).div_ceil(4)
}

/// Rejects requests whose prompt plus completion budget exceeds `limit`.
pub fn check_token_budget(request: &PromptRequest, config: &GenerationConfig, limit: u64) -> Result<(), ProviderError> {
    let estimated = estimate_tokens(request) + u64::from(config.max_tokens);
    if estimated > limit {
        return Err(ProviderError::TokenBudgetExceeded { estimated, limit });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fim_fields_must_match_mode() {
        let mut req = PromptRequest::completion("s", vec![Message::user("hi")]);
        assert!(req.validate().is_ok());
        req.fim_prefix = Some("p".into());
        assert!(matches!(req.validate(), Err(ProviderError::MalformedRequest(_))));
        let fim = PromptRequest::fill_in_middle("s", vec![Message::user("hi")], "p", "q");
        assert!(fim.validate().is_ok());
        let mut broken = fim.clone();
        broken.fim_suffix = None;
        assert!(broken.validate().is_err());
    }

    #[test]
    fn config_invariants() {
        assert!(GenerationConfig::default().validate().is_ok());
        assert_eq!(GenerationConfig::benchmark().temperature, 0.0);
        assert_eq!(GenerationConfig::benchmark().n_candidates, 1);
        assert!(GenerationConfig::default().with_temperature(-0.1).validate().is_err());
        assert!(GenerationConfig::default().with_candidates(0).validate().is_err());
    }

    #[test]
    fn generate_caps_candidate_count() {
        let provider =
            ScriptedProvider::new(|_, _| Ok(ProviderResponse::new(vec!["a".into(), "b".into(), "c".into()])));
        let req = PromptRequest::completion("s", vec![Message::user("x")]);
        let out = generate(&provider, &req, &GenerationConfig::default().with_candidates(2)).unwrap();
        assert_eq!(out.candidates, vec!["a", "b"]);
    }

    #[test]
    fn token_budget() {
        let req = PromptRequest::completion("s", vec![Message::user("x".repeat(400))]);
        let cfg = GenerationConfig { max_tokens: 10, ..Default::default() };
        assert!(check_token_budget(&req, &cfg, 200).is_ok());
        assert!(matches!(check_token_budget(&req, &cfg, 50), Err(ProviderError::TokenBudgetExceeded { .. })));
    }
}
