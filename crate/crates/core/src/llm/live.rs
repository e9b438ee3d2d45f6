//! OpenAI-compatible chat-completions backend.

use std::time::Duration;

use serde_json::{json, Value};

use super::{
    check_token_budget, GenerationConfig, PromptMode, PromptRequest, ProviderError, ProviderResponse, Role,
    TextProvider, Usage,
};

#[derive(Debug, Clone)]
pub struct LiveSettings {
    pub api_key: String,
    pub base_url: String,
    pub context_tokens: u64,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl LiveSettings {
    /// Reads `AUTOVIZ_API_KEY` (or `OPENAI_API_KEY`) and `AUTOVIZ_BASE_URL`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let api_key = std::env::var("AUTOVIZ_API_KEY")
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .map_err(|_| ProviderError::Unavailable("AUTOVIZ_API_KEY is not set".into()))?;
        let base_url = std::env::var("AUTOVIZ_BASE_URL").unwrap_or_else(|_| "https://api.openai.com/v1".into());
        Ok(Self { api_key, base_url, context_tokens: 16_384, timeout: Duration::from_secs(120), max_retries: 3 })
    }
}

pub struct LiveProvider {
    settings: LiveSettings,
    agent: ureq::Agent,
}

impl LiveProvider {
    pub fn new(settings: LiveSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { settings, agent }
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        LiveSettings::from_env().map(Self::new)
    }

    fn post(&self, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'));
        let mut delay = Duration::from_millis(500);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {}", self.settings.api_key))
                .send_json(body);
            let retryable = match result {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 200 {
                        return resp
                            .body_mut()
                            .read_json::<Value>()
                            .map_err(|e| ProviderError::Unavailable(format!("invalid response body: {e}")));
                    }
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    if status != 429 && status < 500 {
                        return Err(ProviderError::Unavailable(format!("HTTP {status}: {text}")));
                    }
                    format!("HTTP {status}")
                }
                Err(e) => e.to_string(),
            };
            if attempt > self.settings.max_retries {
                return Err(ProviderError::Unavailable(retryable));
            }
            tracing::warn!(attempt, error = %retryable, "provider call failed, backing off");
            std::thread::sleep(delay);
            delay = (delay * 2).min(Duration::from_secs(8));
        }
    }
}

/// Chat messages for a request. Fill-in-the-middle requests are rendered as
/// an explicit prefix/suffix instruction since chat endpoints have no
/// native infill mode.
pub(crate) fn render_messages(request: &PromptRequest) -> Vec<Value> {
    let mut out = vec![json!({"role": "system", "content": request.system})];
    for m in &request.messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push(json!({"role": role, "content": m.content}));
    }
    if request.mode == PromptMode::FillInMiddle {
        let prefix = request.fim_prefix.as_deref().unwrap_or_default();
        let suffix = request.fim_suffix.as_deref().unwrap_or_default();
        out.push(json!({
            "role": "user",
            "content": format!(
                "<prefix>\n{prefix}</prefix>\n<suffix>\n{suffix}</suffix>\n\
                 Write only the code that goes between <prefix> and <suffix>."
            ),
        }));
    }
    out
}

impl TextProvider for LiveProvider {
    fn generate(&self, request: &PromptRequest, config: &GenerationConfig) -> Result<ProviderResponse, ProviderError> {
        check_token_budget(request, config, self.settings.context_tokens)?;
        let mut body = json!({
            "model": config.model_id,
            "messages": render_messages(request),
            "temperature": config.temperature,
            "n": config.n_candidates,
            "max_tokens": config.max_tokens,
        });
        if let Some(seed) = config.seed {
            body["seed"] = json!(seed);
        }
        let reply = self.post(&body)?;
        let candidates: Vec<String> = reply["choices"]
            .as_array()
            .map(|choices| {
                choices.iter().filter_map(|c| c["message"]["content"].as_str().map(str::to_string)).collect()
            })
            .unwrap_or_default();
        if candidates.is_empty() {
            return Err(ProviderError::EmptyResponse);
        }
        let mut response = ProviderResponse::new(candidates);
        response.usage = Usage {
            prompt_tokens: reply["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: reply["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        if let Some(model) = reply["model"].as_str() {
            response.provider_meta.insert("model".into(), json!(model));
        }
        Ok(response)
    }

    fn name(&self) -> &str {
        "live"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Message;

    #[test]
    fn fim_requests_render_prefix_and_suffix() {
        let req = PromptRequest::fill_in_middle("sys", vec![Message::user("goal")], "PRE", "SUF");
        let msgs = render_messages(&req);
        assert_eq!(msgs.len(), 3);
        let last = msgs[2]["content"].as_str().unwrap();
        assert!(last.contains("PRE") && last.contains("SUF"));
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let provider = LiveProvider::new(LiveSettings {
            api_key: "k".into(),
            base_url: "http://127.0.0.1:9".into(),
            context_tokens: 10_000,
            timeout: Duration::from_secs(2),
            max_retries: 0,
        });
        let req = PromptRequest::completion("s", vec![Message::user("x")]);
        let err = provider.generate(&req, &GenerationConfig::default()).unwrap_err();
        assert!(matches!(err, ProviderError::Unavailable(_)));
    }
}
