use std::sync::{Arc, Mutex};

use super::{fingerprint, Fingerprint, GenerationConfig, PromptRequest, ProviderError, ProviderResponse, TextProvider};

type Script = dyn Fn(&PromptRequest, &GenerationConfig) -> Result<ProviderResponse, ProviderError> + Send + Sync;

/// Provider backed by a closure. Used for fault injection and unit tests.
pub struct ScriptedProvider {
    script: Box<Script>,
}

impl ScriptedProvider {
    pub fn new<F>(script: F) -> Self
    where
        F: Fn(&PromptRequest, &GenerationConfig) -> Result<ProviderResponse, ProviderError> + Send + Sync + 'static,
    {
        Self { script: Box::new(script) }
    }

    /// Always answers with the same single text.
    pub fn constant(reply: impl Into<String>) -> Self {
        let reply = reply.into();
        Self::new(move |_, _| Ok(ProviderResponse::new(vec![reply.clone()])))
    }

    pub fn unavailable() -> Self {
        Self::new(|_, _| Err(ProviderError::Unavailable("scripted outage".into())))
    }
}

impl TextProvider for ScriptedProvider {
    fn generate(&self, request: &PromptRequest, config: &GenerationConfig) -> Result<ProviderResponse, ProviderError> {
        (self.script)(request, config)
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[derive(Debug, Clone)]
pub struct LoggedCall {
    pub task: Option<String>,
    pub fingerprint: Fingerprint,
    pub request: PromptRequest,
}

/// Shared, append-only list of calls observed by a [`LoggingProvider`].
#[derive(Debug, Clone, Default)]
pub struct CallLog(Arc<Mutex<Vec<LoggedCall>>>);

impl CallLog {
    pub fn len(&self) -> usize {
        self.0.lock().expect("call log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn calls(&self) -> Vec<LoggedCall> {
        self.0.lock().expect("call log poisoned").clone()
    }

    pub fn count_task(&self, task: &str) -> usize {
        self.0.lock().expect("call log poisoned").iter().filter(|c| c.task.as_deref() == Some(task)).count()
    }

    pub fn clear(&self) {
        self.0.lock().expect("call log poisoned").clear();
    }
}

/// Pass-through provider that logs every call.
pub struct LoggingProvider<P> {
    inner: P,
    log: CallLog,
}

impl<P: TextProvider> LoggingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, log: CallLog::default() }
    }

    pub fn log(&self) -> CallLog {
        self.log.clone()
    }
}

impl<P: TextProvider> TextProvider for LoggingProvider<P> {
    fn generate(&self, request: &PromptRequest, config: &GenerationConfig) -> Result<ProviderResponse, ProviderError> {
        self.log.0.lock().expect("call log poisoned").push(LoggedCall {
            task: request.meta("task").map(str::to_string),
            fingerprint: fingerprint(request, config),
            request: request.clone(),
        });
        self.inner.generate(request, config)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
