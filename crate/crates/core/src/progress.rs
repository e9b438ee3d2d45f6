//! Progress events emitted by long-running pipeline stages.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProgressEvent {
    Stage { stage: String, message: String },
    Candidate { candidate_index: usize, status: String, detail: Option<String> },
}

impl ProgressEvent {
    pub fn stage(stage: impl Into<String>, message: impl Into<String>) -> Self {
        ProgressEvent::Stage { stage: stage.into(), message: message.into() }
    }

    pub fn candidate(candidate_index: usize, status: impl Into<String>, detail: Option<String>) -> Self {
        ProgressEvent::Candidate { candidate_index, status: status.into(), detail }
    }
}

pub trait ProgressSink: Send + Sync {
    fn emit(&self, event: ProgressEvent);
}

pub struct NullSink;

impl ProgressSink for NullSink {
    fn emit(&self, _event: ProgressEvent) {}
}

/// Keeps every event in memory.
#[derive(Debug, Clone, Default)]
pub struct CollectingSink(Arc<Mutex<Vec<ProgressEvent>>>);

impl CollectingSink {
    pub fn events(&self) -> Vec<ProgressEvent> {
        self.0.lock().expect("sink lock").clone()
    }
}

impl ProgressSink for CollectingSink {
    fn emit(&self, event: ProgressEvent) {
        self.0.lock().expect("sink lock").push(event);
    }
}

impl<F: Fn(ProgressEvent) + Send + Sync> ProgressSink for F {
    fn emit(&self, event: ProgressEvent) {
        self(event)
    }
}
