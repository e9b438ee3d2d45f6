//! Record/replay of provider traffic.
//!
//! A cassette is a JSON array of `{fingerprint, request_summary, response}`
//! entries. Replay is an exact fingerprint lookup: any change to a prompt,
//! its metadata or its sampling config produces a miss.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    fingerprint, Fingerprint, GenerationConfig, PromptRequest, ProviderError, ProviderResponse, TextProvider, Usage,
};
use crate::text::truncate_chars;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub candidates: Vec<String>,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: Fingerprint,
    pub request_summary: String,
    pub response: RecordedResponse,
}

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("failed to read cassette {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cassette {path} is not valid JSON: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("duplicate fingerprint {0} in cassette")]
    DuplicateFingerprint(Fingerprint),
}

/// In-memory cassette with a fingerprint index.
#[derive(Debug, Clone, Default)]
pub struct Cassette {
    entries: Vec<CassetteEntry>,
    index: HashMap<Fingerprint, usize>,
}

impl Cassette {
    pub fn from_entries(entries: Vec<CassetteEntry>) -> Result<Self, CassetteError> {
        let mut cassette = Cassette::default();
        for entry in entries {
            cassette.insert(entry)?;
        }
        Ok(cassette)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CassetteError> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path)
            .map_err(|source| CassetteError::Io { path: path.display().to_string(), source })?;
        let entries: Vec<CassetteEntry> = serde_json::from_str(&raw)
            .map_err(|source| CassetteError::Parse { path: path.display().to_string(), source })?;
        Self::from_entries(entries)
    }

    /// Loads and merges several cassette files. A fingerprint may appear in
    /// more than one file only with the same recorded response.
    pub fn load_all<P: AsRef<Path>>(paths: &[P]) -> Result<Self, CassetteError> {
        let mut merged = Cassette::default();
        for path in paths {
            for entry in Self::load(path)?.entries {
                if merged.get(&entry.fingerprint).is_some_and(|e| e.response == entry.response) {
                    continue;
                }
                merged.insert(entry)?;
            }
        }
        Ok(merged)
    }

    pub fn insert(&mut self, entry: CassetteEntry) -> Result<(), CassetteError> {
        if self.index.contains_key(&entry.fingerprint) {
            return Err(CassetteError::DuplicateFingerprint(entry.fingerprint));
        }
        self.index.insert(entry.fingerprint.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, fp: &Fingerprint) -> Option<&CassetteEntry> {
        self.index.get(fp).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes entries sorted by fingerprint so re-recording is diff-stable.
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
        let mut body = serde_json::to_string_pretty(&sorted).map_err(std::io::Error::other)?;
        body.push('\n');
        fs::write(path, body)
    }
}

/// One-line human description of a request, stored next to its fingerprint.
pub fn summarize_request(request: &PromptRequest) -> String {
    let task = request.meta("task").unwrap_or("request");
    let mut tags: Vec<String> =
        request.metadata.iter().filter(|(k, _)| k.as_str() != "task").map(|(k, v)| format!("{k}={v}")).collect();
    tags.sort();
    let last = request.messages.last().map(|m| m.content.as_str()).unwrap_or_default();
    let snippet = truncate_chars(&last.split_whitespace().collect::<Vec<_>>().join(" "), 80);
    if tags.is_empty() {
        format!("{task}: {snippet}")
    } else {
        format!("{task} [{}]: {snippet}", tags.join(" "))
    }
}

/// How the replay provider treats fingerprints it has no recording for.
pub enum ReplayMode {
    /// Misses are errors.
    Strict,
    /// Misses are forwarded to a live provider.
    Hybrid(Box<dyn TextProvider>),
}

pub struct ReplayProvider {
    cassette: Cassette,
    mode: ReplayMode,
}

impl ReplayProvider {
    pub fn new(cassette: Cassette) -> Self {
        Self { cassette, mode: ReplayMode::Strict }
    }

    pub fn hybrid(cassette: Cassette, live: Box<dyn TextProvider>) -> Self {
        Self { cassette, mode: ReplayMode::Hybrid(live) }
    }

    pub fn cassette(&self) -> &Cassette {
        &self.cassette
    }
}

impl TextProvider for ReplayProvider {
    fn generate(&self, request: &PromptRequest, config: &GenerationConfig) -> Result<ProviderResponse, ProviderError> {
        let fp = fingerprint(request, config);
        if let Some(entry) = self.cassette.get(&fp) {
            let mut response = ProviderResponse::new(entry.response.candidates.clone());
            response.usage = entry.response.usage;
            response.provider_meta.insert("replayed_fingerprint".into(), serde_json::Value::String(fp.to_string()));
            return Ok(response);
        }
        match &self.mode {
            ReplayMode::Strict => {
                Err(ProviderError::CassetteMiss { fingerprint: fp.to_string(), summary: summarize_request(request) })
            }
            ReplayMode::Hybrid(live) => {
                tracing::warn!(fingerprint = %fp, "cassette miss, forwarding to live provider");
                live.generate(request, config)
            }
        }
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// Wraps a provider and records every successful exchange.
pub struct RecordingProvider<P> {
    inner: P,
    recorded: Mutex<Vec<CassetteEntry>>,
}

impl<P: TextProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, recorded: Mutex::new(Vec::new()) }
    }

    pub fn cassette(&self) -> Cassette {
        let entries = self.recorded.lock().expect("recording lock poisoned").clone();
        Cassette::from_entries(entries).expect("recorder keeps fingerprints unique")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        self.cassette().save(path)
    }
}

impl<P: TextProvider> TextProvider for RecordingProvider<P> {
    fn generate(&self, request: &PromptRequest, config: &GenerationConfig) -> Result<ProviderResponse, ProviderError> {
        let response = self.inner.generate(request, config)?;
        let fp = fingerprint(request, config);
        let mut recorded = self.recorded.lock().expect("recording lock poisoned");
        if !recorded.iter().any(|e| e.fingerprint == fp) {
            recorded.push(CassetteEntry {
                fingerprint: fp,
                request_summary: summarize_request(request),
                response: RecordedResponse { candidates: response.candidates.clone(), usage: response.usage },
            });
        }
        Ok(response)
    }

    fn name(&self) -> &str {
        "recording"
    }
}
