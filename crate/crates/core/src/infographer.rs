//! Stylized infographics: style library, image-to-image request builder and
//! the image-generation provider port.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{canonical_json, ProviderError};

pub const DEFAULT_STRENGTH: f64 = 0.35;
/// Strengths outside this band tend to either ignore the style or lose the
/// data; requests outside it carry a warning.
pub const FAITHFUL_STRENGTH_BAND: (f64, f64) = (0.25, 0.45);
pub const DEFAULT_PROMPT_WORD_CAP: usize = 40;

#[derive(Debug, Error)]
pub enum InfographerError {
    #[error("unknown style {0:?}")]
    UnknownStyle(String),
    #[error("strength {0} outside [0, 1]")]
    StrengthOutOfRange(f64),
    #[error("no style selected and no custom prompt given")]
    NoStyle,
    #[error("base image {path}: {reason}")]
    BadImage { path: String, reason: String },
    #[error("invalid style library: {0}")]
    InvalidLibrary(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleEntry {
    pub id: String,
    pub prompt: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// User-editable set of named style prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StyleLibrary {
    entries: Vec<StyleEntry>,
}

impl StyleLibrary {
    pub fn new(entries: Vec<StyleEntry>) -> Result<Self, InfographerError> {
        let mut ids = HashSet::new();
        for e in &entries {
            if e.id.trim().is_empty() {
                return Err(InfographerError::InvalidLibrary("style with empty id".into()));
            }
            if e.prompt.trim().is_empty() {
                return Err(InfographerError::InvalidLibrary(format!("style {} has an empty prompt", e.id)));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(InfographerError::InvalidLibrary(format!("duplicate style id {}", e.id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn bundled() -> Self {
        Self::from_json(include_str!("../resources/styles/library.json")).expect("bundled style library is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, InfographerError> {
        let entries: Vec<StyleEntry> =
            serde_json::from_str(text).map_err(|e| InfographerError::InvalidLibrary(e.to_string()))?;
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InfographerError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| InfographerError::Io(e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InfographerError> {
        let text = serde_json::to_string_pretty(&self.entries).expect("styles serialize");
        std::fs::write(path.as_ref(), text).map_err(|e| InfographerError::Io(e.to_string()))
    }

    pub fn get(&self, id: &str) -> Option<&StyleEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn entries(&self) -> &[StyleEntry] {
        &self.entries
    }

    /// Adds or replaces an entry.
    pub fn upsert(&mut self, entry: StyleEntry) -> Result<(), InfographerError> {
        let mut entries = self.entries.clone();
        match entries.iter_mut().find(|e| e.id == entry.id) {
            Some(slot) => *slot = entry,
            None => entries.push(entry),
        }
        *self = Self::new(entries)?;
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> bool {
        let before = self.entries.len();
        self.entries.retain(|e| e.id != id);
        self.entries.len() != before
    }
}

impl Default for StyleLibrary {
    fn default() -> Self {
        Self::bundled()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgmRequest {
    pub base_image: PathBuf,
    pub style_prompt: String,
    pub strength: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Set when `strength` lies outside the data-faithful band.
    #[serde(default)]
    pub warning: Option<String>,
}

/// Comma-separated fragments, deduplicated case-insensitively and capped
/// at `word_cap` words (whole fragments only, except that an over-long
/// first fragment is cut).
pub fn compose_style_prompt(parts: &[&str], word_cap: usize) -> String {
    let mut seen = HashSet::new();
    let mut kept: Vec<String> = Vec::new();
    let mut words = 0;
    for fragment in parts.iter().flat_map(|p| p.split(',')) {
        let fragment = fragment.split_whitespace().collect::<Vec<_>>().join(" ");
        if fragment.is_empty() || !seen.insert(fragment.to_lowercase()) {
            continue;
        }
        let n = fragment.split(' ').count();
        if words + n > word_cap {
            if kept.is_empty() {
                kept.push(fragment.split(' ').take(word_cap).collect::<Vec<_>>().join(" "));
            }
            break;
        }
        words += n;
        kept.push(fragment);
    }
    kept.join(", ")
}

pub fn compose_request(
    library: &StyleLibrary,
    artifact: &Path,
    style_ids: &[String],
    custom_prompt: Option<&str>,
    strength: Option<f64>,
    seed: Option<u64>,
) -> Result<IgmRequest, InfographerError> {
    compose_request_capped(library, artifact, style_ids, custom_prompt, strength, seed, DEFAULT_PROMPT_WORD_CAP)
}

pub fn compose_request_capped(
    library: &StyleLibrary,
    artifact: &Path,
    style_ids: &[String],
    custom_prompt: Option<&str>,
    strength: Option<f64>,
    seed: Option<u64>,
    word_cap: usize,
) -> Result<IgmRequest, InfographerError> {
    let strength = strength.unwrap_or(DEFAULT_STRENGTH);
    if !(0.0..=1.0).contains(&strength) {
        return Err(InfographerError::StrengthOutOfRange(strength));
    }
    if !artifact.is_file() {
        return Err(InfographerError::BadImage { path: artifact.display().to_string(), reason: "not found".into() });
    }
    let mut parts: Vec<&str> = Vec::new();
    for id in style_ids {
        let entry = library.get(id).ok_or_else(|| InfographerError::UnknownStyle(id.clone()))?;
        parts.push(&entry.prompt);
    }
    if let Some(custom) = custom_prompt.filter(|c| !c.trim().is_empty()) {
        parts.push(custom);
    }
    let style_prompt = compose_style_prompt(&parts, word_cap);
    if style_prompt.is_empty() {
        return Err(InfographerError::NoStyle);
    }
    let (lo, hi) = FAITHFUL_STRENGTH_BAND;
    let warning = (!(lo..=hi).contains(&strength))
        .then(|| format!("strength {strength} is outside [{lo}, {hi}]; the output may drift from the data"));
    Ok(IgmRequest { base_image: artifact.to_path_buf(), style_prompt, strength, seed, warning })
}

/// Text-conditioned image-to-image model. Input and output are PNG bytes.
pub trait ImageProvider: Send + Sync {
    fn stylize(&self, png: &[u8], prompt: &str, strength: f64, seed: Option<u64>) -> Result<Vec<u8>, ProviderError>;

    fn name(&self) -> &str;
}

/// Returns the input image unchanged.
pub struct IdentityImageProvider;

impl ImageProvider for IdentityImageProvider {
    fn stylize(&self, png: &[u8], _: &str, _: f64, _: Option<u64>) -> Result<Vec<u8>, ProviderError> {
        Ok(png.to_vec())
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Stand-in when no image model is configured.
pub struct UnavailableImageProvider;

impl ImageProvider for UnavailableImageProvider {
    fn stylize(&self, _: &[u8], _: &str, _: f64, _: Option<u64>) -> Result<Vec<u8>, ProviderError> {
        Err(ProviderError::Unavailable("no image generation provider configured".into()))
    }

    fn name(&self) -> &str {
        "unavailable"
    }
}

/// Stable key of an image request.
pub fn image_request_key(png: &[u8], prompt: &str, strength: f64, seed: Option<u64>) -> String {
    let image_sha = hex::encode(Sha256::digest(png));
    let doc = json!({"image_sha256": image_sha, "prompt": prompt, "strength": strength, "seed": seed});
    hex::encode(Sha256::digest(canonical_json(&doc).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageCassetteEntry {
    pub key: String,
    pub prompt: String,
    pub strength: f64,
    pub seed: Option<u64>,
    pub file: String,
}

const IMAGE_INDEX: &str = "index.json";

/// Recorded image responses: `index.json` plus one PNG per entry.
#[derive(Debug, Clone)]
pub struct ReplayImageProvider {
    dir: PathBuf,
    entries: BTreeMap<String, ImageCassetteEntry>,
}

impl ReplayImageProvider {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, InfographerError> {
        let dir = dir.as_ref().to_path_buf();
        let text = std::fs::read_to_string(dir.join(IMAGE_INDEX)).map_err(|e| InfographerError::Io(e.to_string()))?;
        let list: Vec<ImageCassetteEntry> =
            serde_json::from_str(&text).map_err(|e| InfographerError::Io(e.to_string()))?;
        Ok(Self { dir, entries: list.into_iter().map(|e| (e.key.clone(), e)).collect() })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ImageProvider for ReplayImageProvider {
    fn stylize(&self, png: &[u8], prompt: &str, strength: f64, seed: Option<u64>) -> Result<Vec<u8>, ProviderError> {
        let key = image_request_key(png, prompt, strength, seed);
        let entry = self.entries.get(&key).ok_or_else(|| ProviderError::CassetteMiss {
            fingerprint: key.clone(),
            summary: format!("img2img {prompt:?} strength={strength}"),
        })?;
        std::fs::read(self.dir.join(&entry.file))
            .map_err(|e| ProviderError::Unavailable(format!("recorded image {}: {e}", entry.file)))
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// Wraps a provider and writes every response into an image cassette.
pub struct RecordingImageProvider<P> {
    inner: P,
    dir: PathBuf,
    entries: Mutex<BTreeMap<String, ImageCassetteEntry>>,
}

impl<P: ImageProvider> RecordingImageProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into(), entries: Mutex::new(BTreeMap::new()) }
    }

    pub fn save(&self) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let entries: Vec<_> = self.entries.lock().expect("recorder lock").values().cloned().collect();
        std::fs::write(self.dir.join(IMAGE_INDEX), serde_json::to_string_pretty(&entries).expect("index serializes"))
    }
}

impl<P: ImageProvider> ImageProvider for RecordingImageProvider<P> {
    fn stylize(&self, png: &[u8], prompt: &str, strength: f64, seed: Option<u64>) -> Result<Vec<u8>, ProviderError> {
        let out = self.inner.stylize(png, prompt, strength, seed)?;
        let key = image_request_key(png, prompt, strength, seed);
        let file = format!("{}.png", &key[..16]);
        std::fs::create_dir_all(&self.dir).map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        std::fs::write(self.dir.join(&file), &out).map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        self.entries
            .lock()
            .expect("recorder lock")
            .insert(key.clone(), ImageCassetteEntry { key, prompt: prompt.to_string(), strength, seed, file });
        Ok(out)
    }

    fn name(&self) -> &str {
        "recording"
    }
}

/// JSON img2img endpoint: `POST {url}` with
/// `{image, prompt, strength, seed}` (image as base64 PNG), answering
/// `{image}`.
pub struct LiveImageProvider {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl LiveImageProvider {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(300)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { url: url.into(), api_key, agent }
    }

    /// Reads `AUTOVIZ_IGM_URL` and optionally `AUTOVIZ_IGM_API_KEY`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let url = std::env::var("AUTOVIZ_IGM_URL")
            .map_err(|_| ProviderError::Unavailable("AUTOVIZ_IGM_URL is not set".into()))?;
        Ok(Self::new(url, std::env::var("AUTOVIZ_IGM_API_KEY").ok()))
    }
}

impl ImageProvider for LiveImageProvider {
    fn stylize(&self, png: &[u8], prompt: &str, strength: f64, seed: Option<u64>) -> Result<Vec<u8>, ProviderError> {
        let b64 = base64::engine::general_purpose::STANDARD;
        let body = json!({"image": b64.encode(png), "prompt": prompt, "strength": strength, "seed": seed});
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(ProviderError::Unavailable(format!("img2img endpoint answered HTTP {status}")));
        }
        let reply: serde_json::Value =
            resp.body_mut().read_json().map_err(|e| ProviderError::Unavailable(format!("invalid response: {e}")))?;
        let image = reply["image"].as_str().ok_or(ProviderError::EmptyResponse)?;
        b64.decode(image).map_err(|e| ProviderError::Unavailable(format!("invalid base64 image: {e}")))
    }

    fn name(&self) -> &str {
        "live"
    }
}

/// Optional pixel-level touch-up applied after stylization.
pub type PostProcess = dyn Fn(&mut image::RgbaImage) + Send + Sync;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedImage {
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub warning: Option<String>,
}

fn decode(bytes: &[u8], label: &str) -> Result<image::RgbaImage, InfographerError> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map(|img| img.to_rgba8())
        .map_err(|e| InfographerError::BadImage { path: label.to_string(), reason: e.to_string() })
}

/// Runs the request through `provider` and writes a PNG with the base
/// image's dimensions to `out`.
pub fn stylize(
    request: &IgmRequest,
    provider: &dyn ImageProvider,
    out: &Path,
    post_process: Option<&PostProcess>,
) -> Result<StylizedImage, InfographerError> {
    let label = request.base_image.display().to_string();
    let base_bytes = std::fs::read(&request.base_image)
        .map_err(|e| InfographerError::BadImage { path: label.clone(), reason: e.to_string() })?;
    let base = decode(&base_bytes, &label)?;
    let (width, height) = base.dimensions();
    let styled = provider.stylize(&base_bytes, &request.style_prompt, request.strength, request.seed)?;
    let mut styled = decode(&styled, "provider output")?;
    if styled.dimensions() != (width, height) {
        styled = image::imageops::resize(&styled, width, height, image::imageops::FilterType::Lanczos3);
    }
    if let Some(hook) = post_process {
        hook(&mut styled);
    }
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).map_err(|e| InfographerError::Io(e.to_string()))?;
    }
    styled
        .save_with_format(out, image::ImageFormat::Png)
        .map_err(|e| InfographerError::Io(format!("{}: {e}", out.display())))?;
    Ok(StylizedImage { path: out.to_path_buf(), width, height, warning: request.warning.clone() })
}
