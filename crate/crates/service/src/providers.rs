use std::path::{Path, PathBuf};
use std::sync::Arc;

use autoviz::infographer::{
    IdentityImageProvider, ImageProvider, LiveImageProvider, ReplayImageProvider, UnavailableImageProvider,
};
use autoviz::llm::{Cassette, LiveProvider, ReplayProvider, TextProvider};
use autoviz::summary::DatasetSummary;
use autoviz::testing::{FixtureImageModel, FixtureModel};
use serde::{Deserialize, Serialize};

use crate::error::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    /// OpenAI-compatible chat endpoint.
    Live,
    /// Recorded cassettes only; misses are errors.
    Replay,
    /// Cassettes first, live endpoint on a miss.
    Hybrid,
    /// Built-in deterministic model for demos and tests.
    Fixture,
}

/// Provider settings as given on the command line or in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub mode: ProviderMode,
    pub cassettes: Vec<PathBuf>,
    pub image_cassette: Option<PathBuf>,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self { mode: ProviderMode::Live, cassettes: Vec::new(), image_cassette: None }
    }
}

/// Text and image backends of one service or CLI run.
#[derive(Clone)]
pub struct Providers {
    pub text: Arc<dyn TextProvider>,
    pub image: Arc<dyn ImageProvider>,
    fixture: Option<Arc<FixtureModel>>,
}

impl Providers {
    pub fn new(text: Arc<dyn TextProvider>, image: Arc<dyn ImageProvider>) -> Self {
        Self { text, image, fixture: None }
    }

    /// `text` answers requests; `fixture` (usually wrapped inside `text`)
    /// learns every dataset the pipeline loads.
    pub fn with_fixture(
        text: Arc<dyn TextProvider>,
        fixture: Arc<FixtureModel>,
        image: Arc<dyn ImageProvider>,
    ) -> Self {
        Self { text, image, fixture: Some(fixture) }
    }

    pub fn fixture() -> Self {
        let model = Arc::new(FixtureModel::new());
        Self::with_fixture(model.clone(), model, Arc::new(FixtureImageModel))
    }

    pub fn build(settings: &ProviderSettings) -> Result<Self, AppError> {
        let cassette = || -> Result<Cassette, AppError> {
            if settings.cassettes.is_empty() {
                return Err(AppError::validation("missing_cassette", "replay needs at least one --cassette"));
            }
            Cassette::load_all(&settings.cassettes).map_err(|e| AppError::validation("bad_cassette", e.to_string()))
        };
        let image = |live: bool| -> Result<Arc<dyn ImageProvider>, AppError> {
            if let Some(dir) = &settings.image_cassette {
                return Ok(Arc::new(ReplayImageProvider::load(dir)?));
            }
            if live {
                return Ok(match LiveImageProvider::from_env() {
                    Ok(p) => Arc::new(p),
                    Err(_) => Arc::new(UnavailableImageProvider),
                });
            }
            Ok(Arc::new(IdentityImageProvider))
        };
        Ok(match settings.mode {
            ProviderMode::Fixture => Self::fixture(),
            ProviderMode::Live => Self::new(Arc::new(LiveProvider::from_env()?), image(true)?),
            ProviderMode::Replay => Self::new(Arc::new(ReplayProvider::new(cassette()?)), image(false)?),
            ProviderMode::Hybrid => {
                let live = LiveProvider::from_env()?;
                Self::new(Arc::new(ReplayProvider::hybrid(cassette()?, Box::new(live))), image(true)?)
            }
        })
    }

    /// Tells the fixture model, if any, about a freshly profiled dataset.
    pub fn observe(&self, summary: &DatasetSummary) {
        if let Some(fixture) = &self.fixture {
            fixture.register(summary.clone());
        }
    }

    pub fn name(&self) -> &str {
        self.text.name()
    }
}

pub fn cassette_paths(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths)
}
