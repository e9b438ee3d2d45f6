use std::path::{Path, PathBuf};
use std::time::Duration;

use autoviz::vis::ExecLimits;
use serde::{Deserialize, Serialize};

use crate::error::AppError;
use crate::pipeline::PipelineSettings;
use crate::providers::ProviderSettings;

pub const DEFAULT_UPLOAD_CAP: usize = 20 * 1024 * 1024;

/// Service settings. Loaded from a JSON file, then overridden by
/// `AUTOVIZ_*` environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    pub upload_cap_bytes: usize,
    pub session_ttl_secs: f64,
    pub persist_sessions: bool,
    pub exec_timeout_secs: f64,
    pub exec_memory_mb: u64,
    pub styles_path: Option<PathBuf>,
    pub pipeline: PipelineSettings,
    pub providers: ProviderSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("autoviz-data"),
            upload_cap_bytes: DEFAULT_UPLOAD_CAP,
            session_ttl_secs: 3600.0,
            persist_sessions: false,
            exec_timeout_secs: 30.0,
            exec_memory_mb: 512,
            styles_path: None,
            pipeline: PipelineSettings::default(),
            providers: ProviderSettings::default(),
        }
    }
}

fn env_parse<T: std::str::FromStr>(name: &str) -> Result<Option<T>, AppError> {
    match std::env::var(name) {
        Ok(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| AppError::validation("bad_config", format!("{name}={raw:?} is not valid"))),
        Err(_) => Ok(None),
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::validation("bad_config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AppError::validation("bad_config", format!("{}: {e}", path.display())))
    }

    pub fn apply_env(&mut self) -> Result<(), AppError> {
        if let Some(v) = env_parse("AUTOVIZ_BIND")? {
            self.bind = v;
        }
        if let Some(v) = env_parse::<String>("AUTOVIZ_DATA_DIR")? {
            self.data_dir = v.into();
        }
        if let Some(v) = env_parse("AUTOVIZ_UPLOAD_CAP_BYTES")? {
            self.upload_cap_bytes = v;
        }
        if let Some(v) = env_parse("AUTOVIZ_SESSION_TTL_SECS")? {
            self.session_ttl_secs = v;
        }
        if let Some(v) = env_parse("AUTOVIZ_PERSIST_SESSIONS")? {
            self.persist_sessions = v;
        }
        if let Some(v) = env_parse("AUTOVIZ_EXEC_TIMEOUT_SECS")? {
            self.exec_timeout_secs = v;
        }
        if let Some(v) = env_parse("AUTOVIZ_EXEC_MEMORY_MB")? {
            self.exec_memory_mb = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |m: &str| Err(AppError::validation("bad_config", m.to_string()));
        if !(self.session_ttl_secs > 0.0 && self.session_ttl_secs.is_finite()) {
            return bad("session_ttl_secs must be positive");
        }
        if !(self.exec_timeout_secs > 0.0 && self.exec_timeout_secs.is_finite()) {
            return bad("exec_timeout_secs must be positive");
        }
        if self.upload_cap_bytes == 0 {
            return bad("upload_cap_bytes must be positive");
        }
        if self.pipeline.n_goals == 0 {
            return bad("pipeline.n_goals must be at least 1");
        }
        self.pipeline.generation.validate().map_err(AppError::from)
    }

    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs_f64(self.session_ttl_secs)
    }

    pub fn exec_limits(&self) -> ExecLimits {
        ExecLimits { timeout: Duration::from_secs_f64(self.exec_timeout_secs), memory_mb: self.exec_memory_mb }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let config = ServiceConfig::default();
        config.validate().unwrap();
        assert_eq!(config.upload_cap_bytes, 20 * 1024 * 1024);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let config: ServiceConfig =
            serde_json::from_str(r#"{"session_ttl_secs": 5, "pipeline": {"n_goals": 3}}"#).unwrap();
        assert_eq!(config.session_ttl(), Duration::from_secs(5));
        assert_eq!(config.pipeline.n_goals, 3);
        assert_eq!(config.pipeline.sample_n, 5);
    }

    #[test]
    fn zero_ttl_is_rejected() {
        let config = ServiceConfig { session_ttl_secs: 0.0, ..ServiceConfig::default() };
        assert!(config.validate().is_err());
    }
}
