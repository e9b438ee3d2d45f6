//! REST/WebSocket service and CLI plumbing around the autoviz pipeline.

pub mod api;
pub mod config;
pub mod error;
pub mod events;
pub mod pipeline;
pub mod providers;
pub mod session;

pub use api::{router, spawn_sweeper, AppState};
pub use config::ServiceConfig;
pub use error::{AppError, ErrorKind};
pub use providers::{ProviderMode, ProviderSettings, Providers};
