//! Automatic visualization pipeline.

pub mod bench;
pub mod goals;
pub mod infographer;
pub mod llm;
pub mod ops;
pub mod progress;
pub mod summary;
#[cfg(feature = "fixture-model")]
pub mod testing;
pub mod text;
pub mod vis;
