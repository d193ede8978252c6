//! Ingest, placement, classification and aggregation engine for
//! co-locating crime-related social posts with official incident records.
//!
//! The pipeline is: parse inputs ([`ingest`]), assign districts
//! ([`locate`]) and crime types ([`classify`]), then fold everything into
//! an immutable [`analytics::AggregateSnapshot`] answered by the query
//! functions in [`analytics`].

pub mod analytics;
pub mod classify;
pub mod config;
pub mod exec;
pub mod ingest;
pub mod locate;
pub mod model;
pub mod pipeline;

pub use analytics::{AggregateSnapshot, View, ViewKind};
pub use config::Settings;
pub use exec::Execution;
pub use pipeline::{IngestInputs, IngestSummary, RecordStore};
