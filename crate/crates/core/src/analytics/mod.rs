//! The aggregate snapshot and every query the views need.

mod query;
mod snapshot;
mod stats;
mod views;

pub use query::{
    colocate, cumulative, query_counts, timeline, ColocationResult, ColocationRow, Series,
    SeriesPoint, Unavailable,
};
pub use snapshot::{
    build_snapshot, AggregateSnapshot, Period, SnapshotError, SourceTotals, SNAPSHOT_FORMAT,
    SNAPSHOT_VERSION,
};
pub use stats::{average_ranks, spearman, StatError};
pub use views::{meta, query_defaults, render_view, Meta, View, ViewKind};
