//! Shared domain vocabulary: identifiers, calendar buckets and the query shape.

mod ids;
mod query;
mod time;

use chrono::{DateTime, Utc};
use thiserror::Error;

pub use ids::{slugify, Category, CategoryId, CategoryRegistry, NeighborhoodId, REQUIRED_CATEGORIES};
pub use query::{
    parse_query_instant, AnalyticsQuery, QueryDefaults, QueryParams, Source, SourceSelector,
};
pub use time::{
    bucket_of, bucket_of_date, buckets_in_range, midnight, Granularity, TimeBucketKey,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("empty time range: {from} is not before {to}")]
    EmptyRange { from: DateTime<Utc>, to: DateTime<Utc> },
    #[error("invalid granularity {0:?}")]
    InvalidGranularity(String),
    #[error("invalid {granularity} bucket key {key:?}")]
    InvalidBucketKey { granularity: Granularity, key: String },
    #[error("invalid category id {0:?}")]
    InvalidCategoryId(String),
    #[error("duplicate category {0:?}")]
    DuplicateCategory(String),
    #[error("category registry lacks required category {0:?}")]
    MissingRequiredCategory(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
}

/// Errors raised while validating or answering an [`AnalyticsQuery`].
/// Each variant maps onto one stable machine code.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("invalid time range: from {from} to {to}")]
    InvalidRange { from: String, to: String },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("unknown or unsupported source {0:?}")]
    UnknownSource(String),
    #[error("invalid value {value:?} for parameter {name}")]
    InvalidParameter { name: &'static str, value: String },
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::InvalidRange { .. } => "invalid-range",
            QueryError::UnknownCategory(_) => "unknown-category",
            QueryError::UnknownSource(_) => "unknown-source",
            QueryError::InvalidParameter { .. } => "invalid-parameter",
        }
    }
}
