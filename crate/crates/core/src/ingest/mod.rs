//! Parsing and validation of the three input files.
//!
//! Malformed data rows are rejected one at a time and tallied by reason in an
//! [`IngestReport`]; only structural problems (no header, an unmapped
//! required column, broken GeoJSON) abort a parse.

mod crime;
mod districts;
mod posts;
mod timestamp;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crime::{
    filter_minor_traffic, parse_crime_csv, CategoryNormalizer, ColumnMap, CrimeField,
    CrimeIncident,
};
pub use districts::parse_neighborhoods;
pub use posts::{parse_posts, PostRecord};
pub use timestamp::parse_timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    MissingCoordinate,
    InvalidCoordinate,
    BadTimestamp,
    MissingCategory,
    UnmappedCategory,
    MissingField,
    MalformedRow,
    BadJson,
    EmptyPost,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MissingCoordinate => "missing-coordinate",
            Self::InvalidCoordinate => "invalid-coordinate",
            Self::BadTimestamp => "bad-timestamp",
            Self::MissingCategory => "missing-category",
            Self::UnmappedCategory => "unmapped-category",
            Self::MissingField => "missing-field",
            Self::MalformedRow => "malformed-row",
            Self::BadJson => "bad-json",
            Self::EmptyPost => "empty-post",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Row accounting for one parse. `rows_read = rows_accepted + rows_rejected`
/// and the reason counts sum to `rows_rejected`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rows_rejected: usize,
    pub rejection_reasons: BTreeMap<String, usize>,
}

impl IngestReport {
    pub(crate) fn tally<T>(outcomes: Vec<Result<T, RejectReason>>) -> (Vec<T>, IngestReport) {
        let mut report = IngestReport {
            rows_read: outcomes.len(),
            ..Default::default()
        };
        let mut accepted = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            match outcome {
                Ok(v) => accepted.push(v),
                Err(reason) => {
                    report.rows_rejected += 1;
                    *report
                        .rejection_reasons
                        .entry(reason.as_str().to_string())
                        .or_default() += 1;
                }
            }
        }
        report.rows_accepted = accepted.len();
        (accepted, report)
    }

    pub fn is_conserved(&self) -> bool {
        self.rows_read == self.rows_accepted + self.rows_rejected
            && self.rejection_reasons.values().sum::<usize>() == self.rows_rejected
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input has no header row")]
    MissingHeader,
    #[error("required column for {0} is not present in the header")]
    UnmappedColumn(CrimeField),
    #[error("reading input: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid GeoJSON: {0}")]
    InvalidGeoJson(String),
    #[error("feature {feature}: ring {ring} is not closed")]
    OpenRing { feature: String, ring: usize },
    #[error("feature {feature}: ring {ring} has fewer than 4 positions")]
    ShortRing { feature: String, ring: usize },
    #[error("feature #{0} has no name property")]
    MissingName(usize),
    #[error("duplicate district slug {0:?}")]
    DuplicateSlug(String),
}
