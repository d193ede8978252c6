use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{parse_timestamp, IngestError, IngestReport, RejectReason};
use crate::exec::Execution;
use crate::model::{slugify, CategoryId, CategoryRegistry, NeighborhoodId};

/// Canonical crime record fields a CSV header must provide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrimeField {
    IncidentId,
    OccurredAt,
    ReportedAt,
    Category,
    Latitude,
    Longitude,
    Neighborhood,
    PoliceDistrict,
}

impl CrimeField {
    pub const ALL: [CrimeField; 8] = [
        Self::IncidentId,
        Self::OccurredAt,
        Self::ReportedAt,
        Self::Category,
        Self::Latitude,
        Self::Longitude,
        Self::Neighborhood,
        Self::PoliceDistrict,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::IncidentId => "incident_id",
            Self::OccurredAt => "occurred_at",
            Self::ReportedAt => "reported_at",
            Self::Category => "category",
            Self::Latitude => "latitude",
            Self::Longitude => "longitude",
            Self::Neighborhood => "neighborhood",
            Self::PoliceDistrict => "police_district",
        }
    }
}

impl fmt::Display for CrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw CSV header -> canonical field. Header names match after trimming,
/// case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    raw_to_field: BTreeMap<String, CrimeField>,
}

impl ColumnMap {
    pub fn new(raw_to_field: BTreeMap<String, CrimeField>) -> Self {
        Self { raw_to_field }
    }

    /// Column map whose raw headers are the canonical field names.
    pub fn canonical() -> Self {
        Self::new(
            CrimeField::ALL
                .iter()
                .map(|f| (f.as_str().to_string(), *f))
                .collect(),
        )
    }

    fn resolve(&self, headers: &csv::StringRecord) -> Result<[usize; 8], IngestError> {
        let lookup: HashMap<String, CrimeField> = self
            .raw_to_field
            .iter()
            .map(|(raw, f)| (raw.trim().to_lowercase(), *f))
            .collect();
        let mut positions = [usize::MAX; 8];
        for (i, h) in headers.iter().enumerate() {
            if let Some(f) = lookup.get(&h.trim().to_lowercase()) {
                let slot = &mut positions[*f as usize];
                if *slot == usize::MAX {
                    *slot = i;
                }
            }
        }
        for f in CrimeField::ALL {
            if positions[f as usize] == usize::MAX {
                return Err(IngestError::UnmappedColumn(f));
            }
        }
        Ok(positions)
    }
}

/// Maps raw category text onto registry ids: explicit table first, then the
/// slug of the raw text if it is a registry id, then the fallback.
#[derive(Debug, Clone)]
pub struct CategoryNormalizer {
    registry: CategoryRegistry,
    table: HashMap<String, CategoryId>,
    fallback: Option<CategoryId>,
}

impl CategoryNormalizer {
    pub fn new(
        registry: CategoryRegistry,
        table: HashMap<String, CategoryId>,
        fallback: Option<CategoryId>,
    ) -> Self {
        Self {
            registry,
            table,
            fallback,
        }
    }

    pub fn normalize(&self, raw: &str) -> Result<CategoryId, RejectReason> {
        let key = raw.trim().to_lowercase();
        if key.is_empty() {
            return Err(RejectReason::MissingCategory);
        }
        if let Some(id) = self.table.get(&key) {
            return Ok(id.clone());
        }
        let slug = CategoryId::new(slugify(&key));
        if self.registry.contains(&slug) {
            return Ok(slug);
        }
        self.fallback.clone().ok_or(RejectReason::UnmappedCategory)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeIncident {
    pub incident_id: String,
    pub occurred_at: DateTime<Utc>,
    pub reported_at: DateTime<Utc>,
    pub category: CategoryId,
    pub raw_category: String,
    pub neighborhood: Option<NeighborhoodId>,
    pub police_district: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Set when the report predates the occurrence; such rows are kept.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clock_skew: bool,
}

fn parse_coordinate(raw: &str, limit: f64) -> Result<f64, RejectReason> {
    let s = raw.trim();
    if s.is_empty() {
        return Err(RejectReason::MissingCoordinate);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v.abs() <= limit => Ok(v),
        _ => Err(RejectReason::InvalidCoordinate),
    }
}

fn parse_row(
    row: &csv::StringRecord,
    cols: &[usize; 8],
    normalizer: &CategoryNormalizer,
) -> Result<CrimeIncident, RejectReason> {
    let get = |f: CrimeField| row.get(cols[f as usize]).unwrap_or("").trim();

    let incident_id = get(CrimeField::IncidentId);
    if incident_id.is_empty() {
        return Err(RejectReason::MissingField);
    }
    let occurred_at = parse_timestamp(get(CrimeField::OccurredAt)).ok_or(RejectReason::BadTimestamp)?;
    let reported_raw = get(CrimeField::ReportedAt);
    let reported_at = if reported_raw.is_empty() {
        occurred_at
    } else {
        parse_timestamp(reported_raw).ok_or(RejectReason::BadTimestamp)?
    };
    let raw_category = get(CrimeField::Category);
    let category = normalizer.normalize(raw_category)?;
    let latitude = parse_coordinate(get(CrimeField::Latitude), 90.0)?;
    let longitude = parse_coordinate(get(CrimeField::Longitude), 180.0)?;
    let neighborhood = Some(slugify(get(CrimeField::Neighborhood)))
        .filter(|s| !s.is_empty())
        .map(NeighborhoodId::new);

    Ok(CrimeIncident {
        incident_id: incident_id.to_string(),
        occurred_at,
        reported_at,
        category,
        raw_category: raw_category.to_string(),
        neighborhood,
        police_district: get(CrimeField::PoliceDistrict).to_string(),
        latitude,
        longitude,
        clock_skew: reported_at < occurred_at,
    })
}

/// Parses a crime CSV export. Extra columns are ignored; accepted records
/// keep input order.
pub fn parse_crime_csv<R: Read>(
    input: R,
    columns: &ColumnMap,
    normalizer: &CategoryNormalizer,
    exec: Execution,
) -> Result<(Vec<CrimeIncident>, IngestReport), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(IngestError::MissingHeader);
    }
    let cols = columns.resolve(&headers)?;

    let rows: Vec<Option<csv::StringRecord>> = reader.records().map(Result::ok).collect();
    let outcomes = exec.map(&rows, |row| match row {
        Some(r) => parse_row(r, &cols, normalizer),
        None => Err(RejectReason::MalformedRow),
    });
    Ok(IngestReport::tally(outcomes))
}

/// Drops incidents whose raw category contains any exclusion pattern
/// (case-insensitive substring). Returns the retained records, in order, and
/// the number removed.
pub fn filter_minor_traffic(
    incidents: Vec<CrimeIncident>,
    exclusions: &[String],
) -> (Vec<CrimeIncident>, usize) {
    let patterns: Vec<String> = exclusions
        .iter()
        .map(|p| p.trim().to_lowercase())
        .filter(|p| !p.is_empty())
        .collect();
    let before = incidents.len();
    let retained: Vec<CrimeIncident> = incidents
        .into_iter()
        .filter(|i| {
            let raw = i.raw_category.to_lowercase();
            !patterns.iter().any(|p| raw.contains(p.as_str()))
        })
        .collect();
    let removed = before - retained.len();
    (retained, removed)
}
