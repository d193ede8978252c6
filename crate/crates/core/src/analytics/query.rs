use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::snapshot::AggregateSnapshot;
use super::stats::spearman;
use crate::model::{
    buckets_in_range, AnalyticsQuery, Granularity, NeighborhoodId, QueryError, Source,
    SourceSelector, TimeBucketKey,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub bucket: TimeBucketKey,
    pub count: u64,
}

/// City-wide counts per bucket, contiguous and zero-filled over the query
/// range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Series {
    pub source: Source,
    pub granularity: Granularity,
    pub cumulative: bool,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColocationRow {
    pub neighborhood: NeighborhoodId,
    pub display_name: String,
    pub crime_count: u64,
    pub post_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unavailable {
    pub code: String,
    pub reason: String,
}

/// Per-district crime and post counts with their rank correlation. `rho`
/// is omitted, with `rho_unavailable` explaining why, on degenerate input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColocationResult {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_unavailable: Option<Unavailable>,
    pub rows: Vec<ColocationRow>,
}

/// Query range as calendar dates: the day of `from` through the day holding
/// the last instant before `to`.
fn date_bounds(q: &AnalyticsQuery) -> (NaiveDate, NaiveDate) {
    (
        q.from.date_naive(),
        (q.to - Duration::nanoseconds(1)).date_naive(),
    )
}

fn single_source(q: &AnalyticsQuery) -> Result<Source, QueryError> {
    q.source
        .single()
        .ok_or_else(|| QueryError::UnknownSource(q.source.as_str().to_string()))
}

fn category_positions(s: &AggregateSnapshot, q: &AnalyticsQuery) -> Result<Vec<usize>, QueryError> {
    q.validate(s.registry())?;
    Ok(match &q.category {
        Some(c) => vec![s.registry().position(c).expect("validated")],
        None => (0..s.registry().len()).collect(),
    })
}

/// Per-district totals over the query range, every district present.
/// `source` must be a single source.
pub fn query_counts(
    s: &AggregateSnapshot,
    q: &AnalyticsQuery,
) -> Result<BTreeMap<NeighborhoodId, u64>, QueryError> {
    let categories = category_positions(s, q)?;
    let source = single_source(q)?;
    let (start, end) = date_bounds(q);
    let span = s.day_span(start, end);
    Ok(s
        .neighborhoods()
        .iter()
        .enumerate()
        .map(|(d, n)| {
            let total = span.map_or(0, |(lo, hi)| {
                categories.iter().map(|&c| s.row_sum(source, d, c, lo, hi)).sum()
            });
            (n.id.clone(), total)
        })
        .collect())
}

/// One city-wide series per selected source at the query granularity.
/// Buckets straddling a range edge count only the days inside the range.
pub fn timeline(s: &AggregateSnapshot, q: &AnalyticsQuery) -> Result<Vec<Series>, QueryError> {
    let categories = category_positions(s, q)?;
    let (start, end) = date_bounds(q);
    let buckets = buckets_in_range(q.from, q.to, q.granularity).map_err(|_| QueryError::InvalidRange {
        from: q.from.to_rfc3339(),
        to: q.to.to_rfc3339(),
    })?;
    let districts = s.neighborhoods().len();
    Ok(q.source
        .sources()
        .iter()
        .map(|&source| {
            let points = buckets
                .iter()
                .map(|b| {
                    let lo = b.start().max(start);
                    let hi = (b.end() - Duration::days(1)).min(end);
                    let count = s.day_span(lo, hi).map_or(0, |(lo, hi)| {
                        (0..districts)
                            .flat_map(|d| categories.iter().map(move |&c| (d, c)))
                            .map(|(d, c)| s.row_sum(source, d, c, lo, hi))
                            .sum()
                    });
                    SeriesPoint { bucket: *b, count }
                })
                .collect();
            Series {
                source,
                granularity: q.granularity,
                cumulative: false,
                points,
            }
        })
        .collect())
}

/// Running totals: point i holds the sum of input points 0..=i.
pub fn cumulative(series: &Series) -> Series {
    let mut acc = 0u64;
    Series {
        cumulative: true,
        points: series
            .points
            .iter()
            .map(|p| {
                acc += p.count;
                SeriesPoint {
                    bucket: p.bucket,
                    count: acc,
                }
            })
            .collect(),
        ..series.clone()
    }
}

/// Joins crime and post district counts for the query (its `source` is
/// ignored) and correlates them.
pub fn colocate(s: &AggregateSnapshot, q: &AnalyticsQuery) -> Result<ColocationResult, QueryError> {
    let crimes = query_counts(s, &AnalyticsQuery { source: SourceSelector::Crime, ..q.clone() })?;
    let posts = query_counts(s, &AnalyticsQuery { source: SourceSelector::Post, ..q.clone() })?;
    let rows: Vec<ColocationRow> = s
        .neighborhoods()
        .iter()
        .map(|n| ColocationRow {
            neighborhood: n.id.clone(),
            display_name: n.display_name.clone(),
            crime_count: crimes[&n.id],
            post_count: posts[&n.id],
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.crime_count as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.post_count as f64).collect();
    let (rho, rho_unavailable) = match spearman(&xs, &ys) {
        Ok(r) => (Some(r), None),
        Err(e) => (
            None,
            Some(Unavailable {
                code: e.code().to_string(),
                reason: e.to_string(),
            }),
        ),
    };
    Ok(ColocationResult {
        n: rows.len(),
        rho,
        rho_unavailable,
        rows,
    })
}
