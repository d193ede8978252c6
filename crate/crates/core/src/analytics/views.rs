//! Query-string level entry points shared by the HTTP API and the CLI
//! export, so both serialize exactly the same values.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::query::{colocate, cumulative, query_counts, timeline, ColocationResult, Series};
use super::snapshot::{AggregateSnapshot, Period, SourceTotals};
use crate::model::{
    Category, Granularity, NeighborhoodId, QueryDefaults, QueryError, QueryParams, Source,
    SourceSelector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewKind {
    Aggregate,
    Timeline,
    Colocate,
}

impl ViewKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::Aggregate => "aggregate",
            ViewKind::Timeline => "timeline",
            ViewKind::Colocate => "colocate",
        }
    }

    fn default_source(self) -> SourceSelector {
        match self {
            ViewKind::Aggregate => SourceSelector::Crime,
            ViewKind::Timeline | ViewKind::Colocate => SourceSelector::Both,
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewKind {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aggregate" => Ok(ViewKind::Aggregate),
            "timeline" => Ok(ViewKind::Timeline),
            "colocate" => Ok(ViewKind::Colocate),
            _ => Err(QueryError::InvalidParameter {
                name: "kind",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum View {
    Aggregate(BTreeMap<NeighborhoodId, u64>),
    Timeline(Vec<Series>),
    Colocate(ColocationResult),
}

pub fn query_defaults(s: &AggregateSnapshot, kind: ViewKind) -> QueryDefaults {
    let (from, to) = s.default_range();
    QueryDefaults {
        source: kind.default_source(),
        from,
        to,
        granularity: Granularity::Year,
    }
}

/// Resolves raw parameters against the snapshot and runs the view.
pub fn render_view(s: &AggregateSnapshot, kind: ViewKind, params: &QueryParams) -> Result<View, QueryError> {
    let mut q = params.resolve(&query_defaults(s, kind), s.registry())?;
    Ok(match kind {
        ViewKind::Aggregate => View::Aggregate(query_counts(s, &q)?),
        ViewKind::Timeline => {
            let series = timeline(s, &q)?;
            if params.cumulative()? {
                View::Timeline(series.iter().map(cumulative).collect())
            } else {
                View::Timeline(series)
            }
        }
        ViewKind::Colocate => {
            q.source = SourceSelector::Both;
            View::Colocate(colocate(s, &q)?)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub build_id: String,
    /// Records occupying cells, per source.
    pub sources: BTreeMap<Source, u64>,
    pub records: BTreeMap<Source, SourceTotals>,
    pub period: Option<Period>,
    pub neighborhoods: usize,
    pub categories: Vec<Category>,
    pub granularities: Vec<Granularity>,
}

pub fn meta(s: &AggregateSnapshot) -> Meta {
    Meta {
        build_id: s.build_id().to_string(),
        sources: s.all_totals().iter().map(|(k, v)| (*k, v.counted)).collect(),
        records: s.all_totals().clone(),
        period: s.period(),
        neighborhoods: s.neighborhoods().len(),
        categories: s.registry().iter().cloned().collect(),
        granularities: Granularity::ALL.to_vec(),
    }
}
