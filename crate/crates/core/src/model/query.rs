use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::ids::{CategoryId, CategoryRegistry};
use super::time::{midnight, Granularity};
use super::QueryError;

/// One of the two record sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Crime,
    Post,
}

impl Source {
    pub const ALL: [Source; 2] = [Source::Crime, Source::Post];

    pub fn index(self) -> usize {
        match self {
            Source::Crime => 0,
            Source::Post => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Crime => "crime",
            Source::Post => "post",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceSelector {
    Crime,
    Post,
    Both,
}

impl SourceSelector {
    pub fn sources(self) -> &'static [Source] {
        match self {
            SourceSelector::Crime => &[Source::Crime],
            SourceSelector::Post => &[Source::Post],
            SourceSelector::Both => &Source::ALL,
        }
    }

    pub fn single(self) -> Option<Source> {
        match self {
            SourceSelector::Crime => Some(Source::Crime),
            SourceSelector::Post => Some(Source::Post),
            SourceSelector::Both => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceSelector::Crime => "crime",
            SourceSelector::Post => "post",
            SourceSelector::Both => "both",
        }
    }
}

impl From<Source> for SourceSelector {
    fn from(s: Source) -> Self {
        match s {
            Source::Crime => SourceSelector::Crime,
            Source::Post => SourceSelector::Post,
        }
    }
}

impl FromStr for SourceSelector {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crime" => Ok(Self::Crime),
            "post" => Ok(Self::Post),
            "both" => Ok(Self::Both),
            _ => Err(QueryError::UnknownSource(s.to_string())),
        }
    }
}

/// The single query shape shared by the HTTP API, the CLI and the engine.
/// Construct through [`AnalyticsQuery::new`] so the invariants hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnalyticsQuery {
    pub source: SourceSelector,
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
    pub granularity: Granularity,
    pub category: Option<CategoryId>,
}

impl AnalyticsQuery {
    pub fn new(
        source: SourceSelector,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
        granularity: Granularity,
        category: Option<CategoryId>,
        registry: &CategoryRegistry,
    ) -> Result<Self, QueryError> {
        let q = Self {
            source,
            from,
            to,
            granularity,
            category,
        };
        q.validate(registry)?;
        Ok(q)
    }

    pub fn validate(&self, registry: &CategoryRegistry) -> Result<(), QueryError> {
        if self.from >= self.to {
            return Err(QueryError::InvalidRange {
                from: self.from.to_rfc3339(),
                to: self.to.to_rfc3339(),
            });
        }
        if let Some(c) = &self.category {
            if !registry.contains(c) {
                return Err(QueryError::UnknownCategory(c.to_string()));
            }
        }
        Ok(())
    }
}

/// Raw textual query parameters, as they arrive in a URL query string or on
/// the command line. Missing values fall back to [`QueryDefaults`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryParams {
    pub source: Option<String>,
    pub granularity: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub category: Option<String>,
    pub cumulative: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct QueryDefaults {
    pub source: SourceSelector,
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
    pub granularity: Granularity,
}

impl QueryParams {
    pub fn resolve(
        &self,
        defaults: &QueryDefaults,
        registry: &CategoryRegistry,
    ) -> Result<AnalyticsQuery, QueryError> {
        let source = match non_empty(&self.source) {
            Some(s) => s.parse()?,
            None => defaults.source,
        };
        let granularity = match non_empty(&self.granularity) {
            Some(g) => g.parse().map_err(|_| QueryError::InvalidParameter {
                name: "granularity",
                value: g.to_string(),
            })?,
            None => defaults.granularity,
        };
        let from = match non_empty(&self.from) {
            Some(s) => parse_query_instant(s)?,
            None => defaults.from,
        };
        let to = match non_empty(&self.to) {
            Some(s) => parse_query_instant(s)?,
            None => defaults.to,
        };
        let category = match non_empty(&self.category) {
            Some(c) => Some(
                registry
                    .resolve(c)
                    .map_err(|_| QueryError::UnknownCategory(c.to_string()))?,
            ),
            None => None,
        };
        AnalyticsQuery::new(source, from, to, granularity, category, registry)
    }

    pub fn cumulative(&self) -> Result<bool, QueryError> {
        match non_empty(&self.cumulative) {
            None => Ok(false),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(QueryError::InvalidParameter {
                    name: "cumulative",
                    value: v.to_string(),
                }),
            },
        }
    }
}

fn non_empty(v: &Option<String>) -> Option<&str> {
    v.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

/// `YYYY-MM-DD` is read as UTC midnight; full RFC 3339 instants are also accepted.
pub fn parse_query_instant(s: &str) -> Result<DateTime<Utc>, QueryError> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(midnight(d));
    }
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| QueryError::InvalidRange {
            from: s.to_string(),
            to: s.to_string(),
        })
}
