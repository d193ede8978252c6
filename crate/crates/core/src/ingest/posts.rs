use std::io::{BufRead, BufReader, Read};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{IngestError, IngestReport, RejectReason};
use crate::exec::Execution;
use crate::locate::LocationAssignment;
use crate::model::CategoryId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    /// Filled in by location resolution.
    #[serde(default)]
    pub location: Option<LocationAssignment>,
    /// Filled in by keyword classification.
    #[serde(default)]
    pub category: Option<CategoryId>,
}

impl PostRecord {
    pub fn coordinates(&self) -> Option<(f64, f64)> {
        self.latitude.zip(self.longitude)
    }
}

fn coordinate(v: Option<&Value>, limit: f64) -> Result<Option<f64>, RejectReason> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => match n.as_f64() {
            Some(x) if x.is_finite() && x.abs() <= limit => Ok(Some(x)),
            _ => Err(RejectReason::InvalidCoordinate),
        },
        Some(_) => Err(RejectReason::InvalidCoordinate),
    }
}

fn parse_line(line: &[u8]) -> Result<PostRecord, RejectReason> {
    let obj = match serde_json::from_slice::<Value>(line) {
        Ok(Value::Object(o)) => o,
        _ => return Err(RejectReason::BadJson),
    };
    let post_id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(RejectReason::MissingField),
    };
    let created_at = match obj.get("created_at") {
        Some(Value::String(s)) => DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|_| RejectReason::BadTimestamp)?,
        Some(_) => return Err(RejectReason::BadTimestamp),
        None => return Err(RejectReason::MissingField),
    };
    let text = match obj.get("text") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(RejectReason::BadJson),
    };
    let latitude = coordinate(obj.get("lat"), 90.0)?;
    let longitude = coordinate(obj.get("lon"), 180.0)?;
    if latitude.is_some() != longitude.is_some() {
        return Err(RejectReason::InvalidCoordinate);
    }
    if latitude.is_none() && text.trim().is_empty() {
        return Err(RejectReason::EmptyPost);
    }
    Ok(PostRecord {
        post_id,
        created_at,
        text,
        latitude,
        longitude,
        location: None,
        category: None,
    })
}

/// Parses NDJSON posts: one object per line with `id`, `created_at`
/// (RFC 3339), `text` and optional `lat`/`lon`. Blank lines are skipped and
/// not counted.
pub fn parse_posts<R: Read>(
    input: R,
    exec: Execution,
) -> Result<(Vec<PostRecord>, IngestReport), IngestError> {
    let mut lines = Vec::new();
    for line in BufReader::new(input).split(b'\n') {
        let mut line = line?;
        if line.last() == Some(&b'\r') {
            line.pop();
        }
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        lines.push(line);
    }
    let outcomes = exec.map(&lines, |l| parse_line(l));
    Ok(IngestReport::tally(outcomes))
}
