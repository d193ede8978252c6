//! Calendar buckets at day, ISO-week, month and year granularity.
//!
//! All arithmetic is UTC on the proleptic Gregorian calendar. A bucket is
//! identified by its first day; the canonical text key is derived from it and
//! is part of the wire format shared by the API and export files.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    Week,
    Month,
    Year,
}

impl Granularity {
    pub const ALL: [Granularity; 4] = [Self::Day, Self::Week, Self::Month, Self::Year];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Day => "day",
            Self::Week => "week",
            Self::Month => "month",
            Self::Year => "year",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" => Ok(Self::Day),
            "week" => Ok(Self::Week),
            "month" => Ok(Self::Month),
            "year" => Ok(Self::Year),
            _ => Err(ModelError::InvalidGranularity(s.to_string())),
        }
    }
}

/// One calendar bucket. Ordering follows the bucket start, which for a fixed
/// granularity coincides with the lexicographic order of [`TimeBucketKey::key`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeBucketKey {
    granularity: Granularity,
    start: NaiveDate,
}

impl TimeBucketKey {
    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// First day of the bucket.
    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn start_instant(&self) -> DateTime<Utc> {
        midnight(self.start)
    }

    /// First day after the bucket (exclusive end).
    pub fn end(&self) -> NaiveDate {
        self.next().start
    }

    pub fn next(&self) -> TimeBucketKey {
        let start = match self.granularity {
            Granularity::Day => self.start + Duration::days(1),
            Granularity::Week => self.start + Duration::days(7),
            Granularity::Month => {
                let (y, m) = if self.start.month() == 12 {
                    (self.start.year() + 1, 1)
                } else {
                    (self.start.year(), self.start.month() + 1)
                };
                NaiveDate::from_ymd_opt(y, m, 1).expect("first of month")
            }
            Granularity::Year => {
                NaiveDate::from_ymd_opt(self.start.year() + 1, 1, 1).expect("first of year")
            }
        };
        TimeBucketKey {
            granularity: self.granularity,
            start,
        }
    }

    pub fn contains_date(&self, date: NaiveDate) -> bool {
        date >= self.start && date < self.end()
    }

    /// Canonical text key: `YYYY-MM-DD`, `GGGG-Www`, `YYYY-MM` or `YYYY`.
    pub fn key(&self) -> String {
        match self.granularity {
            Granularity::Day => self.start.format("%Y-%m-%d").to_string(),
            Granularity::Week => {
                let iso = self.start.iso_week();
                format!("{:04}-W{:02}", iso.year(), iso.week())
            }
            Granularity::Month => self.start.format("%Y-%m").to_string(),
            Granularity::Year => format!("{:04}", self.start.year()),
        }
    }

    /// Parses a canonical key. Non-canonical spellings (`2018-1`, `2020-W1`)
    /// are rejected so that every accepted key round-trips.
    pub fn parse(granularity: Granularity, key: &str) -> Result<Self, ModelError> {
        let bad = || ModelError::InvalidBucketKey {
            granularity,
            key: key.to_string(),
        };
        let start = match granularity {
            Granularity::Day => NaiveDate::parse_from_str(key, "%Y-%m-%d").map_err(|_| bad())?,
            Granularity::Week => {
                let (year, week) = key.split_once("-W").ok_or_else(bad)?;
                let year: i32 = year.parse().map_err(|_| bad())?;
                let week: u32 = week.parse().map_err(|_| bad())?;
                NaiveDate::from_isoywd_opt(year, week, Weekday::Mon).ok_or_else(bad)?
            }
            Granularity::Month => {
                NaiveDate::parse_from_str(&format!("{key}-01"), "%Y-%m-%d").map_err(|_| bad())?
            }
            Granularity::Year => {
                let year: i32 = key.parse().map_err(|_| bad())?;
                NaiveDate::from_ymd_opt(year, 1, 1).ok_or_else(bad)?
            }
        };
        let parsed = TimeBucketKey { granularity, start };
        if parsed.key() != key {
            return Err(bad());
        }
        Ok(parsed)
    }
}

impl fmt::Display for TimeBucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl Serialize for TimeBucketKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for TimeBucketKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // Granularity is recovered from the key shape.
        let key = String::deserialize(deserializer)?;
        let granularity = match key.len() {
            4 => Granularity::Year,
            7 => Granularity::Month,
            8 => Granularity::Week,
            10 => Granularity::Day,
            _ => return Err(serde::de::Error::custom(format!("invalid bucket key {key:?}"))),
        };
        TimeBucketKey::parse(granularity, &key).map_err(serde::de::Error::custom)
    }
}

pub fn midnight(date: NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(0, 0, 0).expect("midnight").and_utc()
}

pub fn bucket_of_date(date: NaiveDate, granularity: Granularity) -> TimeBucketKey {
    let start = match granularity {
        Granularity::Day => date,
        Granularity::Week => {
            date - Duration::days(i64::from(date.weekday().num_days_from_monday()))
        }
        Granularity::Month => date.with_day(1).expect("day 1 exists"),
        Granularity::Year => NaiveDate::from_ymd_opt(date.year(), 1, 1).expect("jan 1"),
    };
    TimeBucketKey { granularity, start }
}

/// The bucket of granularity `granularity` containing `t`.
pub fn bucket_of(t: DateTime<Utc>, granularity: Granularity) -> TimeBucketKey {
    bucket_of_date(t.date_naive(), granularity)
}

/// Buckets covering the half-open range `[from, to)`, ascending and gap-free.
pub fn buckets_in_range(
    from: DateTime<Utc>,
    to: DateTime<Utc>,
    granularity: Granularity,
) -> Result<Vec<TimeBucketKey>, ModelError> {
    if from >= to {
        return Err(ModelError::EmptyRange { from, to });
    }
    let last = bucket_of(to - Duration::nanoseconds(1), granularity);
    let mut current = bucket_of(from, granularity);
    let mut out = Vec::new();
    while current <= last {
        out.push(current);
        current = current.next();
    }
    Ok(out)
}
