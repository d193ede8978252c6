//! Place-name geocoding behind a provider trait, with a persistent cache.
//!
//! Cache file format (UTF-8, one entry per line, sorted by key):
//!
//! ```text
//! # vcfat geocode cache v1
//! <normalized place text>\t<latitude>\t<longitude>\t<resolved_at>
//! ```
//!
//! Coordinates use the shortest decimal form that parses back to the same
//! `f64`; `resolved_at` is RFC 3339 UTC with whole seconds. A provider miss
//! is stored with `-` in both coordinate fields so it is not asked again.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::Value;
use thiserror::Error;

use crate::classify::tokenize;

pub const CACHE_HEADER: &str = "# vcfat geocode cache v1";
pub const ENV_GEOCODER_URL: &str = "VCFAT_GEOCODER_URL";
pub const ENV_GEOCODER_KEY: &str = "VCFAT_GEOCODER_KEY";
pub const ENV_GEOCODER_STUB: &str = "VCFAT_GEOCODER_STUB";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Error)]
pub enum GeocodeError {
    #[error("geocoder transport: {0}")]
    Transport(String),
    #[error("geocoder response: {0}")]
    Response(String),
}

pub trait Geocoder: Send + Sync {
    /// `Ok(None)` means the provider answered but knows no such place.
    fn geocode(&self, query: &str) -> Result<Option<GeoPoint>, GeocodeError>;
}

/// Offline provider answering from a fixed table; counts every call.
#[derive(Debug, Default)]
pub struct StubGeocoder {
    places: BTreeMap<String, GeoPoint>,
    calls: AtomicUsize,
}

impl StubGeocoder {
    pub fn new(places: impl IntoIterator<Item = (String, GeoPoint)>) -> Self {
        Self {
            places: places
                .into_iter()
                .map(|(k, v)| (normalize_place(&k), v))
                .collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Geocoder for StubGeocoder {
    fn geocode(&self, query: &str) -> Result<Option<GeoPoint>, GeocodeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.places.get(&normalize_place(query)).copied())
    }
}

/// HTTP GET provider: `<endpoint>?address=<query>[&key=<key>]`.
///
/// Accepts Google-style (`results[0].geometry.location.{lat,lng}`),
/// Nominatim-style (`[{"lat": "..", "lon": ".."}]`) and flat
/// (`{"lat": .., "lon": ..}`) bodies.
pub struct HttpGeocoder {
    endpoint: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl HttpGeocoder {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            key,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(10))
                .build(),
        }
    }

    /// Reads the endpoint and key from the environment.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENV_GEOCODER_URL).ok().filter(|s| !s.is_empty())?;
        let key = std::env::var(ENV_GEOCODER_KEY).ok().filter(|s| !s.is_empty());
        Some(Self::new(endpoint, key))
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

fn parse_provider_body(body: &Value) -> Result<Option<GeoPoint>, GeocodeError> {
    let point = |lat: Option<&Value>, lon: Option<&Value>| -> Result<Option<GeoPoint>, GeocodeError> {
        match (lat.and_then(number), lon.and_then(number)) {
            (Some(latitude), Some(longitude)) => Ok(Some(GeoPoint {
                latitude,
                longitude,
            })),
            _ => Err(GeocodeError::Response("missing lat/lon".into())),
        }
    };
    if let Some(results) = body.get("results").and_then(Value::as_array) {
        return match results.first() {
            None => Ok(None),
            Some(r) => {
                let loc = &r["geometry"]["location"];
                point(loc.get("lat"), loc.get("lng"))
            }
        };
    }
    if let Some(status) = body.get("status").and_then(Value::as_str) {
        if status == "ZERO_RESULTS" {
            return Ok(None);
        }
    }
    if let Some(list) = body.as_array() {
        return match list.first() {
            None => Ok(None),
            Some(r) => point(r.get("lat"), r.get("lon")),
        };
    }
    point(body.get("lat"), body.get("lon").or_else(|| body.get("lng")))
}

impl Geocoder for HttpGeocoder {
    fn geocode(&self, query: &str) -> Result<Option<GeoPoint>, GeocodeError> {
        let mut req = self.agent.get(&self.endpoint).query("address", query);
        if let Some(key) = &self.key {
            req = req.query("key", key);
        }
        let response = match req.call() {
            Ok(r) => r,
            Err(ureq::Error::Status(404, _)) => return Ok(None),
            Err(e) => return Err(GeocodeError::Transport(e.to_string())),
        };
        let body: Value = response
            .into_json()
            .map_err(|e| GeocodeError::Response(e.to_string()))?;
        parse_provider_body(&body)
    }
}

/// Lookup key for a place phrase: its tokens joined by single spaces.
pub fn normalize_place(text: &str) -> String {
    tokenize(text).join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheEntry {
    pub point: Option<GeoPoint>,
    pub resolved_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// Exact-match cache keyed by normalized place text. Reads proceed
/// concurrently; writes are serialized.
#[derive(Debug, Default)]
pub struct GeocodeCache {
    entries: RwLock<BTreeMap<String, CacheEntry>>,
}

impl GeocodeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, place: &str) -> Option<CacheEntry> {
        self.entries
            .read()
            .expect("cache lock")
            .get(&normalize_place(place))
            .copied()
    }

    pub fn insert(&self, place: &str, point: Option<GeoPoint>, resolved_at: DateTime<Utc>) {
        let resolved_at = DateTime::from_timestamp(resolved_at.timestamp(), 0).unwrap_or(resolved_at);
        self.entries
            .write()
            .expect("cache lock")
            .insert(normalize_place(place), CacheEntry { point, resolved_at });
    }

    pub fn to_text(&self) -> String {
        let entries = self.entries.read().expect("cache lock");
        let mut out = String::from(CACHE_HEADER);
        out.push('\n');
        for (key, e) in entries.iter() {
            let (lat, lon) = match e.point {
                Some(p) => (p.latitude.to_string(), p.longitude.to_string()),
                None => ("-".to_string(), "-".to_string()),
            };
            out.push_str(&format!(
                "{key}\t{lat}\t{lon}\t{}\n",
                e.resolved_at.to_rfc3339_opts(SecondsFormat::Secs, true)
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CacheError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| CacheError::Format {
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [key, lat, lon, at] = fields[..] else {
                return Err(bad("expected 4 tab-separated fields"));
            };
            let point = match (lat, lon) {
                ("-", "-") => None,
                _ => Some(GeoPoint {
                    latitude: lat.parse().map_err(|_| bad("latitude"))?,
                    longitude: lon.parse().map_err(|_| bad("longitude"))?,
                }),
            };
            let resolved_at = DateTime::parse_from_rfc3339(at)
                .map_err(|_| bad("timestamp"))?
                .with_timezone(&Utc);
            entries.insert(key.to_string(), CacheEntry { point, resolved_at });
        }
        Ok(Self {
            entries: RwLock::new(entries),
        })
    }

    /// Loads a cache file; a missing file yields an empty cache.
    pub fn load(path: &Path) -> Result<Self, CacheError> {
        match fs::read_to_string(path) {
            Ok(text) => Self::from_text(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CacheError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}
