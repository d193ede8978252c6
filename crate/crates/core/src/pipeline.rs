//! End-to-end ingest: parse the three inputs, place and classify records,
//! and keep the normalized result as a record store from which snapshots
//! are built.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{build_snapshot, AggregateSnapshot};
use crate::classify::{classify_crime_type, tokenize};
use crate::config::{ConfigError, Settings};
use crate::exec::Execution;
use crate::ingest::{
    filter_minor_traffic, parse_crime_csv, parse_neighborhoods, parse_posts, CrimeIncident,
    IngestError, IngestReport, PostRecord,
};
use crate::locate::geocode::{CacheError, ENV_GEOCODER_STUB};
use crate::locate::{
    resolve_all, Gazetteer, GeoPoint, GeocodeCache, Geocoder, HttpGeocoder, Locator,
    NeighborhoodSet, SpatialIndex, StubGeocoder,
};
use crate::model::CategoryRegistry;

pub const STORE_FORMAT: &str = "vcfat-records";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{input}: {source}")]
    Ingest {
        input: &'static str,
        #[source]
        source: IngestError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("geocode cache: {0}")]
    Cache(#[from] CacheError),
    #[error("record store: {0}")]
    Store(String),
}

/// Paths and switches for one ingest run.
#[derive(Debug, Clone, Default)]
pub struct IngestInputs {
    pub crimes: PathBuf,
    pub posts: PathBuf,
    pub districts: PathBuf,
    pub config: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub stub_geocoder: bool,
}

/// What happened to every input row, per source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub districts: usize,
    pub crimes: IngestReport,
    pub traffic_removed: usize,
    pub crimes_retained: usize,
    pub crimes_located: usize,
    pub posts: IngestReport,
    pub posts_by_method: BTreeMap<String, usize>,
    pub posts_ambiguous: usize,
    pub posts_classified: usize,
    pub geocoder_degraded: usize,
}

/// Normalized, placed and classified records: the input to `build`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordStore {
    pub format: String,
    pub version: u32,
    pub neighborhoods: NeighborhoodSet,
    pub registry: CategoryRegistry,
    pub crimes: Vec<CrimeIncident>,
    pub posts: Vec<PostRecord>,
    pub summary: IngestSummary,
}

impl RecordStore {
    pub fn snapshot(&self, exec: Execution) -> AggregateSnapshot {
        build_snapshot(&self.crimes, &self.posts, &self.neighborhoods, &self.registry, exec)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let file = File::create(path).map_err(|source| PipelineError::Open {
            path: path.display().to_string(),
            source,
        })?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, self).map_err(|e| PipelineError::Store(e.to_string()))?;
        out.flush().map_err(|source| PipelineError::Open {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let file = open(path)?;
        let store: Self = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| PipelineError::Store(e.to_string()))?;
        if store.format != STORE_FORMAT || store.version != STORE_VERSION {
            return Err(PipelineError::Store(format!(
                "unsupported format {:?} version {}",
                store.format, store.version
            )));
        }
        Ok(store)
    }
}

fn open(path: &Path) -> Result<File, PipelineError> {
    File::open(path).map_err(|source| PipelineError::Open {
        path: path.display().to_string(),
        source,
    })
}

/// True when stub geocoding is requested by flag, config or environment.
pub fn stub_requested(flag: bool, settings: &Settings) -> bool {
    flag || settings.config.geocoder.stub
        || std::env::var(ENV_GEOCODER_STUB)
            .map(|v| matches!(v.trim().to_lowercase().as_str(), "1" | "true" | "yes"))
            .unwrap_or(false)
}

/// The stub provider configured by the settings' place table.
pub fn stub_geocoder(settings: &Settings) -> StubGeocoder {
    StubGeocoder::new(settings.config.geocoder.stub_places.iter().map(|(k, [lat, lon])| {
        (k.clone(), GeoPoint { latitude: *lat, longitude: *lon })
    }))
}

/// Runs the full ingest over in-memory readers. Without a provider, only
/// cached places are geocoded.
pub fn ingest_readers(
    crimes: impl Read,
    posts: impl Read,
    districts: impl Read,
    settings: &Settings,
    provider: Option<&dyn Geocoder>,
    cache: &GeocodeCache,
    exec: Execution,
) -> Result<RecordStore, PipelineError> {
    let err = |input| move |source| PipelineError::Ingest { input, source };
    let neighborhoods = parse_neighborhoods(districts, &settings.config.district_name_properties)
        .map_err(err("districts"))?;
    let index = SpatialIndex::build(&neighborhoods);

    let (crime_rows, crime_report) =
        parse_crime_csv(crimes, &settings.columns, &settings.normalizer, exec).map_err(err("crimes"))?;
    let (mut crime_rows, traffic_removed) = filter_minor_traffic(crime_rows, &settings.config.exclusions);
    let located = exec.map(&crime_rows, |c| match &c.neighborhood {
        Some(id) if neighborhoods.get(id).is_some() => Some(id.clone()),
        _ => index.locate(c.latitude, c.longitude).cloned(),
    });
    for (c, id) in crime_rows.iter_mut().zip(located) {
        c.neighborhood = id;
    }

    let (mut post_rows, post_report) = parse_posts(posts, exec).map_err(err("posts"))?;
    let gazetteer = Gazetteer::new(
        &neighborhoods,
        settings.district_aliases(),
        settings.config.city_aliases.iter().map(String::as_str),
    );
    let locator = Locator { index: &index, gazetteer: &gazetteer, cache, provider };
    resolve_all(&mut post_rows, &locator, exec);
    let categories = exec.map(&post_rows, |p| classify_crime_type(&tokenize(&p.text), &settings.lexicon));
    for (p, c) in post_rows.iter_mut().zip(categories) {
        p.category = c;
    }

    let mut summary = IngestSummary {
        districts: neighborhoods.len(),
        crimes: crime_report,
        traffic_removed,
        crimes_retained: crime_rows.len(),
        crimes_located: crime_rows.iter().filter(|c| c.neighborhood.is_some()).count(),
        posts: post_report,
        posts_classified: post_rows.iter().filter(|p| p.category.is_some()).count(),
        ..IngestSummary::default()
    };
    for a in post_rows.iter().filter_map(|p| p.location.as_ref()) {
        *summary.posts_by_method.entry(a.method.as_str().to_string()).or_default() += 1;
        summary.posts_ambiguous += usize::from(a.ambiguous);
        summary.geocoder_degraded += usize::from(a.degraded.is_some());
    }

    Ok(RecordStore {
        format: STORE_FORMAT.to_string(),
        version: STORE_VERSION,
        neighborhoods,
        registry: settings.registry.clone(),
        crimes: crime_rows,
        posts: post_rows,
        summary,
    })
}

/// Runs the full ingest from files, loading and saving the geocode cache
/// when a cache path is given.
pub fn ingest_files(inputs: &IngestInputs, exec: Execution) -> Result<RecordStore, PipelineError> {
    let settings = Settings::load(inputs.config.as_deref())?;
    let cache = match &inputs.cache {
        Some(path) => GeocodeCache::load(path)?,
        None => GeocodeCache::new(),
    };
    let stub;
    let http;
    let provider: Option<&dyn Geocoder> = if stub_requested(inputs.stub_geocoder, &settings) {
        stub = stub_geocoder(&settings);
        Some(&stub)
    } else {
        http = HttpGeocoder::from_env();
        http.as_ref().map(|h| h as &dyn Geocoder)
    };
    let store = ingest_readers(
        BufReader::new(open(&inputs.crimes)?),
        BufReader::new(open(&inputs.posts)?),
        BufReader::new(open(&inputs.districts)?),
        &settings,
        provider,
        &cache,
        exec,
    )?;
    if let Some(path) = &inputs.cache {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| PipelineError::Open {
                path: dir.display().to_string(),
                source,
            })?;
        }
        cache.save(path)?;
    }
    Ok(store)
}
