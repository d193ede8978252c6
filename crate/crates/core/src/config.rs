//! The declarative ingest configuration (TOML).
//!
//! One file holds the CSV column map, the traffic exclusion list, the
//! category registry and normalization table, the keyword lexicon, the
//! gazetteer aliases and the geocoder stub table. The bundled default
//! (`config/default.toml`) targets the San Francisco incident export.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{Lexicon, LexiconEntry, LexiconError};
use crate::ingest::{CategoryNormalizer, ColumnMap, CrimeField};
use crate::model::{slugify, Category, CategoryId, CategoryRegistry, ModelError, NeighborhoodId};

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("category registry: {0}")]
    Registry(#[from] ModelError),
    #[error("lexicon: {0}")]
    Lexicon(#[from] LexiconError),
    #[error("{context} refers to unknown category {id:?}")]
    UnknownCategory { context: String, id: String },
    #[error("canonical field {0} is mapped from more than one column")]
    DuplicateColumn(CrimeField),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeocoderConfig {
    #[serde(default)]
    pub stub: bool,
    /// Normalized place phrase -> `[latitude, longitude]`.
    #[serde(default)]
    pub stub_places: BTreeMap<String, [f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    #[serde(default = "default_name_properties")]
    pub district_name_properties: Vec<String>,
    #[serde(default)]
    pub city_aliases: Vec<String>,
    #[serde(default)]
    pub exclusions: Vec<String>,
    #[serde(default)]
    pub fallback_category: Option<CategoryId>,
    pub column_map: BTreeMap<String, CrimeField>,
    #[serde(default)]
    pub category_map: BTreeMap<String, CategoryId>,
    #[serde(default)]
    pub district_aliases: BTreeMap<String, NeighborhoodId>,
    #[serde(default)]
    pub geocoder: GeocoderConfig,
    pub categories: Vec<Category>,
    #[serde(default)]
    pub lexicon: Vec<LexiconEntry>,
}

fn default_name_properties() -> Vec<String> {
    vec!["name".to_string()]
}

impl IngestConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn bundled() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("bundled config parses")
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

/// A validated configuration with its derived lookup structures.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: IngestConfig,
    pub registry: CategoryRegistry,
    pub lexicon: Lexicon,
    pub columns: ColumnMap,
    pub normalizer: CategoryNormalizer,
}

impl Settings {
    pub fn new(config: IngestConfig) -> Result<Self, ConfigError> {
        let registry = CategoryRegistry::new(config.categories.clone())?;
        let lexicon = Lexicon::new(&config.lexicon, &registry)?;

        let mut seen = BTreeMap::new();
        for field in config.column_map.values() {
            if seen.insert(*field, ()).is_some() {
                return Err(ConfigError::DuplicateColumn(*field));
            }
        }
        let columns = ColumnMap::new(config.column_map.clone());

        let check = |context: &str, id: &CategoryId| {
            if registry.contains(id) {
                Ok(())
            } else {
                Err(ConfigError::UnknownCategory {
                    context: context.to_string(),
                    id: id.to_string(),
                })
            }
        };
        for (raw, id) in &config.category_map {
            check(&format!("category_map entry {raw:?}"), id)?;
        }
        if let Some(id) = &config.fallback_category {
            check("fallback_category", id)?;
        }
        let normalizer = CategoryNormalizer::new(
            registry.clone(),
            config
                .category_map
                .iter()
                .map(|(k, v)| (k.trim().to_lowercase(), v.clone()))
                .collect(),
            config.fallback_category.clone(),
        );

        Ok(Self {
            config,
            registry,
            lexicon,
            columns,
            normalizer,
        })
    }

    pub fn bundled() -> Self {
        Self::new(IngestConfig::bundled()).expect("bundled config is valid")
    }

    /// Loads `path`, or the bundled default when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::new(IngestConfig::from_path(p)?),
            None => Ok(Self::bundled()),
        }
    }

    /// District alias phrases with slug-normalized targets.
    pub fn district_aliases(&self) -> impl Iterator<Item = (&str, NeighborhoodId)> {
        self.config
            .district_aliases
            .iter()
            .map(|(phrase, id)| (phrase.as_str(), NeighborhoodId::new(slugify(id.as_str()))))
    }
}
