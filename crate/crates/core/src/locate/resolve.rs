use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::gazetteer::{match_mentions, Gazetteer};
use super::geocode::{GeocodeCache, Geocoder};
use super::index::SpatialIndex;
use crate::exec::Execution;
use crate::ingest::PostRecord;
use crate::model::NeighborhoodId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocateMethod {
    GeotagPip,
    TextMention,
    Geocoded,
    Unresolved,
}

impl LocateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GeotagPip => "geotag-pip",
            Self::TextMention => "text-mention",
            Self::Geocoded => "geocoded",
            Self::Unresolved => "unresolved",
        }
    }
}

/// How a post was placed. `neighborhood` is present exactly when
/// `method != Unresolved`; `ambiguous` implies two or more `mentions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationAssignment {
    pub neighborhood: Option<NeighborhoodId>,
    pub method: LocateMethod,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ambiguous: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<NeighborhoodId>,
    /// Set when the geocoder could not be reached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
}

impl LocationAssignment {
    fn unresolved() -> Self {
        Self {
            neighborhood: None,
            method: LocateMethod::Unresolved,
            ambiguous: false,
            mentions: Vec::new(),
            degraded: None,
        }
    }

    fn placed(id: NeighborhoodId, method: LocateMethod) -> Self {
        Self {
            neighborhood: Some(id),
            method,
            ..Self::unresolved()
        }
    }
}

/// Everything needed to place posts; shared read-only across workers.
pub struct Locator<'a> {
    pub index: &'a SpatialIndex,
    pub gazetteer: &'a Gazetteer,
    pub cache: &'a GeocodeCache,
    pub provider: Option<&'a dyn Geocoder>,
}

/// Places one post, trying in order: geotag point-in-polygon, district
/// mention in the text, geocoding of a city-level place phrase. A geotag
/// outside every district falls through to the text rules. The cache is
/// consulted before the provider and provider answers are written back.
pub fn resolve_location(post: &PostRecord, locator: &Locator<'_>) -> LocationAssignment {
    if let Some((lat, lon)) = post.coordinates() {
        if let Some(id) = locator.index.locate(lat, lon) {
            return LocationAssignment::placed(id.clone(), LocateMethod::GeotagPip);
        }
    }

    let found = match_mentions(&post.text, locator.gazetteer);
    if let Some(first) = found.mentions.first() {
        return LocationAssignment {
            ambiguous: found.mentions.len() >= 2,
            mentions: found.mentions.clone(),
            ..LocationAssignment::placed(first.clone(), LocateMethod::TextMention)
        };
    }

    if !found.city_level {
        return LocationAssignment::unresolved();
    }
    let Some(place) = found.place_phrase() else {
        return LocationAssignment::unresolved();
    };
    let point = match locator.cache.get(&place) {
        Some(entry) => entry.point,
        None => match locator.provider {
            None => return LocationAssignment::unresolved(),
            Some(provider) => match provider.geocode(&place) {
                Ok(point) => {
                    locator.cache.insert(&place, point, Utc::now());
                    point
                }
                Err(_) => {
                    return LocationAssignment {
                        degraded: Some("geocoder-unavailable".to_string()),
                        ..LocationAssignment::unresolved()
                    }
                }
            },
        },
    };
    match point.and_then(|p| locator.index.locate(p.latitude, p.longitude)) {
        Some(id) => LocationAssignment::placed(id.clone(), LocateMethod::Geocoded),
        None => LocationAssignment::unresolved(),
    }
}

/// Resolves every post, possibly in parallel, and stores the assignments.
pub fn resolve_all(posts: &mut [PostRecord], locator: &Locator<'_>, exec: Execution) {
    let assignments = exec.map(posts, |p| resolve_location(p, locator));
    for (post, a) in posts.iter_mut().zip(assignments) {
        post.location = Some(a);
    }
}
