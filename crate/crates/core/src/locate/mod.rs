//! Assigning records to districts: point-in-polygon for coordinates,
//! gazetteer matching for text, cached geocoding for city-level place names.

mod gazetteer;
pub mod geocode;
mod geometry;
mod index;
mod resolve;

pub use gazetteer::{match_mentions, Gazetteer, MentionResult};
pub use geocode::{
    normalize_place, GeoPoint, GeocodeCache, GeocodeError, Geocoder, HttpGeocoder, StubGeocoder,
};
pub use geometry::{BoundingBox, Neighborhood, NeighborhoodSet, Polygon, Ring};
pub use index::{build_spatial_index, locate_point, SpatialIndex};
pub use resolve::{resolve_all, resolve_location, LocateMethod, LocationAssignment, Locator};
