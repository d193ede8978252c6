use std::collections::BTreeSet;
use std::io::Read;

use serde_json::Value;

use super::IngestError;
use crate::locate::{Neighborhood, NeighborhoodSet, Polygon, Ring};
use crate::model::{slugify, NeighborhoodId};

fn invalid(msg: impl Into<String>) -> IngestError {
    IngestError::InvalidGeoJson(msg.into())
}

fn ring(value: &Value, feature: &str, index: usize) -> Result<Ring, IngestError> {
    let positions = value
        .as_array()
        .ok_or_else(|| invalid(format!("feature {feature}: ring is not an array")))?;
    let mut out = Vec::with_capacity(positions.len());
    for p in positions {
        let pair = p.as_array().filter(|a| a.len() >= 2).ok_or_else(|| {
            invalid(format!("feature {feature}: position is not a coordinate pair"))
        })?;
        let lon = pair[0].as_f64();
        let lat = pair[1].as_f64();
        match (lon, lat) {
            (Some(lon), Some(lat)) if lon.is_finite() && lat.is_finite() => out.push([lon, lat]),
            _ => return Err(invalid(format!("feature {feature}: non-numeric coordinate"))),
        }
    }
    if out.len() < 4 {
        return Err(IngestError::ShortRing {
            feature: feature.to_string(),
            ring: index,
        });
    }
    if out.first() != out.last() {
        return Err(IngestError::OpenRing {
            feature: feature.to_string(),
            ring: index,
        });
    }
    Ok(out)
}

fn polygon(value: &Value, feature: &str, ring_base: &mut usize) -> Result<Polygon, IngestError> {
    let rings = value
        .as_array()
        .ok_or_else(|| invalid(format!("feature {feature}: polygon is not an array")))?;
    if rings.is_empty() {
        return Err(invalid(format!("feature {feature}: polygon has no rings")));
    }
    rings
        .iter()
        .map(|r| {
            let i = *ring_base;
            *ring_base += 1;
            ring(r, feature, i)
        })
        .collect()
}

/// Parses a GeoJSON FeatureCollection of named Polygon or MultiPolygon
/// districts. The name is read from the first of `name_properties` present on
/// each feature; ids are slugs of the names and must be unique.
pub fn parse_neighborhoods<R: Read>(
    input: R,
    name_properties: &[String],
) -> Result<NeighborhoodSet, IngestError> {
    let doc: Value = serde_json::from_reader(input).map_err(|e| invalid(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(invalid("top-level object is not a FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| invalid("FeatureCollection has no features array"))?;

    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let props = feature.get("properties").and_then(Value::as_object);
        let name = props
            .and_then(|p| {
                name_properties
                    .iter()
                    .find_map(|k| p.get(k).and_then(Value::as_str))
            })
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .ok_or(IngestError::MissingName(i))?;
        let slug = slugify(name);
        if slug.is_empty() || !seen.insert(slug.clone()) {
            return Err(IngestError::DuplicateSlug(slug));
        }

        let geometry = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| invalid(format!("feature {name}: missing geometry")))?;
        let coords = geometry
            .get("coordinates")
            .ok_or_else(|| invalid(format!("feature {name}: geometry has no coordinates")))?;
        let mut ring_index = 0;
        let polygons = match geometry.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![polygon(coords, name, &mut ring_index)?],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| invalid(format!("feature {name}: MultiPolygon is not an array")))?
                .iter()
                .map(|p| polygon(p, name, &mut ring_index))
                .collect::<Result<_, _>>()?,
            other => {
                return Err(invalid(format!(
                    "feature {name}: unsupported geometry type {other:?}"
                )))
            }
        };
        out.push(Neighborhood::new(NeighborhoodId::new(slug), name, polygons));
    }
    Ok(NeighborhoodSet::new(out))
}
