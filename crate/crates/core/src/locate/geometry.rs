use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::model::NeighborhoodId;

/// Closed ring of `[lon, lat]` positions (first == last).
pub type Ring = Vec<[f64; 2]>;
/// Outer ring followed by holes.
pub type Polygon = Vec<Ring>;

// Distances below this (in degrees, about 0.1 mm) count as on the boundary.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    pub fn empty() -> Self {
        Self {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min_lon > self.max_lon || self.min_lat > self.max_lat
    }

    pub fn extend(&mut self, lon: f64, lat: f64) {
        self.min_lon = self.min_lon.min(lon);
        self.min_lat = self.min_lat.min(lat);
        self.max_lon = self.max_lon.max(lon);
        self.max_lat = self.max_lat.max(lat);
    }

    pub fn union(&mut self, other: &BoundingBox) {
        if !other.is_empty() {
            self.extend(other.min_lon, other.min_lat);
            self.extend(other.max_lon, other.max_lat);
        }
    }

    /// Inclusive on every edge.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.min_lon && lon <= self.max_lon && lat >= self.min_lat && lat <= self.max_lat
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub id: NeighborhoodId,
    pub display_name: String,
    pub polygons: Vec<Polygon>,
    pub bbox: BoundingBox,
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return (p[0] - a[0]).hypot(p[1] - a[1]) <= BOUNDARY_EPS;
    }
    let cross = dx * (p[1] - a[1]) - dy * (p[0] - a[0]);
    if cross.abs() / len > BOUNDARY_EPS {
        return false;
    }
    let t = (dx * (p[0] - a[0]) + dy * (p[1] - a[1])) / (len * len);
    let slack = BOUNDARY_EPS / len;
    (-slack..=1.0 + slack).contains(&t)
}

impl Neighborhood {
    pub fn new(id: NeighborhoodId, display_name: impl Into<String>, polygons: Vec<Polygon>) -> Self {
        let mut bbox = BoundingBox::empty();
        for p in polygons.iter().flatten().flatten() {
            bbox.extend(p[0], p[1]);
        }
        Self {
            id,
            display_name: display_name.into(),
            polygons,
            bbox,
        }
    }

    fn rings(&self) -> impl Iterator<Item = &Ring> {
        self.polygons.iter().flatten()
    }

    /// True when the point lies on any ring edge.
    pub fn on_boundary(&self, lon: f64, lat: f64) -> bool {
        self.rings()
            .any(|r| r.windows(2).any(|e| on_segment(e[0], e[1], [lon, lat])))
    }

    /// Even-odd rule over every ring, counting crossings of a ray cast
    /// towards +lon. Boundary points are not reliably classified here; see
    /// [`Neighborhood::contains`].
    pub fn even_odd_inside(&self, lon: f64, lat: f64) -> bool {
        let mut inside = false;
        for ring in self.rings() {
            for e in ring.windows(2) {
                let ([x1, y1], [x2, y2]) = (e[0], e[1]);
                if (y1 > lat) != (y2 > lat) {
                    let x_cross = x1 + (lat - y1) * (x2 - x1) / (y2 - y1);
                    if lon < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }

    /// Closed containment: interior by the even-odd rule, or on an edge.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        self.bbox.contains(lon, lat) && (self.on_boundary(lon, lat) || self.even_odd_inside(lon, lat))
    }

    fn geojson_geometry(&self) -> Value {
        if self.polygons.len() == 1 {
            json!({"type": "Polygon", "coordinates": self.polygons[0]})
        } else {
            json!({"type": "MultiPolygon", "coordinates": self.polygons})
        }
    }
}

/// District polygons ordered by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Neighborhood>", into = "Vec<Neighborhood>")]
pub struct NeighborhoodSet {
    neighborhoods: Vec<Neighborhood>,
}

impl NeighborhoodSet {
    /// Sorts by id. Callers guarantee id uniqueness (the GeoJSON parser
    /// rejects duplicate slugs).
    pub fn new(mut neighborhoods: Vec<Neighborhood>) -> Self {
        neighborhoods.sort_by(|a, b| a.id.cmp(&b.id));
        Self { neighborhoods }
    }

    pub fn len(&self) -> usize {
        self.neighborhoods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighborhoods.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Neighborhood> {
        self.neighborhoods.iter()
    }

    pub fn as_slice(&self) -> &[Neighborhood] {
        &self.neighborhoods
    }

    pub fn position(&self, id: &NeighborhoodId) -> Option<usize> {
        self.neighborhoods.binary_search_by(|n| n.id.cmp(id)).ok()
    }

    pub fn get(&self, id: &NeighborhoodId) -> Option<&Neighborhood> {
        self.position(id).map(|i| &self.neighborhoods[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &NeighborhoodId> {
        self.neighborhoods.iter().map(|n| &n.id)
    }

    /// FeatureCollection with `id` and `display_name` properties.
    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .neighborhoods
            .iter()
            .map(|n| {
                json!({
                    "type": "Feature",
                    "id": n.id,
                    "properties": {"id": n.id, "display_name": n.display_name},
                    "geometry": n.geojson_geometry(),
                })
            })
            .collect();
        json!({"type": "FeatureCollection", "features": features})
    }
}

impl From<Vec<Neighborhood>> for NeighborhoodSet {
    fn from(v: Vec<Neighborhood>) -> Self {
        Self::new(v)
    }
}

impl From<NeighborhoodSet> for Vec<Neighborhood> {
    fn from(s: NeighborhoodSet) -> Self {
        s.neighborhoods
    }
}
