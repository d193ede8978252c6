use super::geometry::{BoundingBox, NeighborhoodSet};
use crate::model::NeighborhoodId;

/// Uniform grid over the union of district bounding boxes. Each cell lists,
/// in id order, the districts whose box overlaps it.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    set: NeighborhoodSet,
    extent: BoundingBox,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

fn axis_cells(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize * 2).clamp(1, 64)
}

impl SpatialIndex {
    pub fn build(set: &NeighborhoodSet) -> Self {
        let mut extent = BoundingBox::empty();
        for n in set.iter() {
            extent.union(&n.bbox);
        }
        let (cols, rows) = if extent.is_empty() {
            (0, 0)
        } else {
            let side = axis_cells(set.len());
            let cols = if extent.max_lon > extent.min_lon { side } else { 1 };
            let rows = if extent.max_lat > extent.min_lat { side } else { 1 };
            (cols, rows)
        };
        let mut index = SpatialIndex {
            set: set.clone(),
            extent,
            cols,
            rows,
            cells: vec![Vec::new(); cols * rows],
        };
        for (i, n) in set.iter().enumerate() {
            if n.bbox.is_empty() {
                continue;
            }
            let (c0, r0) = index.cell_of(n.bbox.min_lon, n.bbox.min_lat);
            let (c1, r1) = index.cell_of(n.bbox.max_lon, n.bbox.max_lat);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    index.cells[r * cols + c].push(i as u32);
                }
            }
        }
        index
    }

    fn cell_of(&self, lon: f64, lat: f64) -> (usize, usize) {
        let pick = |v: f64, lo: f64, hi: f64, n: usize| -> usize {
            if n <= 1 || hi <= lo {
                return 0;
            }
            let f = ((v - lo) / (hi - lo) * n as f64).floor();
            (f.max(0.0) as usize).min(n - 1)
        };
        (
            pick(lon, self.extent.min_lon, self.extent.max_lon, self.cols),
            pick(lat, self.extent.min_lat, self.extent.max_lat, self.rows),
        )
    }

    pub fn neighborhoods(&self) -> &NeighborhoodSet {
        &self.set
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    fn candidate_positions(&self, lat: f64, lon: f64) -> impl Iterator<Item = usize> + '_ {
        let cell = if self.cells.is_empty() || !self.extent.contains(lon, lat) {
            None
        } else {
            let (c, r) = self.cell_of(lon, lat);
            Some(&self.cells[r * self.cols + c])
        };
        cell.into_iter()
            .flatten()
            .map(|i| *i as usize)
            .filter(move |i| self.set.as_slice()[*i].bbox.contains(lon, lat))
    }

    /// Districts whose bounding box contains the point, in id order.
    pub fn candidates(&self, lat: f64, lon: f64) -> Vec<&NeighborhoodId> {
        self.candidate_positions(lat, lon)
            .map(|i| &self.set.as_slice()[i].id)
            .collect()
    }

    /// The district containing the point. Points on a shared edge go to the
    /// smallest containing id.
    pub fn locate(&self, lat: f64, lon: f64) -> Option<&NeighborhoodId> {
        self.candidate_positions(lat, lon)
            .map(|i| &self.set.as_slice()[i])
            .find(|n| n.contains(lon, lat))
            .map(|n| &n.id)
    }
}

pub fn build_spatial_index(set: &NeighborhoodSet) -> SpatialIndex {
    SpatialIndex::build(set)
}

pub fn locate_point(index: &SpatialIndex, lat: f64, lon: f64) -> Option<NeighborhoodId> {
    index.locate(lat, lon).cloned()
}
