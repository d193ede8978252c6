use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;
use crate::ingest::{CrimeIncident, PostRecord};
use crate::locate::NeighborhoodSet;
use crate::model::{midnight, CategoryId, CategoryRegistry, NeighborhoodId, Source};

pub const SNAPSHOT_FORMAT: &str = "vcfat-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported snapshot format {format:?} version {version}")]
    Format { format: String, version: u32 },
    #[error("snapshot is inconsistent: {0}")]
    Corrupt(String),
    #[error("build id mismatch: file says {stored}, content hashes to {computed}")]
    BuildIdMismatch { stored: String, computed: String },
}

/// Per-source record accounting. Only `counted` records (located and
/// categorized) occupy cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTotals {
    pub records: u64,
    pub located: u64,
    pub classified: u64,
    pub counted: u64,
}

/// Earliest and latest counted event instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
}

/// Immutable dense counts cube: source x district x category x day.
///
/// Days run from `first_day` for `days` days, covering every counted record.
/// Coarser granularities are rolled up from the day cells at query time.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSnapshot {
    neighborhoods: NeighborhoodSet,
    registry: CategoryRegistry,
    first_day: Option<NaiveDate>,
    days: usize,
    counts: Vec<u64>,
    // Per-row running sums, `days + 1` entries per (source, district, category).
    prefix: Vec<u64>,
    totals: BTreeMap<Source, SourceTotals>,
    period: Option<Period>,
    build_id: String,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    source: usize,
    district: usize,
    category: usize,
    at: DateTime<Utc>,
}

fn crime_hit(c: &CrimeIncident, set: &NeighborhoodSet, reg: &CategoryRegistry) -> (bool, bool, Option<Hit>) {
    let district = c.neighborhood.as_ref().and_then(|n| set.position(n));
    let category = reg.position(&c.category);
    let hit = district.zip(category).map(|(district, category)| Hit {
        source: Source::Crime.index(),
        district,
        category,
        at: c.occurred_at,
    });
    (district.is_some(), category.is_some(), hit)
}

fn post_hit(p: &PostRecord, set: &NeighborhoodSet, reg: &CategoryRegistry) -> (bool, bool, Option<Hit>) {
    let district = p
        .location
        .as_ref()
        .and_then(|l| l.neighborhood.as_ref())
        .and_then(|n| set.position(n));
    let category = p.category.as_ref().and_then(|c| reg.position(c));
    let hit = district.zip(category).map(|(district, category)| Hit {
        source: Source::Post.index(),
        district,
        category,
        at: p.created_at,
    });
    (district.is_some(), category.is_some(), hit)
}

fn tally(outcomes: &[(bool, bool, Option<Hit>)]) -> SourceTotals {
    SourceTotals {
        records: outcomes.len() as u64,
        located: outcomes.iter().filter(|o| o.0).count() as u64,
        classified: outcomes.iter().filter(|o| o.1).count() as u64,
        counted: outcomes.iter().filter(|o| o.2.is_some()).count() as u64,
    }
}

fn running_sums(counts: &[u64], days: usize) -> Vec<u64> {
    if days == 0 {
        return Vec::new();
    }
    let rows = counts.len() / days;
    let mut prefix = Vec::with_capacity(rows * (days + 1));
    for row in counts.chunks_exact(days) {
        let mut acc = 0;
        prefix.push(0);
        for v in row {
            acc += v;
            prefix.push(acc);
        }
    }
    prefix
}

/// Builds the cube. Crimes count under their `neighborhood`, posts under
/// their assigned district (the first mention for ambiguous posts); records
/// lacking a known district or category appear only in the totals.
pub fn build_snapshot(
    crimes: &[CrimeIncident],
    posts: &[PostRecord],
    neighborhoods: &NeighborhoodSet,
    registry: &CategoryRegistry,
    exec: Execution,
) -> AggregateSnapshot {
    let crime_out = exec.map(crimes, |c| crime_hit(c, neighborhoods, registry));
    let post_out = exec.map(posts, |p| post_hit(p, neighborhoods, registry));
    let mut totals = BTreeMap::new();
    totals.insert(Source::Crime, tally(&crime_out));
    totals.insert(Source::Post, tally(&post_out));

    let hits: Vec<Hit> = crime_out
        .iter()
        .chain(&post_out)
        .filter_map(|o| o.2)
        .collect();
    let period = hits.iter().fold(None, |acc: Option<Period>, h| {
        Some(match acc {
            None => Period { from: h.at, to: h.at },
            Some(p) => Period {
                from: p.from.min(h.at),
                to: p.to.max(h.at),
            },
        })
    });
    let first_day = period.map(|p| p.from.date_naive());
    let days = period
        .map(|p| (p.to.date_naive() - p.from.date_naive()).num_days() as usize + 1)
        .unwrap_or(0);

    let (nd, nc) = (neighborhoods.len(), registry.len());
    let counts = exec.histogram(&hits, Source::ALL.len() * nd * nc * days, |h| {
        let day = (h.at.date_naive() - first_day?).num_days() as usize;
        Some(((h.source * nd + h.district) * nc + h.category) * days + day)
    });

    let mut snapshot = AggregateSnapshot {
        neighborhoods: neighborhoods.clone(),
        registry: registry.clone(),
        first_day,
        days,
        prefix: running_sums(&counts, days),
        counts,
        totals,
        period,
        build_id: String::new(),
    };
    snapshot.build_id = snapshot.content_hash();
    snapshot
}

/// On-disk layout. `cells` lists every nonzero cell as
/// `[source, district, category, day, count]` using axis positions.
#[derive(Serialize, Deserialize)]
struct SnapshotBody {
    format: String,
    version: u32,
    first_day: Option<NaiveDate>,
    days: usize,
    period: Option<Period>,
    totals: BTreeMap<Source, SourceTotals>,
    categories: CategoryRegistry,
    neighborhoods: NeighborhoodSet,
    cells: Vec<[u64; 5]>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    build_id: String,
    #[serde(flatten)]
    body: SnapshotBody,
}

fn hash_body(body: &SnapshotBody) -> String {
    let bytes = serde_json::to_vec(body).expect("snapshot body serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl AggregateSnapshot {
    pub fn build_id(&self) -> &str {
        &self.build_id
    }

    pub fn neighborhoods(&self) -> &NeighborhoodSet {
        &self.neighborhoods
    }

    pub fn registry(&self) -> &CategoryRegistry {
        &self.registry
    }

    pub fn totals(&self, source: Source) -> SourceTotals {
        self.totals.get(&source).copied().unwrap_or_default()
    }

    pub fn all_totals(&self) -> &BTreeMap<Source, SourceTotals> {
        &self.totals
    }

    pub fn period(&self) -> Option<Period> {
        self.period
    }

    pub fn first_day(&self) -> Option<NaiveDate> {
        self.first_day
    }

    pub fn days(&self) -> usize {
        self.days
    }

    /// Half-open day-aligned range covering all cells; a fixed one-day range
    /// at the epoch for an empty snapshot.
    pub fn default_range(&self) -> (DateTime<Utc>, DateTime<Utc>) {
        let first = self
            .first_day
            .unwrap_or(NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch"));
        let days = self.days.max(1) as i64;
        (midnight(first), midnight(first + Duration::days(days)))
    }

    fn row(&self, source: Source, district: usize, category: usize) -> usize {
        (source.index() * self.neighborhoods.len() + district) * self.registry.len() + category
    }

    /// Count of one day cell.
    pub fn cell(&self, source: Source, district: &NeighborhoodId, category: &CategoryId, day: NaiveDate) -> u64 {
        let (Some(d), Some(c), Some(first)) = (
            self.neighborhoods.position(district),
            self.registry.position(category),
            self.first_day,
        ) else {
            return 0;
        };
        let offset = (day - first).num_days();
        if offset < 0 || offset as usize >= self.days {
            return 0;
        }
        self.counts[self.row(source, d, c) * self.days + offset as usize]
    }

    /// Sum over day indices `lo..hi` of one (source, district, category) row.
    pub(crate) fn row_sum(&self, source: Source, district: usize, category: usize, lo: usize, hi: usize) -> u64 {
        if lo >= hi {
            return 0;
        }
        let base = self.row(source, district, category) * (self.days + 1);
        self.prefix[base + hi] - self.prefix[base + lo]
    }

    /// Cube day indices for the dates `start..=end_inclusive`, clipped.
    pub(crate) fn day_span(&self, start: NaiveDate, end_inclusive: NaiveDate) -> Option<(usize, usize)> {
        let first = self.first_day?;
        let lo = (start - first).num_days().max(0);
        let hi = ((end_inclusive - first).num_days() + 1).min(self.days as i64);
        (lo < hi).then_some((lo as usize, hi as usize))
    }

    /// Every nonzero day cell as `(source, district, category, day, count)`.
    pub fn nonzero_cells(&self) -> impl Iterator<Item = (Source, &NeighborhoodId, &CategoryId, NaiveDate, u64)> + '_ {
        let (nd, nc, days) = (self.neighborhoods.len(), self.registry.len(), self.days);
        let districts = self.neighborhoods.as_slice();
        let categories: Vec<&CategoryId> = self.registry.ids().collect();
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0)
            .map(move |(i, v)| {
                let day = i % days;
                let row = i / days;
                let c = row % nc;
                let d = (row / nc) % nd;
                let s = Source::ALL[row / (nc * nd)];
                (
                    s,
                    &districts[d].id,
                    categories[c],
                    self.first_day.expect("cells imply a first day") + Duration::days(day as i64),
                    *v,
                )
            })
    }

    /// Per-source counts by category over the whole snapshot.
    pub fn category_totals(&self) -> BTreeMap<Source, BTreeMap<CategoryId, u64>> {
        let mut out = BTreeMap::new();
        for s in Source::ALL {
            let mut per = BTreeMap::new();
            for (c, id) in self.registry.ids().enumerate() {
                let sum = (0..self.neighborhoods.len())
                    .map(|d| self.row_sum(s, d, c, 0, self.days))
                    .sum();
                per.insert(id.clone(), sum);
            }
            out.insert(s, per);
        }
        out
    }

    fn body(&self) -> SnapshotBody {
        let (nd, nc, days) = (self.neighborhoods.len(), self.registry.len(), self.days);
        let cells = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0)
            .map(|(i, v)| {
                let row = i / days;
                [
                    (row / (nc * nd)) as u64,
                    ((row / nc) % nd) as u64,
                    (row % nc) as u64,
                    (i % days) as u64,
                    *v,
                ]
            })
            .collect();
        SnapshotBody {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            first_day: self.first_day,
            days,
            period: self.period,
            totals: self.totals.clone(),
            categories: self.registry.clone(),
            neighborhoods: self.neighborhoods.clone(),
            cells,
        }
    }

    fn content_hash(&self) -> String {
        hash_body(&self.body())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let file = SnapshotFile {
            build_id: self.build_id.clone(),
            body: self.body(),
        };
        serde_json::to_vec(&file).expect("snapshot serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let file: SnapshotFile = serde_json::from_slice(bytes)?;
        let body = file.body;
        if body.format != SNAPSHOT_FORMAT || body.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Format {
                format: body.format,
                version: body.version,
            });
        }
        let computed = hash_body(&body);
        if computed != file.build_id {
            return Err(SnapshotError::BuildIdMismatch {
                stored: file.build_id,
                computed,
            });
        }
        let (nd, nc, days) = (body.neighborhoods.len(), body.categories.len(), body.days);
        let mut counts = vec![0u64; Source::ALL.len() * nd * nc * days];
        for [s, d, c, day, v] in body.cells {
            let (s, d, c, day) = (s as usize, d as usize, c as usize, day as usize);
            if s >= Source::ALL.len() || d >= nd || c >= nc || day >= days {
                return Err(SnapshotError::Corrupt(format!("cell [{s},{d},{c},{day}] out of bounds")));
            }
            counts[((s * nd + d) * nc + c) * days + day] = v;
        }
        Ok(Self {
            neighborhoods: body.neighborhoods,
            registry: body.categories,
            first_day: body.first_day,
            days,
            prefix: running_sums(&counts, days),
            counts,
            totals: body.totals,
            period: body.period,
            build_id: file.build_id,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(&self.to_json())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        Self::from_json(&fs::read(path)?)
    }
}
