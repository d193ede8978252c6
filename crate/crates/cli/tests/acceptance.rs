//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every check compares the engine against an oracle written here,
//! independently of the engine code.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration as StdDuration, Instant};

use axum::body::Body;
use axum::http::Request;
use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc};
use http_body_util::BodyExt;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::Value;
use tower::ServiceExt;

use vcfat_core::analytics::{
    build_snapshot, cumulative, meta, query_counts, render_view, spearman, timeline, AggregateSnapshot, Series,
    SeriesPoint, ViewKind,
};
use vcfat_core::config::Settings;
use vcfat_core::exec::Execution;
use vcfat_core::ingest::{filter_minor_traffic, parse_crime_csv, parse_neighborhoods, parse_posts, CrimeIncident, PostRecord};
use vcfat_core::locate::{
    build_spatial_index, locate_point, GeocodeCache, LocateMethod, LocationAssignment, Neighborhood, NeighborhoodSet,
};
use vcfat_core::model::{
    bucket_of, buckets_in_range, slugify, AnalyticsQuery, Category, CategoryId, CategoryRegistry, Granularity,
    NeighborhoodId, QueryParams, Source, SourceSelector, REQUIRED_CATEGORIES,
};
use vcfat_core::pipeline::{ingest_files, ingest_readers, stub_geocoder, IngestInputs};
use vcfat_service::{router, AppState};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Calendar oracle: ISO-8601 arithmetic by hand, no chrono week support.

fn is_leap(y: i32) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn weeks_in_year(y: i32) -> u32 {
    // A year has 53 ISO weeks when it starts on a Thursday, or on a
    // Wednesday in a leap year.
    let jan1 = NaiveDate::from_ymd_opt(y, 1, 1).unwrap().weekday().number_from_monday();
    if jan1 == 4 || (jan1 == 3 && is_leap(y)) {
        53
    } else {
        52
    }
}

fn oracle_iso_week(d: NaiveDate) -> (i32, u32) {
    let weekday = d.weekday().number_from_monday() as i32;
    let week = (d.ordinal() as i32 - weekday + 10) / 7;
    if week < 1 {
        (d.year() - 1, weeks_in_year(d.year() - 1))
    } else if week as u32 > weeks_in_year(d.year()) {
        (d.year() + 1, 1)
    } else {
        (d.year(), week as u32)
    }
}

fn oracle_bucket_start(d: NaiveDate, g: Granularity) -> NaiveDate {
    match g {
        Granularity::Day => d,
        Granularity::Week => d - Duration::days(d.weekday().number_from_monday() as i64 - 1),
        Granularity::Month => NaiveDate::from_ymd_opt(d.year(), d.month(), 1).unwrap(),
        Granularity::Year => NaiveDate::from_ymd_opt(d.year(), 1, 1).unwrap(),
    }
}

fn oracle_next_start(d: NaiveDate, g: Granularity) -> NaiveDate {
    match g {
        Granularity::Day => d + Duration::days(1),
        Granularity::Week => d + Duration::days(7),
        Granularity::Month if d.month() == 12 => NaiveDate::from_ymd_opt(d.year() + 1, 1, 1).unwrap(),
        Granularity::Month => NaiveDate::from_ymd_opt(d.year(), d.month() + 1, 1).unwrap(),
        Granularity::Year => NaiveDate::from_ymd_opt(d.year() + 1, 1, 1).unwrap(),
    }
}

fn oracle_key(d: NaiveDate, g: Granularity) -> String {
    match g {
        Granularity::Day => format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day()),
        Granularity::Week => {
            let (y, w) = oracle_iso_week(d);
            format!("{y:04}-W{w:02}")
        }
        Granularity::Month => format!("{:04}-{:02}", d.year(), d.month()),
        Granularity::Year => format!("{:04}", d.year()),
    }
}

fn calendar() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2015);
    let lo = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap().timestamp();
    let hi = Utc.with_ymd_and_hms(2031, 1, 1, 0, 0, 0).unwrap().timestamp();
    let mut instants: Vec<DateTime<Utc>> =
        (0..1000).map(|_| Utc.timestamp_opt(rng.gen_range(lo..hi), rng.gen_range(0..1_000_000_000)).unwrap()).collect();
    // Year-boundary ISO-week cases, each at the first and last instant of the day.
    for (y, m, d) in [(2019, 12, 31), (2020, 12, 31), (2021, 1, 3), (2016, 1, 1), (2026, 12, 31), (2027, 1, 1), (2024, 12, 30), (2015, 12, 31)] {
        let day = Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap();
        instants.push(day);
        instants.push(day + Duration::days(1) - Duration::nanoseconds(1));
    }
    let mut checked = 0;
    for t in &instants {
        for g in Granularity::ALL {
            let b = bucket_of(*t, g);
            let start = oracle_bucket_start(t.date_naive(), g);
            ensure(b.key() == oracle_key(start, g), || format!("{t} {g:?}: engine {} oracle {}", b.key(), oracle_key(start, g)))?;
            ensure(b.start() == start && b.end() == oracle_next_start(start, g), || format!("{t} {g:?}: bucket span"))?;
            checked += 1;
        }
    }
    let key = bucket_of(Utc.with_ymd_and_hms(2019, 12, 31, 12, 0, 0).unwrap(), Granularity::Week).key();
    ensure(key == "2020-W01", || format!("2019-12-31 gave {key}"))?;
    Ok(format!("{} instants, {checked} bucket assignments, 2019-12-31 -> {key}", instants.len()))
}

// ---------------------------------------------------------------------------
// Synthetic datasets and the per-record scan oracle.

struct Dataset {
    set: NeighborhoodSet,
    registry: CategoryRegistry,
    crimes: Vec<CrimeIncident>,
    posts: Vec<PostRecord>,
}

/// A counted record as the oracle sees it.
struct Flat {
    source: Source,
    district: String,
    category: String,
    date: NaiveDate,
}

fn registry8() -> CategoryRegistry {
    let mut cats: Vec<Category> = REQUIRED_CATEGORIES
        .iter()
        .map(|c| Category { id: CategoryId::from(*c), display_name: c.to_string() })
        .collect();
    cats.push(Category { id: "other".into(), display_name: "Other".into() });
    CategoryRegistry::new(cats).unwrap()
}

fn square_set(n: usize) -> NeighborhoodSet {
    NeighborhoodSet::new(
        (0..n)
            .map(|i| {
                let x = i as f64;
                let ring = vec![[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0], [x, 0.0]];
                Neighborhood::new(format!("d{i}").as_str().into(), format!("District {i}"), vec![vec![ring]])
            })
            .collect(),
    )
}

fn synthetic(rng: &mut StdRng) -> Dataset {
    let nd = rng.gen_range(1..=10);
    let set = square_set(nd);
    let registry = registry8();
    let cats: Vec<CategoryId> = registry.ids().cloned().collect();
    let n = rng.gen_range(0..=10_000);
    let lo = Utc.with_ymd_and_hms(2017, 6, 1, 0, 0, 0).unwrap().timestamp();
    let hi = Utc.with_ymd_and_hms(2023, 6, 1, 0, 0, 0).unwrap().timestamp();
    let mut crimes = Vec::new();
    let mut posts = Vec::new();
    for i in 0..n {
        let at = Utc.timestamp_opt(rng.gen_range(lo..hi), 0).unwrap();
        let district = match rng.gen_range(0..100) {
            0..=3 => None,
            4 => Some(NeighborhoodId::from("unknown")),
            _ => Some(NeighborhoodId::from(format!("d{}", rng.gen_range(0..nd)).as_str())),
        };
        let category = cats[rng.gen_range(0..cats.len())].clone();
        if rng.gen_bool(0.6) {
            crimes.push(CrimeIncident {
                incident_id: i.to_string(),
                occurred_at: at,
                reported_at: at,
                category: category.clone(),
                raw_category: category.to_string(),
                neighborhood: district,
                police_district: String::new(),
                latitude: 0.5,
                longitude: 0.5,
                clock_skew: false,
            });
        } else {
            let method = if district.is_some() { LocateMethod::TextMention } else { LocateMethod::Unresolved };
            posts.push(PostRecord {
                post_id: i.to_string(),
                created_at: at,
                text: String::new(),
                latitude: None,
                longitude: None,
                location: Some(LocationAssignment {
                    neighborhood: district,
                    method,
                    ambiguous: false,
                    mentions: vec![],
                    degraded: None,
                }),
                category: rng.gen_bool(0.85).then_some(category),
            });
        }
    }
    Dataset { set, registry, crimes, posts }
}

fn flatten(ds: &Dataset) -> Vec<Flat> {
    let known = |d: &NeighborhoodId| ds.set.ids().any(|k| k == d);
    let mut out = Vec::new();
    for c in &ds.crimes {
        if let Some(d) = c.neighborhood.as_ref().filter(|d| known(d)) {
            out.push(Flat { source: Source::Crime, district: d.to_string(), category: c.category.to_string(), date: c.occurred_at.date_naive() });
        }
    }
    for p in &ds.posts {
        let d = p.location.as_ref().and_then(|l| l.neighborhood.as_ref()).filter(|d| known(d));
        if let (Some(d), Some(c)) = (d, &p.category) {
            out.push(Flat { source: Source::Post, district: d.to_string(), category: c.to_string(), date: p.created_at.date_naive() });
        }
    }
    out
}

struct Range {
    from: DateTime<Utc>,
    to: DateTime<Utc>,
}

impl Range {
    /// Inclusive calendar-day bounds: the day of `from` through the day of
    /// the last instant before `to`.
    fn days(&self) -> (NaiveDate, NaiveDate) {
        (self.from.date_naive(), (self.to - Duration::nanoseconds(1)).date_naive())
    }
}

fn selected(r: &Flat, source: Source, category: Option<&str>, lo: NaiveDate, hi: NaiveDate) -> bool {
    r.source == source && r.date >= lo && r.date <= hi && category.is_none_or(|c| c == r.category)
}

fn oracle_counts(ds: &Dataset, flat: &[Flat], source: Source, category: Option<&str>, range: &Range) -> BTreeMap<String, u64> {
    let (lo, hi) = range.days();
    let mut out: BTreeMap<String, u64> = ds.set.ids().map(|d| (d.to_string(), 0)).collect();
    for r in flat.iter().filter(|r| selected(r, source, category, lo, hi)) {
        *out.get_mut(&r.district).unwrap() += 1;
    }
    out
}

fn oracle_timeline(flat: &[Flat], source: Source, category: Option<&str>, range: &Range, g: Granularity) -> Vec<(String, u64)> {
    let (lo, hi) = range.days();
    let mut starts = Vec::new();
    let mut s = oracle_bucket_start(lo, g);
    while s <= hi {
        starts.push(s);
        s = oracle_next_start(s, g);
    }
    let mut counts = vec![0u64; starts.len()];
    for r in flat.iter().filter(|r| selected(r, source, category, lo, hi)) {
        let b = oracle_bucket_start(r.date, g);
        counts[starts.binary_search(&b).unwrap()] += 1;
    }
    starts.iter().map(|s| oracle_key(*s, g)).zip(counts).collect()
}

fn random_instant(rng: &mut StdRng, lo_year: i32, hi_year: i32) -> DateTime<Utc> {
    let lo = Utc.with_ymd_and_hms(lo_year, 1, 1, 0, 0, 0).unwrap().timestamp();
    let hi = Utc.with_ymd_and_hms(hi_year, 1, 1, 0, 0, 0).unwrap().timestamp();
    Utc.timestamp_opt(rng.gen_range(lo..hi), 0).unwrap()
}

fn ranges(rng: &mut StdRng) -> Vec<Range> {
    let a = random_instant(rng, 2017, 2024);
    let b = random_instant(rng, 2017, 2024);
    let midnight = |y, m, d| Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap();
    vec![
        Range { from: midnight(2017, 1, 1), to: midnight(2024, 1, 1) },
        Range { from: a.min(b), to: a.max(b) + Duration::seconds(1) },
        Range { from: midnight(2010, 3, 1), to: midnight(2011, 1, 1) },
    ]
}

fn engine_keys(series: &Series) -> Vec<(String, u64)> {
    series.points.iter().map(|p| (p.bucket.key(), p.count)).collect()
}

struct SyntheticResults {
    aggregation: Outcome,
    rollup: Outcome,
}

fn synthetic_suite() -> SyntheticResults {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(100);
    let mut agg_queries = 0usize;
    let mut max_records = 0usize;
    let mut agg_err: Option<String> = None;
    let mut rollup_err: Option<String> = None;
    let mut rollup_checks = 0usize;
    for n in 0..100 {
        let ds = synthetic(&mut rng);
        max_records = max_records.max(ds.crimes.len() + ds.posts.len());
        let flat = flatten(&ds);
        let snapshot = build_snapshot(&ds.crimes, &ds.posts, &ds.set, &ds.registry, Execution::default());
        if n % 10 == 0 {
            let seq = build_snapshot(&ds.crimes, &ds.posts, &ds.set, &ds.registry, Execution::Sequential);
            if seq != snapshot && agg_err.is_none() {
                agg_err = Some(format!("dataset {n}: sequential and parallel snapshots differ"));
            }
        }
        let mut categories: Vec<Option<CategoryId>> = vec![None];
        categories.extend(ds.registry.ids().cloned().map(Some));
        for range in ranges(&mut rng) {
            for category in &categories {
                let cat = category.as_ref().map(CategoryId::as_str);
                for source in Source::ALL {
                    let q = AnalyticsQuery::new(source.into(), range.from, range.to, Granularity::Day, category.clone(), &ds.registry).unwrap();
                    let got: BTreeMap<String, u64> = query_counts(&snapshot, &q).unwrap().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
                    agg_queries += 1;
                    if got != oracle_counts(&ds, &flat, source, cat, &range) && agg_err.is_none() {
                        agg_err = Some(format!("dataset {n}: query_counts {source:?} {cat:?} {}..{}", range.from, range.to));
                    }
                }
                let mut per_g: BTreeMap<Granularity, Vec<Series>> = BTreeMap::new();
                for g in Granularity::ALL {
                    let q = AnalyticsQuery::new(SourceSelector::Both, range.from, range.to, g, category.clone(), &ds.registry).unwrap();
                    let series = timeline(&snapshot, &q).unwrap();
                    agg_queries += 1;
                    for s in &series {
                        if engine_keys(s) != oracle_timeline(&flat, s.source, cat, &range, g) && agg_err.is_none() {
                            agg_err = Some(format!("dataset {n}: timeline {:?} {g:?} {cat:?}", s.source));
                        }
                    }
                    per_g.insert(g, series);
                }
                // Roll-ups: every coarse bucket equals the sum of the finer
                // buckets it contains.
                for (fine, coarse) in [(Granularity::Day, Granularity::Week), (Granularity::Day, Granularity::Month), (Granularity::Month, Granularity::Year)] {
                    for (fs, cs) in per_g[&fine].iter().zip(&per_g[&coarse]) {
                        // Both series are sorted, so one merge pass suffices.
                        let mut fine_points = fs.points.iter().peekable();
                        for p in &cs.points {
                            let mut sum = 0;
                            while let Some(f) = fine_points.next_if(|f| f.bucket.start() < p.bucket.end()) {
                                if p.bucket.contains_date(f.bucket.start()) {
                                    sum += f.count;
                                }
                            }
                            rollup_checks += 1;
                            if sum != p.count && rollup_err.is_none() {
                                rollup_err = Some(format!("dataset {n}: {fine:?}->{coarse:?} bucket {}", p.bucket.key()));
                            }
                        }
                    }
                }
            }
            // Category partition: the per-category maps sum to the unfiltered map.
            for source in Source::ALL {
                let q = AnalyticsQuery::new(source.into(), range.from, range.to, Granularity::Year, None, &ds.registry).unwrap();
                let all = query_counts(&snapshot, &q).unwrap();
                let mut summed: BTreeMap<NeighborhoodId, u64> = BTreeMap::new();
                for c in ds.registry.ids() {
                    let qc = AnalyticsQuery { category: Some(c.clone()), ..q.clone() };
                    for (d, v) in query_counts(&snapshot, &qc).unwrap() {
                        *summed.entry(d).or_default() += v;
                    }
                }
                rollup_checks += 1;
                if summed != all && rollup_err.is_none() {
                    rollup_err = Some(format!("dataset {n}: category partition {source:?}"));
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let aggregation = match agg_err {
        Some(e) => Err(e),
        None if elapsed > StdDuration::from_secs(60) => Err(format!("took {elapsed:.1?}, limit 60 s")),
        None => Ok(format!("100 datasets (max {max_records} records), {agg_queries} queries exact in {elapsed:.1?}")),
    };
    let rollup = match rollup_err {
        Some(e) => Err(e),
        None => Ok(format!("{rollup_checks} day/week/month/year and category-partition identities")),
    };
    SyntheticResults { aggregation, rollup }
}

// ---------------------------------------------------------------------------
// Point-in-polygon oracle: a vertical ray (toward +lat) read straight from
// the GeoJSON, independent of the engine's geometry.

struct OraclePolygon {
    id: String,
    rings: Vec<Vec<[f64; 2]>>,
}

fn oracle_polygons(path: &PathBuf) -> Vec<OraclePolygon> {
    let v: Value = serde_json::from_reader(File::open(path).unwrap()).unwrap();
    let ring = |r: &Value| -> Vec<[f64; 2]> {
        r.as_array().unwrap().iter().map(|p| [p[0].as_f64().unwrap(), p[1].as_f64().unwrap()]).collect()
    };
    v["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            let g = &f["geometry"];
            let polys: Vec<&Value> = match g["type"].as_str().unwrap() {
                "Polygon" => vec![&g["coordinates"]],
                _ => g["coordinates"].as_array().unwrap().iter().collect(),
            };
            OraclePolygon {
                id: slugify(f["properties"]["name"].as_str().unwrap()),
                rings: polys.iter().flat_map(|p| p.as_array().unwrap().iter().map(ring)).collect(),
            }
        })
        .collect()
}

fn edges(p: &OraclePolygon) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
    p.rings.iter().flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
}

fn oracle_inside(p: &OraclePolygon, x: f64, y: f64) -> bool {
    let mut inside = false;
    for (a, b) in edges(p) {
        if (a[0] > x) != (b[0] > x) {
            let yi = a[1] + (x - a[0]) * (b[1] - a[1]) / (b[0] - a[0]);
            if yi > y {
                inside = !inside;
            }
        }
    }
    inside
}

fn segment_distance(a: [f64; 2], b: [f64; 2], x: f64, y: f64) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((x - a[0]) * dx + (y - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    ((a[0] + t * dx - x).powi(2) + (a[1] + t * dy - y).powi(2)).sqrt()
}

fn boundary_distance(polys: &[OraclePolygon], x: f64, y: f64) -> f64 {
    polys.iter().flat_map(edges).map(|(a, b)| segment_distance(a, b, x, y)).fold(f64::INFINITY, f64::min)
}

fn exactly_on_edge(p: &OraclePolygon, x: f64, y: f64) -> bool {
    edges(p).any(|(a, b)| {
        let cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
        cross == 0.0 && x >= a[0].min(b[0]) && x <= a[0].max(b[0]) && y >= a[1].min(b[1]) && y <= a[1].max(b[1])
    })
}

fn point_in_polygon() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let mut report = Vec::new();
    for name in ["districts.geojson", "districts_shapes.geojson"] {
        let path = fixture(name);
        let polys = oracle_polygons(&path);
        let set = parse_neighborhoods(File::open(&path).unwrap(), &["name".to_string()]).unwrap();
        let index = build_spatial_index(&set);
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for (a, _) in polys.iter().flat_map(edges) {
            (x0, y0, x1, y1) = (x0.min(a[0]), y0.min(a[1]), x1.max(a[0]), y1.max(a[1]));
        }
        let (mx, my) = ((x1 - x0) * 0.1, (y1 - y0) * 0.1);
        let mut interior = 0;
        let mut skipped = 0;
        for _ in 0..2000 {
            let x = rng.gen_range(x0 - mx..x1 + mx);
            let y = rng.gen_range(y0 - my..y1 + my);
            if boundary_distance(&polys, x, y) < 1e-9 {
                skipped += 1;
                continue;
            }
            let mut hits: Vec<&str> = polys.iter().filter(|p| oracle_inside(p, x, y)).map(|p| p.id.as_str()).collect();
            hits.sort();
            let got = locate_point(&index, y, x);
            ensure(got.as_ref().map(|i| i.as_str()) == hits.first().copied(), || {
                format!("{name}: ({x}, {y}) engine {got:?} oracle {hits:?}")
            })?;
            interior += 1;
        }
        // Boundary: every vertex and the midpoint of every axis-aligned edge.
        let mut boundary = 0;
        for (a, b) in polys.iter().flat_map(edges) {
            let mut pts = vec![a];
            if a[0] == b[0] || a[1] == b[1] {
                pts.push([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]);
            }
            for [x, y] in pts {
                let mut owners: Vec<&str> = polys
                    .iter()
                    .filter(|p| exactly_on_edge(p, x, y) || oracle_inside(p, x, y))
                    .map(|p| p.id.as_str())
                    .collect();
                owners.sort();
                let got = locate_point(&index, y, x);
                ensure(got.as_ref().map(|i| i.as_str()) == owners.first().copied(), || {
                    format!("{name}: boundary ({x}, {y}) engine {got:?} expected smallest of {owners:?}")
                })?;
                boundary += 1;
            }
        }
        report.push(format!("{name}: {interior} interior/exterior + {boundary} boundary ({skipped} near-edge skipped)"));
    }
    Ok(report.join("; "))
}

// ---------------------------------------------------------------------------

fn cumulative_contract() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let make = |counts: &[u64]| -> Series {
        let from = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap();
        let to = from + Duration::days(counts.len().max(1) as i64);
        let buckets = buckets_in_range(from, to, Granularity::Day).unwrap();
        Series {
            source: Source::Crime,
            granularity: Granularity::Day,
            cumulative: false,
            points: buckets.into_iter().zip(counts).map(|(bucket, &count)| SeriesPoint { bucket, count }).collect(),
        }
    };
    let values = |s: &Series| s.points.iter().map(|p| p.count).collect::<Vec<_>>();
    ensure(values(&cumulative(&make(&[3, 0, 2]))) == [3, 3, 5], || "[3,0,2] did not give [3,3,5]".into())?;
    ensure(values(&cumulative(&make(&[]))).is_empty(), || "empty series".into())?;
    ensure(values(&cumulative(&make(&[7]))) == [7], || "[7]".into())?;
    for i in 0..1000 {
        let len = rng.gen_range(0..200);
        let counts: Vec<u64> = (0..len).map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(0..1_000_000) }).collect();
        let input = make(&counts);
        let out = cumulative(&input);
        let mut acc = 0;
        for (k, (p, q)) in input.points.iter().zip(&out.points).enumerate() {
            acc += p.count;
            ensure(q.count == acc && q.bucket == p.bucket, || format!("series {i} point {k}"))?;
        }
        ensure(out.points.windows(2).all(|w| w[0].count <= w[1].count), || format!("series {i} not monotone"))?;
        ensure(out.points.last().map_or(0, |p| p.count) == counts.iter().sum::<u64>(), || format!("series {i} last != total"))?;
    }
    Ok("examples + 1000 random series: prefix sums, monotone, last = total".into())
}

fn oracle_average_rank_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64], x: f64| {
        let less = v.iter().filter(|y| **y < x).count() as f64;
        let equal = v.iter().filter(|y| **y == x).count() as f64;
        less + (equal + 1.0) / 2.0
    };
    let rx: Vec<f64> = xs.iter().map(|x| rank(xs, *x)).collect();
    let ry: Vec<f64> = ys.iter().map(|y| rank(ys, *y)).collect();
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn spearman_check() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let mut max_delta: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.gen_range(2..=60usize);
        let xs: Vec<usize> = (0..n).collect();
        let mut ys = xs.clone();
        ys.shuffle(&mut rng);
        let d2: f64 = xs.iter().zip(&ys).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
        let nf = n as f64;
        let closed = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
        let fx: Vec<f64> = xs.iter().map(|v| *v as f64 * 3.5 - 1.0).collect();
        let fy: Vec<f64> = ys.iter().map(|v| (*v as f64).exp2()).collect();
        let rho = spearman(&fx, &fy).map_err(|e| format!("permutation {i}: {e}"))?;
        max_delta = max_delta.max((rho - closed).abs());
        ensure((rho - closed).abs() <= 1e-9, || format!("permutation {i}: {rho} vs closed form {closed}"))?;
    }
    let mut tied = 0;
    let mut degenerate = 0;
    for i in 0..1000 {
        let n = rng.gen_range(2..=40usize);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
        let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
        match spearman(&xs, &ys) {
            Ok(rho) => {
                let expected = oracle_average_rank_pearson(&xs, &ys);
                ensure((rho - expected).abs() <= 1e-9, || format!("tied case {i}: {rho} vs {expected}"))?;
                tied += 1;
            }
            Err(_) => {
                ensure(constant(&xs) || constant(&ys), || format!("tied case {i}: unexpected error"))?;
                degenerate += 1;
            }
        }
    }
    Ok(format!("1000 permutations (max |delta| {max_delta:.1e}); {tied} tied cases match average-rank Pearson, {degenerate} degenerate rejected"))
}

fn ingest_conservation() -> Outcome {
    let settings = Settings::load(Some(&fixture("config.toml"))).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for name in ["crimes.csv", "crimes_corrupt.csv", "crimes_traffic.csv"] {
        let (_, r) = parse_crime_csv(File::open(fixture(name)).unwrap(), &settings.columns, &settings.normalizer, Execution::default())
            .map_err(|e| format!("{name}: {e}"))?;
        ensure(r.rows_read == r.rows_accepted + r.rows_rejected && r.is_conserved(), || format!("{name}: {r:?}"))?;
        lines.push(format!("{name} {}={}+{}", r.rows_read, r.rows_accepted, r.rows_rejected));
    }
    for name in ["posts.ndjson", "posts_corrupt.ndjson"] {
        let (_, r) = parse_posts(File::open(fixture(name)).unwrap(), Execution::default()).map_err(|e| format!("{name}: {e}"))?;
        ensure(r.rows_read == r.rows_accepted + r.rows_rejected && r.is_conserved(), || format!("{name}: {r:?}"))?;
        lines.push(format!("{name} {}={}+{}", r.rows_read, r.rows_accepted, r.rows_rejected));
    }
    // The corrupted pair must actually exercise rejection.
    let (_, bad) = parse_crime_csv(File::open(fixture("crimes_corrupt.csv")).unwrap(), &settings.columns, &settings.normalizer, Execution::default()).unwrap();
    ensure(bad.rows_rejected >= 5, || "corrupted CSV rejected too few rows".into())?;

    // Traffic filter: removed ids are exactly the rows whose raw category
    // contains an exclusion phrase, read straight from the CSV.
    let mut expected_removed = Vec::new();
    let mut reader = csv::Reader::from_path(fixture("crimes_traffic.csv")).unwrap();
    for row in reader.records() {
        let row = row.unwrap();
        let raw = row[3].to_lowercase();
        if settings.config.exclusions.iter().any(|e| raw.contains(&e.to_lowercase())) {
            expected_removed.push(row[0].to_string());
        }
    }
    let (rows, _) = parse_crime_csv(File::open(fixture("crimes_traffic.csv")).unwrap(), &settings.columns, &settings.normalizer, Execution::default()).unwrap();
    let all: Vec<String> = rows.iter().map(|r| r.incident_id.clone()).collect();
    let (kept, removed) = filter_minor_traffic(rows, &settings.config.exclusions);
    let kept_ids: Vec<String> = kept.iter().map(|r| r.incident_id.clone()).collect();
    let removed_ids: Vec<String> = all.into_iter().filter(|id| !kept_ids.contains(id)).collect();
    ensure(removed_ids == expected_removed && removed == expected_removed.len(), || {
        format!("traffic filter removed {removed_ids:?}, expected {expected_removed:?}")
    })?;
    lines.push(format!("traffic filter {} kept / {} removed", kept.len(), removed));
    Ok(lines.join(", "))
}

fn geocode_cache() -> Outcome {
    let settings = Settings::load(Some(&fixture("config.toml"))).map_err(|e| e.to_string())?;
    let stub = stub_geocoder(&settings);
    let cache = GeocodeCache::new();
    let pass = |cache: &GeocodeCache| {
        ingest_readers(
            File::open(fixture("crimes.csv")).unwrap(),
            File::open(fixture("posts.ndjson")).unwrap(),
            File::open(fixture("districts.geojson")).unwrap(),
            &settings,
            Some(&stub),
            cache,
            Execution::default(),
        )
        .map_err(|e| e.to_string())
    };
    let first = pass(&cache)?;
    let calls = stub.calls();
    ensure(calls > 0, || "first pass made no provider calls".into())?;
    let second = pass(&cache)?;
    ensure(stub.calls() == calls, || format!("second pass made {} calls", stub.calls() - calls))?;
    let bytes = |s: &vcfat_core::pipeline::RecordStore| {
        serde_json::to_vec(&s.posts.iter().map(|p| &p.location).collect::<Vec<_>>()).unwrap()
    };
    ensure(bytes(&first) == bytes(&second), || "second pass assignments differ".into())?;

    // The same holds across processes: through the cache file.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("geocode.tsv");
    cache.save(&path).map_err(|e| e.to_string())?;
    let reloaded = GeocodeCache::load(&path).map_err(|e| e.to_string())?;
    let third = pass(&reloaded)?;
    ensure(stub.calls() == calls && bytes(&third) == bytes(&first), || "cache file pass differs".into())?;
    let geocoded = first.summary.posts_by_method.get("geocoded").copied().unwrap_or(0);
    Ok(format!("first pass {calls} provider calls ({geocoded} geocoded); second and cache-file passes 0 calls, byte-identical"))
}

async fn body(app: &axum::Router, uri: &str) -> (u16, Option<String>, Vec<u8>) {
    let resp = app.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status().as_u16();
    let id = resp.headers().get("x-build-id").map(|v| v.to_str().unwrap().to_string());
    (status, id, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn query_params(query: &str) -> QueryParams {
    let map: serde_json::Map<String, Value> = query
        .split('&')
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap();
            (k.to_string(), Value::String(v.to_string()))
        })
        .collect();
    serde_json::from_value(Value::Object(map)).unwrap()
}

fn transparency() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let inputs = IngestInputs {
        crimes: fixture("crimes.csv"),
        posts: fixture("posts.ndjson"),
        districts: fixture("districts.geojson"),
        config: Some(fixture("config.toml")),
        cache: None,
        stub_geocoder: true,
    };
    let snapshot = ingest_files(&inputs, Execution::default()).map_err(|e| e.to_string())?.snapshot(Execution::default());
    let rebuilt = ingest_files(&inputs, Execution::Sequential).map_err(|e| e.to_string())?.snapshot(Execution::Sequential);
    ensure(snapshot.build_id() == rebuilt.build_id(), || "rebuild changed build_id".into())?;
    let snapshot_path = dir.path().join("snapshot.json");
    snapshot.save(&snapshot_path).map_err(|e| e.to_string())?;
    let loaded = AggregateSnapshot::load(&snapshot_path).map_err(|e| e.to_string())?;
    ensure(loaded.build_id() == snapshot.build_id(), || "saved snapshot changed build_id".into())?;

    let app = router(Arc::new(AppState::new(loaded, None, None)), None);
    let rt = tokio::runtime::Runtime::new().unwrap();
    let mut queries = Vec::new();
    for g in ["", "granularity=day", "granularity=week", "granularity=month", "granularity=year"] {
        for c in ["", "category=theft", "category=arson", "category=assault"] {
            for r in ["", "from=2018-01-01&to=2023-01-01", "from=2019-06-15&to=2021-02-01", "from=2030-01-01&to=2031-01-01"] {
                queries.push([g, c, r].iter().filter(|s| !s.is_empty()).copied().collect::<Vec<_>>().join("&"));
            }
        }
    }
    let mut compared = 0;
    rt.block_on(async {
        let (_, id, m) = body(&app, "/api/meta").await;
        ensure(m == serde_json::to_vec(&meta(&snapshot)).unwrap(), || "/api/meta differs".into())?;
        ensure(id.as_deref() == Some(snapshot.build_id()), || "missing build id header".into())?;
        let (_, _, geo) = body(&app, "/api/neighborhoods").await;
        ensure(geo == serde_json::to_vec(&snapshot.neighborhoods().to_geojson()).unwrap(), || "/api/neighborhoods differs".into())?;
        for q in &queries {
            for (path, kind, extra) in [
                ("/api/aggregate", ViewKind::Aggregate, "source=crime"),
                ("/api/aggregate", ViewKind::Aggregate, "source=post"),
                ("/api/timeline", ViewKind::Timeline, "source=both"),
                ("/api/timeline", ViewKind::Timeline, "source=post&cumulative=true"),
                ("/api/colocate", ViewKind::Colocate, ""),
            ] {
                let full = [extra, q.as_str()].iter().filter(|s| !s.is_empty()).copied().collect::<Vec<_>>().join("&");
                let (status, id, got) = body(&app, &format!("{path}?{full}")).await;
                let expected = serde_json::to_vec(&render_view(&snapshot, kind, &query_params(&full)).unwrap()).unwrap();
                ensure(status == 200 && got == expected && id.as_deref() == Some(snapshot.build_id()), || {
                    format!("{path}?{full} differs from engine")
                })?;
                // Export with the same parameters is byte-identical.
                let mut argv: Vec<String> = vec!["vcfat".into(), "export".into(), "--snapshot".into(), snapshot_path.display().to_string(), "--kind".into(), kind.as_str().into(), "--format".into(), "json".into()];
                for kv in full.split('&').filter(|s| !s.is_empty()) {
                    let (k, v) = kv.split_once('=').unwrap();
                    if k == "cumulative" {
                        argv.push("--cumulative".into());
                    } else if !(kind == ViewKind::Colocate && k == "source") {
                        argv.push(format!("--{k}"));
                        argv.push(v.into());
                    }
                }
                let mut out = Vec::new();
                let mut err = Vec::new();
                let code = vcfat_cli::run(&argv, &mut out, &mut err);
                ensure(code == 0, || format!("export failed: {}", String::from_utf8_lossy(&err)))?;
                ensure(out.strip_suffix(b"\n") == Some(&got[..]), || format!("export differs from {path}?{full}"))?;
                compared += 1;
            }
        }
        let (status, _, err) = body(&app, "/api/aggregate?source=crime&category=nonsense").await;
        let code: Value = serde_json::from_slice(&err).unwrap();
        ensure(status == 400 && code["code"] == "unknown-category", || "unknown category not a 400".into())?;
        Ok::<(), String>(())
    })?;
    Ok(format!(
        "meta, neighborhoods and {compared} query endpoints equal engine and export output; rebuild keeps build_id {}; no secondary component built",
        &snapshot.build_id()[..12]
    ))
}

fn main() {
    // cargo passes libtest flags (e.g. --quiet) to harness=false targets;
    // they do not apply here.
    let synthetic = synthetic_suite();
    let results: Vec<(&str, Outcome)> = vec![
        ("aggregation oracle", synthetic.aggregation),
        ("point-in-polygon oracle", point_in_polygon()),
        ("calendar", calendar()),
        ("roll-up identities", synthetic.rollup),
        ("cumulative", cumulative_contract()),
        ("spearman", spearman_check()),
        ("ingest conservation", ingest_conservation()),
        ("geocode cache", geocode_cache()),
        ("api/engine/cli transparency", transparency()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
