//! `vcfat` operator commands: ingest, build, stats, export, serve.
//!
//! [`run`] is the whole program minus process setup, so tests drive it with
//! in-memory streams. Exit codes: 0 success, 1 data error, 2 usage error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use vcfat_core::analytics::{meta, render_view, AggregateSnapshot, View, ViewKind};
use vcfat_core::exec::Execution;
use vcfat_core::model::{QueryParams, Source};
use vcfat_core::pipeline::{ingest_files, IngestInputs, RecordStore};
use vcfat_service::{serve, ServeConfig, SnapshotSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vcfat", version, about = "Co-locate crime-related social posts with official crime records")]
pub struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, place and classify inputs; write the record store.
    Ingest {
        #[command(flatten)]
        inputs: InputArgs,
        /// Record store to write.
        #[arg(long, default_value = "records.json")]
        out: PathBuf,
        /// Print the ingest summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Build the aggregate snapshot from a record store or from raw inputs.
    Build {
        #[arg(long, conflicts_with_all = ["crimes", "posts", "districts"])]
        store: Option<PathBuf>,
        #[command(flatten)]
        inputs: OptionalInputArgs,
        /// Snapshot file to write.
        #[arg(long, default_value = "snapshot.json")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print per-source totals and per-category counts of a snapshot.
    Stats {
        #[arg(long, default_value = "snapshot.json")]
        snapshot: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write a query result; parameters mirror the HTTP API.
    Export {
        #[arg(long, default_value = "snapshot.json")]
        snapshot: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API (bind address from VCFAT_BIND).
    Serve {
        #[arg(long, conflicts_with_all = ["crimes", "posts", "districts"])]
        snapshot: Option<PathBuf>,
        #[command(flatten)]
        inputs: OptionalInputArgs,
        /// Directory of dashboard assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Overrides VCFAT_BIND.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub crimes: PathBuf,
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long)]
    pub districts: PathBuf,
    #[command(flatten)]
    pub options: InputOptions,
}

#[derive(Debug, Args)]
pub struct OptionalInputArgs {
    #[arg(long, requires_all = ["posts", "districts"])]
    pub crimes: Option<PathBuf>,
    #[arg(long, requires_all = ["crimes", "districts"])]
    pub posts: Option<PathBuf>,
    #[arg(long, requires_all = ["crimes", "posts"])]
    pub districts: Option<PathBuf>,
    #[command(flatten)]
    pub options: InputOptions,
}

#[derive(Debug, Args)]
pub struct InputOptions {
    /// Ingest configuration (TOML); the bundled default when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Persistent geocode cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Answer geocoding from the config's stub table, never the network.
    #[arg(long)]
    pub stub_geocoder: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub granularity: Option<String>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long)]
    pub cumulative: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Aggregate,
    Timeline,
    Colocate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Geojson,
    Json,
}

impl From<KindArg> for ViewKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Aggregate => ViewKind::Aggregate,
            KindArg::Timeline => ViewKind::Timeline,
            KindArg::Colocate => ViewKind::Colocate,
        }
    }
}

impl QueryArgs {
    pub fn to_params(&self) -> QueryParams {
        QueryParams {
            source: self.source.clone(),
            granularity: self.granularity.clone(),
            from: self.from.clone(),
            to: self.to.clone(),
            category: self.category.clone(),
            cumulative: self.cumulative.then(|| "true".to_string()),
        }
    }
}

impl InputOptions {
    fn inputs(&self, crimes: PathBuf, posts: PathBuf, districts: PathBuf) -> IngestInputs {
        IngestInputs {
            crimes,
            posts,
            districts,
            config: self.config.clone(),
            cache: self.cache.clone(),
            stub_geocoder: self.stub_geocoder,
        }
    }
}

impl InputArgs {
    fn inputs(&self) -> IngestInputs {
        self.options.inputs(self.crimes.clone(), self.posts.clone(), self.districts.clone())
    }
}

impl OptionalInputArgs {
    fn inputs(&self) -> Option<IngestInputs> {
        match (&self.crimes, &self.posts, &self.districts) {
            (Some(c), Some(p), Some(d)) => Some(self.options.inputs(c.clone(), p.clone(), d.clone())),
            _ => None,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match execute(cli.command, exec, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_DATA
        }
    }
}

fn execute(command: Command, exec: Execution, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Ingest { inputs, out, json } => {
            let store = ingest_files(&inputs.inputs(), exec)?;
            store.save(&out)?;
            report_ingest(&store, &out, json, stdout)?;
        }
        Command::Build { store, inputs, out, json } => {
            let store = match (store, inputs.inputs()) {
                (Some(path), _) => RecordStore::load(&path)?,
                (None, Some(inputs)) => ingest_files(&inputs, exec)?,
                (None, None) => bail!("build needs --store or --crimes/--posts/--districts"),
            };
            let snapshot = store.snapshot(exec);
            snapshot.save(&out).with_context(|| format!("writing {}", out.display()))?;
            if json {
                let body = json!({
                    "build_id": snapshot.build_id(),
                    "path": out,
                    "sources": meta(&snapshot).sources,
                });
                writeln!(stdout, "{}", serde_json::to_string_pretty(&body)?)?;
            } else {
                writeln!(stdout, "wrote {} (build {})", out.display(), snapshot.build_id())?;
            }
        }
        Command::Stats { snapshot, json } => {
            let snapshot = load_snapshot(&snapshot)?;
            stats(&snapshot, json, stdout)?;
        }
        Command::Export { snapshot, kind, query, format, out } => {
            let snapshot = load_snapshot(&snapshot)?;
            let kind = ViewKind::from(kind);
            if format == Format::Geojson && kind == ViewKind::Timeline {
                bail!("geojson export needs a per-district view (aggregate or colocate)");
            }
            let view = render_view(&snapshot, kind, &query.to_params())
                .map_err(|e| anyhow!("{}: {e}", e.code()))?;
            match out {
                Some(path) => {
                    let mut file = BufWriter::new(
                        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
                    );
                    export(&snapshot, &view, format, &mut file)?;
                    file.flush()?;
                }
                None => export(&snapshot, &view, format, stdout)?,
            }
        }
        Command::Serve { snapshot, inputs, static_dir, bind } => {
            let source = match (snapshot, inputs.inputs()) {
                (Some(path), _) => SnapshotSource::File(path),
                (None, Some(inputs)) => SnapshotSource::Inputs(inputs),
                (None, None) => bail!("serve needs --snapshot or --crimes/--posts/--districts"),
            };
            let mut config = ServeConfig::from_env(source, static_dir)?;
            if let Some(bind) = bind {
                config.bind = bind.parse().with_context(|| format!("invalid bind address {bind:?}"))?;
            }
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(serve(config))?;
        }
    }
    Ok(EXIT_OK)
}

fn load_snapshot(path: &Path) -> Result<AggregateSnapshot> {
    AggregateSnapshot::load(path).with_context(|| format!("loading snapshot {}", path.display()))
}

fn report_ingest(store: &RecordStore, out: &Path, json: bool, stdout: &mut dyn Write) -> Result<()> {
    let s = &store.summary;
    if json {
        writeln!(stdout, "{}", serde_json::to_string_pretty(s)?)?;
        return Ok(());
    }
    writeln!(stdout, "districts: {}", s.districts)?;
    for (name, r) in [("crimes", &s.crimes), ("posts", &s.posts)] {
        writeln!(stdout, "{name}: read {} accepted {} rejected {}", r.rows_read, r.rows_accepted, r.rows_rejected)?;
        for (reason, n) in &r.rejection_reasons {
            writeln!(stdout, "  {reason}: {n}")?;
        }
    }
    writeln!(stdout, "crimes: traffic removed {} retained {} located {}", s.traffic_removed, s.crimes_retained, s.crimes_located)?;
    let methods: Vec<String> = s.posts_by_method.iter().map(|(m, n)| format!("{m} {n}")).collect();
    writeln!(stdout, "posts: {} ambiguous {} classified {}", methods.join(", "), s.posts_ambiguous, s.posts_classified)?;
    if s.geocoder_degraded > 0 {
        writeln!(stdout, "posts: geocoder unavailable for {}", s.geocoder_degraded)?;
    }
    writeln!(stdout, "wrote {}", out.display())?;
    Ok(())
}

#[derive(Serialize)]
struct Stats<'a> {
    build_id: &'a str,
    totals: Value,
    categories: Value,
}

fn stats(s: &AggregateSnapshot, json: bool, stdout: &mut dyn Write) -> Result<()> {
    let per_category = s.category_totals();
    if json {
        let body = Stats {
            build_id: s.build_id(),
            totals: serde_json::to_value(s.all_totals())?,
            categories: serde_json::to_value(&per_category)?,
        };
        writeln!(stdout, "{}", serde_json::to_string_pretty(&body)?)?;
        return Ok(());
    }
    writeln!(stdout, "build {}", s.build_id())?;
    if let Some(p) = s.period() {
        writeln!(stdout, "period {} .. {}", p.from.to_rfc3339(), p.to.to_rfc3339())?;
    }
    for source in Source::ALL {
        let t = s.totals(source);
        writeln!(
            stdout,
            "{}: records {} located {} classified {} counted {}",
            source.as_str(),
            t.records,
            t.located,
            t.classified,
            t.counted
        )?;
    }
    writeln!(stdout, "{:<24}{:>10}{:>10}", "category", "crime", "post")?;
    for c in s.registry().iter() {
        let n = |src| per_category.get(&src).and_then(|m| m.get(&c.id)).copied().unwrap_or(0);
        writeln!(stdout, "{:<24}{:>10}{:>10}", c.id.as_str(), n(Source::Crime), n(Source::Post))?;
    }
    Ok(())
}

/// Writes a view. `json` is byte-identical to the HTTP response body.
pub fn export(s: &AggregateSnapshot, view: &View, format: Format, out: &mut dyn Write) -> Result<()> {
    match format {
        Format::Json => {
            out.write_all(&serde_json::to_vec(view)?)?;
            out.write_all(b"\n")?;
        }
        Format::Csv => export_csv(s, view, out)?,
        Format::Geojson => {
            let mut collection = s.neighborhoods().to_geojson();
            let features = collection["features"].as_array_mut().expect("feature array");
            for f in features.iter_mut() {
                let id = f["properties"]["id"].as_str().expect("feature id").to_string();
                let props = f["properties"].as_object_mut().expect("properties object");
                match view {
                    View::Aggregate(counts) => {
                        props.insert("count".into(), json!(counts.get(&id.as_str().into()).copied().unwrap_or(0)));
                    }
                    View::Colocate(result) => {
                        let row = result.rows.iter().find(|r| r.neighborhood.as_str() == id);
                        props.insert("crime_count".into(), json!(row.map_or(0, |r| r.crime_count)));
                        props.insert("post_count".into(), json!(row.map_or(0, |r| r.post_count)));
                    }
                    View::Timeline(_) => unreachable!("rejected before rendering"),
                }
            }
            if let View::Colocate(result) = view {
                collection["rho"] = json!(result.rho);
                if let Some(u) = &result.rho_unavailable {
                    collection["rho_unavailable"] = serde_json::to_value(u)?;
                }
            }
            out.write_all(&serde_json::to_vec(&collection)?)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn export_csv(s: &AggregateSnapshot, view: &View, out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let name = |id: &vcfat_core::model::NeighborhoodId| {
        s.neighborhoods().get(id).map(|n| n.display_name.clone()).unwrap_or_default()
    };
    match view {
        View::Aggregate(counts) => {
            w.write_record(["neighborhood", "display_name", "count"])?;
            for (id, n) in counts {
                w.write_record([id.as_str(), &name(id), &n.to_string()])?;
            }
        }
        View::Timeline(series) => {
            w.write_record(["source", "granularity", "bucket", "count", "cumulative"])?;
            for s in series {
                for p in &s.points {
                    w.write_record([
                        s.source.as_str(),
                        s.granularity.as_str(),
                        &p.bucket.key(),
                        &p.count.to_string(),
                        &s.cumulative.to_string(),
                    ])?;
                }
            }
        }
        View::Colocate(result) => {
            w.write_record(["neighborhood", "display_name", "crime_count", "post_count"])?;
            for r in &result.rows {
                w.write_record([r.neighborhood.as_str(), &r.display_name, &r.crime_count.to_string(), &r.post_count.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
