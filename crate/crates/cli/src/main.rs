//! `crashspot`: collision hotspot analysis, one subcommand per stage.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crashspot::autocorr::Tail;
use crashspot::geometry::{GeoPoint, ZoneSet};
use crashspot::ingest::{read_normalized, ColumnMapping, CrashRecord, Selector};
use crashspot::pipeline::{self, GridChoice, InputDigest, KdeParams, LisaParams, StageOutput, TemporalParams};
use crashspot::synth::{Lattice, SynthSpec};
use crashspot::temporal::{MonthWindow, YearMonth};
use crashspot::{geojson, Error, ErrorKind, Result};

use config::{parse_pair, pick, FileConfig};

#[derive(Parser)]
#[command(
    name = "crashspot",
    version,
    about = "Spatial hotspot statistics for traffic collisions"
)]
struct Cli {
    /// TOML run configuration; command-line flags take precedence over it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for every parallel stage (outputs do not depend on it)
    #[arg(long, global = true, env = "CRASHSPOT_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw collision CSV and quarantine unusable rows
    Ingest(IngestArgs),
    /// Global and local Moran's I of per-zone collision counts
    Lisa(LisaArgs),
    /// LISA on the Empirical Bayes Index of per-zone severe-crash rates
    EbiLisa(LisaArgs),
    /// Gaussian kernel density raster
    Kde(KdeArgs),
    /// Monthly series and year-by-month matrix
    Temporal(TemporalArgs),
    /// Synthetic zones and collisions with planted hotspots
    Synth(SynthArgs),
    /// KNN weights as an edge list
    WeightsExport(WeightsArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Raw CSV export
    #[arg(long)]
    input: Option<PathBuf>,
    /// TOML column mapping (overrides the config file's [mapping])
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ZoneArgs {
    /// Zones as a GeoJSON FeatureCollection of (Multi)Polygons
    #[arg(long)]
    zones: Option<PathBuf>,
    /// Feature property holding the zone id [default: GEOID]
    #[arg(long)]
    zone_id_key: Option<String>,
}

#[derive(Args)]
struct LisaArgs {
    /// Normalized crash CSV written by `ingest` or `synth`
    #[arg(long)]
    crashes: Option<PathBuf>,
    #[command(flatten)]
    zones: ZoneArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Nearest neighbors per zone [default: 10]
    #[arg(long)]
    k: Option<usize>,
    /// Make the KNN graph symmetric before standardizing
    #[arg(long)]
    symmetrize: bool,
    /// [default: 999]
    #[arg(long)]
    permutations: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// [default: 0.05]
    #[arg(long)]
    alpha: Option<f64>,
    /// Benjamini-Hochberg cutoff instead of the raw alpha
    #[arg(long)]
    fdr: bool,
    /// two-sided or folded [default: two-sided]
    #[arg(long)]
    tail: Option<String>,
    /// all, severe, a flag name, or !name [default: all]
    #[arg(long)]
    select: Option<String>,
}

#[derive(Args)]
struct KdeArgs {
    #[arg(long)]
    crashes: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bandwidth in meters [default: Silverman's rule]
    #[arg(long)]
    bandwidth: Option<f64>,
    /// [default: 100]
    #[arg(long)]
    cell_size: Option<f64>,
    /// `auto` or `x0,y0,cols,rows` in projected meters [default: auto]
    #[arg(long)]
    grid: Option<String>,
    /// Projection reference `lon,lat` [default: center of the data]
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    max_cells: Option<usize>,
    /// Also write a grayscale PGM preview
    #[arg(long)]
    pgm: bool,
    #[arg(long)]
    select: Option<String>,
}

#[derive(Args)]
struct TemporalArgs {
    #[arg(long)]
    crashes: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// First month `YYYY-MM` [default: earliest record]
    #[arg(long)]
    start: Option<String>,
    /// Last month `YYYY-MM` [default: latest record]
    #[arg(long)]
    end: Option<String>,
    #[arg(long)]
    select: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Draw over these zones instead of a square lattice
    #[command(flatten)]
    zones: ZoneArgs,
    /// Lattice side in zones [default: 10]
    #[arg(long)]
    size: Option<usize>,
    /// Zone side in meters [default: 1000]
    #[arg(long)]
    side_m: Option<f64>,
    /// Lattice lower-left corner `lon,lat`
    #[arg(long)]
    origin: Option<String>,
    /// Expected events per zone [default: 50]
    #[arg(long)]
    base_intensity: Option<f64>,
    /// [default: 1]
    #[arg(long)]
    hotspot_multiplier: Option<f64>,
    /// Square hotspot block `row,col,side`
    #[arg(long)]
    hotspot_block: Option<String>,
    #[arg(long)]
    severe_probability: Option<f64>,
    #[arg(long)]
    hotspot_severe_probability: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// First day of the event window
    #[arg(long)]
    start: Option<chrono::NaiveDate>,
    #[arg(long)]
    span_days: Option<u32>,
}

#[derive(Args)]
struct WeightsArgs {
    #[command(flatten)]
    zones: ZoneArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    symmetrize: bool,
    /// Keep binary weights instead of row-standardizing
    #[arg(long)]
    raw: bool,
}

struct Input {
    digest: InputDigest,
    bytes: Vec<u8>,
}

fn read_input(role: &str, path: Option<PathBuf>) -> Result<Input> {
    let path = path.ok_or_else(|| Error::Config(format!("no {role} file given")))?;
    if !path.is_file() {
        return Err(Error::Config(format!("{role} file not found: {}", path.display())));
    }
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Input {
        digest: InputDigest::of(role, &bytes),
        bytes,
    })
}

fn load_crashes(path: Option<PathBuf>) -> Result<(Vec<CrashRecord>, InputDigest)> {
    let input = read_input("crashes", path)?;
    Ok((read_normalized(input.bytes.as_slice())?, input.digest))
}

fn load_zones(args: ZoneArgs, file: &config::Paths) -> Result<(ZoneSet, InputDigest)> {
    let input = read_input("zones", args.zones.or(file.zones.clone()))?;
    let key = pick(
        args.zone_id_key,
        file.zone_id_key.clone(),
        geojson::DEFAULT_ZONE_ID_KEY.to_string(),
    );
    let text = std::str::from_utf8(&input.bytes).map_err(|_| Error::Data("zones file is not UTF-8".into()))?;
    Ok((ZoneSet::new(geojson::read_zones(text, &key)?)?, input.digest))
}

fn selector(flag: Option<String>, file: Option<String>) -> Result<Selector> {
    pick(flag, file, "all".into()).parse()
}

fn out_dir(flag: Option<PathBuf>, file: &config::Paths) -> PathBuf {
    pick(flag, file.out.clone(), PathBuf::from("."))
}

fn year_month(s: &str) -> Result<YearMonth> {
    let bad = || Error::Config(format!("expected YYYY-MM, got `{s}`"));
    let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
    YearMonth::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
}

fn grid_choice(s: &str) -> Result<GridChoice> {
    if s.trim() == "auto" {
        return Ok(GridChoice::Auto);
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::Config(format!("grid: expected `auto` or `x0,y0,cols,rows`, got `{s}`"));
    match parts.as_slice() {
        [x, y, c, r] => Ok(GridChoice::Fixed {
            origin_x: x.parse().map_err(|_| bad())?,
            origin_y: y.parse().map_err(|_| bad())?,
            n_cols: c.parse().map_err(|_| bad())?,
            n_rows: r.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn lisa_params(a: &LisaArgs, f: &config::Analysis) -> Result<LisaParams> {
    let d = LisaParams::default();
    Ok(LisaParams {
        k: pick(a.k, f.k, d.k),
        symmetrize: a.symmetrize || f.symmetrize.unwrap_or(d.symmetrize),
        permutations: pick(a.permutations, f.permutations, d.permutations),
        seed: pick(a.seed, f.seed, d.seed),
        alpha: pick(a.alpha, f.alpha, d.alpha),
        fdr: a.fdr || f.fdr.unwrap_or(d.fdr),
        tail: match a.tail.clone().or(f.tail.clone()) {
            Some(t) => t.parse::<Tail>()?,
            None => d.tail,
        },
        selector: selector(a.select.clone(), f.select.clone())?,
    })
}

fn synth_spec(a: &SynthArgs, f: &config::Synth) -> Result<SynthSpec> {
    let d = SynthSpec::default();
    let origin = match a.origin.clone().or(f.origin.clone()) {
        Some(s) => {
            let (lon, lat) = parse_pair(&s, "origin")?;
            GeoPoint::new(lon, lat)
        }
        None => d.lattice.origin,
    };
    let size = pick(a.size, f.size, d.lattice.size);
    let hotspot_zones = match a.hotspot_block.clone().or(f.hotspot_block.clone()) {
        Some(s) => {
            let v: Vec<usize> = s
                .split(',')
                .map(|t| t.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("hotspot block: expected `row,col,side`, got `{s}`")))?;
            match v.as_slice() {
                [r, c, b] => SynthSpec::block(size, *r, *c, *b),
                _ => {
                    return Err(Error::Config(format!(
                        "hotspot block: expected `row,col,side`, got `{s}`"
                    )))
                }
            }
        }
        None => f.hotspot_zones.clone().unwrap_or_default(),
    };
    Ok(SynthSpec {
        lattice: Lattice {
            size,
            side_m: pick(a.side_m, f.side_m, d.lattice.side_m),
            origin,
        },
        base_intensity: pick(a.base_intensity, f.base_intensity, d.base_intensity),
        hotspot_zones,
        hotspot_multiplier: pick(a.hotspot_multiplier, f.hotspot_multiplier, d.hotspot_multiplier),
        severe_probability: pick(a.severe_probability, f.severe_probability, d.severe_probability),
        hotspot_severe_probability: pick(
            a.hotspot_severe_probability,
            f.hotspot_severe_probability,
            d.hotspot_severe_probability,
        ),
        seed: pick(a.seed, f.seed, d.seed),
        start: pick(a.start, f.start, d.start),
        span_days: pick(a.span_days, f.span_days, d.span_days),
    })
}

fn write_outputs(dir: &Path, stage: &StageOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for a in &stage.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.workers.or(file.workers) {
        if n == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    }
    let paths = &file.paths;
    let (stage, inputs, out) = match cli.command {
        Command::Ingest(a) => {
            let raw = read_input("raw", a.input.or(paths.raw.clone()))?;
            let mapping = match a.mapping {
                Some(p) => {
                    let m = read_input("mapping", Some(p))?;
                    let text = String::from_utf8(m.bytes).map_err(|_| Error::Config("mapping is not UTF-8".into()))?;
                    ColumnMapping::from_toml(&text)?
                }
                None => file.mapping.clone().unwrap_or_default(),
            };
            (
                pipeline::ingest(&raw.bytes, &mapping)?,
                vec![raw.digest],
                out_dir(a.out, paths),
            )
        }
        Command::Lisa(a) => {
            let params = lisa_params(&a, &file.analysis)?;
            let (records, cd) = load_crashes(a.crashes.or(paths.crashes.clone()))?;
            let (zones, zd) = load_zones(a.zones, paths)?;
            (
                pipeline::lisa(&records, &zones, &params)?,
                vec![cd, zd],
                out_dir(a.out, paths),
            )
        }
        Command::EbiLisa(a) => {
            let params = lisa_params(&a, &file.analysis)?;
            let (records, cd) = load_crashes(a.crashes.or(paths.crashes.clone()))?;
            let (zones, zd) = load_zones(a.zones, paths)?;
            (
                pipeline::ebi_lisa(&records, &zones, &params)?,
                vec![cd, zd],
                out_dir(a.out, paths),
            )
        }
        Command::Kde(a) => {
            let f = &file.kde;
            let d = KdeParams::default();
            let reference = match a.reference.or(f.reference.clone()) {
                Some(s) => {
                    let (lon, lat) = parse_pair(&s, "reference")?;
                    Some(GeoPoint::new(lon, lat))
                }
                None => None,
            };
            let params = KdeParams {
                bandwidth: a.bandwidth.or(f.bandwidth),
                cell_size: pick(a.cell_size, f.cell_size, d.cell_size),
                grid: match a.grid.or(f.grid.clone()) {
                    Some(s) => grid_choice(&s)?,
                    None => d.grid,
                },
                reference,
                max_cells: pick(a.max_cells, f.max_cells, d.max_cells),
                pgm: a.pgm || f.pgm.unwrap_or(false),
                selector: selector(a.select, f.select.clone())?,
            };
            let (records, cd) = load_crashes(a.crashes.or(paths.crashes.clone()))?;
            (pipeline::density(&records, &params)?, vec![cd], out_dir(a.out, paths))
        }
        Command::Temporal(a) => {
            let f = &file.temporal;
            let window = match (a.start.or(f.start.clone()), a.end.or(f.end.clone())) {
                (Some(s), Some(e)) => Some(MonthWindow::new(year_month(&s)?, year_month(&e)?)?),
                (None, None) => None,
                _ => return Err(Error::Config("temporal window needs both start and end".into())),
            };
            let params = TemporalParams {
                window,
                selector: selector(a.select, f.select.clone())?,
            };
            let (records, cd) = load_crashes(a.crashes.or(paths.crashes.clone()))?;
            (pipeline::temporal(&records, &params)?, vec![cd], out_dir(a.out, paths))
        }
        Command::Synth(a) => {
            let spec = synth_spec(&a, &file.synth)?;
            let (zones, inputs) = if a.zones.zones.is_some() {
                let (z, d) = load_zones(a.zones, paths)?;
                (Some(z), vec![d])
            } else {
                (None, vec![])
            };
            (pipeline::synth(&spec, zones)?, inputs, out_dir(a.out, paths))
        }
        Command::WeightsExport(a) => {
            let k = pick(a.k, file.analysis.k, pipeline::DEFAULT_K);
            let sym = a.symmetrize || file.analysis.symmetrize.unwrap_or(false);
            let (zones, zd) = load_zones(a.zones, paths)?;
            (
                pipeline::weights_export(&zones, k, sym, !a.raw)?,
                vec![zd],
                out_dir(a.out, paths),
            )
        }
    };
    let stage = stage.with_metadata(&inputs);
    write_outputs(&out, &stage)?;
    println!("{}", serde_json::to_string(&stage.summary).expect("summary serializes"));
    for a in &stage.artifacts {
        eprintln!("wrote {}", out.join(&a.name).display());
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data | ErrorKind::Io => 3,
        ErrorKind::Degenerate => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
