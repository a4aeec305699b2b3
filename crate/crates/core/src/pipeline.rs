//! End-to-end stages producing byte-exact artifacts plus a metadata record.
//!
//! Every stage is a pure function of its inputs and parameters: no clocks, no
//! environment, no dependence on the rayon pool size.

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::autocorr::{self, LisaResult, MoranGlobalResult, PermutationConfig, Tail};
use crate::ebi::{self, SeverityInput};
use crate::error::{Error, Result};
use crate::geojson;
use crate::geometry::{assign_zones, project, BBox, GeoPoint, PlanarPoint, Projection, ZoneSet};
use crate::ingest::{self, aggregate_by_zone, filter_crashes, ColumnMapping, CrashRecord, Selector};
use crate::kde::{self, GridSpec, CUTOFF_BANDWIDTHS, KERNEL_NAME};
use crate::raster;
use crate::synth::{self, SynthSpec};
use crate::temporal::{self, MonthWindow};
use crate::weights::{self, SpatialWeights};

pub const TOOL_NAME: &str = "crashspot";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_K: usize = 10;

pub const GLOBAL_I_FORMULA: &str = "I = (n / S0) * sum_ij w_ij z_i z_j / sum_i z_i^2";
pub const LOCAL_I_FORMULA: &str = "I_i = (z_i / m2) * sum_j w_ij z_j, m2 = sum_i z_i^2 / n";
pub const PSEUDO_P_FORMULA: &str = "(1 + #{replicates at least as extreme}) / (1 + permutations)";
pub const LOCAL_NULL: &str =
    "conditional: z_i fixed, neighbor slots drawn without replacement from the other n - 1 values";
pub const EBI_RATE_FORMULA: &str = "rate_i = (severe_i + 1) / (total_i + 2)";
pub const EBI_STD_FORMULA: &str = "std_i = sqrt(rate_i * (1 - rate_i) / (total_i + 2))";
pub const EBI_FORMULA: &str = "ebi_i = (rate_i - global_rate) / std_i";

/// One output file: a relative name and its exact contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Artifact {
            name: name.into(),
            bytes,
        }
    }
}

/// A named input and the SHA-256 of its bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(role: impl Into<String>, bytes: &[u8]) -> Self {
        InputDigest {
            role: role.into(),
            sha256: sha256_hex(bytes),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Artifacts of a stage, its parameters and a short summary for the terminal.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub command: &'static str,
    pub artifacts: Vec<Artifact>,
    pub parameters: Value,
    pub summary: Value,
}

impl StageOutput {
    /// Appends `<command>.meta.json` recording tool version, input hashes,
    /// parameters, summary and the hash of every other artifact.
    pub fn with_metadata(mut self, inputs: &[InputDigest]) -> Self {
        let outputs: Vec<Value> = self
            .artifacts
            .iter()
            .map(|a| json!({ "name": a.name, "sha256": sha256_hex(&a.bytes) }))
            .collect();
        let meta = json!({
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "command": self.command,
            "inputs": inputs,
            "parameters": self.parameters,
            "summary": self.summary,
            "outputs": outputs,
        });
        let name = format!("{}.meta.json", self.command);
        self.artifacts.push(Artifact::new(name, pretty(&meta)));
        self
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

fn pretty(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON values serialize");
    out.push(b'\n');
    out
}

fn to_buf(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn ingest(raw_csv: &[u8], mapping: &ColumnMapping) -> Result<StageOutput> {
    mapping.validate()?;
    let out = ingest::load_crashes(raw_csv, mapping)?;
    let crashes = to_buf(|b| ingest::write_normalized(&out.records, b))?;
    let quarantine = to_buf(|b| ingest::write_quarantine(&out.quarantine, b))?;
    Ok(StageOutput {
        command: "ingest",
        artifacts: vec![
            Artifact::new("crashes.csv", crashes),
            Artifact::new("quarantine.csv", quarantine),
        ],
        parameters: json!({ "mapping": mapping }),
        summary: json!({
            "rows": out.rows,
            "accepted": out.records.len(),
            "quarantined": out.quarantine.len(),
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LisaParams {
    pub k: usize,
    pub symmetrize: bool,
    pub permutations: usize,
    pub seed: u64,
    pub alpha: f64,
    pub fdr: bool,
    pub tail: Tail,
    #[serde(serialize_with = "display")]
    pub selector: Selector,
}

impl Default for LisaParams {
    fn default() -> Self {
        LisaParams {
            k: DEFAULT_K,
            symmetrize: false,
            permutations: autocorr::DEFAULT_PERMUTATIONS,
            seed: 0,
            alpha: autocorr::DEFAULT_ALPHA,
            fdr: false,
            tail: Tail::TwoSided,
            selector: Selector::All,
        }
    }
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Equirectangular projection centered on the zones' bounding box.
pub fn zone_projection(zones: &ZoneSet) -> Result<Projection> {
    let b = zones.bbox();
    Projection::new(GeoPoint::new((b.min[0] + b.max[0]) / 2.0, (b.min[1] + b.max[1]) / 2.0))
}

/// Row-standardized KNN weights over projected zone centroids.
pub fn zone_weights(zones: &ZoneSet, k: usize, symmetrize: bool) -> Result<SpatialWeights> {
    let proj = zone_projection(zones)?;
    let centroids = zones.project(&proj)?.centroids()?;
    let w = weights::knn_weights(&centroids, k)?;
    let w = if symmetrize { w.symmetrize() } else { w };
    Ok(weights::row_standardize(&w))
}

struct ZoneTally {
    counts: Vec<ingest::ZoneCounts>,
    assigned: usize,
    unassigned: usize,
}

fn tally(records: &[CrashRecord], zones: &ZoneSet, selector: Selector) -> ZoneTally {
    let selected = filter_crashes(records, selector);
    // containment is invariant under the per-axis affine projection, so
    // assignment runs directly on lon/lat
    let pts: Vec<GeoPoint> = selected.iter().map(|r| r.location).collect();
    let assignment = assign_zones(&pts, zones);
    ZoneTally {
        counts: aggregate_by_zone(&selected, &assignment, zones),
        assigned: assignment.assigned(),
        unassigned: assignment.unassigned(),
    }
}

fn degenerate_values(values: &[f64], what: &str, e: Error) -> Error {
    match e {
        Error::Degenerate(msg) => Error::Degenerate(format!(
            "{msg}; every one of the {} zones has {what} {}",
            values.len(),
            values.first().copied().unwrap_or(f64::NAN)
        )),
        other => other,
    }
}

fn lisa_artifacts(
    zones: &ZoneSet,
    values: &[f64],
    w: &SpatialWeights,
    lisa: &LisaResult,
    extra: &dyn Fn(usize) -> Map<String, Value>,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let fc = geojson::feature_collection(zones, "zone_id", |i| {
        let z = &lisa.zones[i];
        let mut m = Map::new();
        m.insert("value".into(), json!(values[i]));
        m.insert("z".into(), json!(z.z));
        m.insert("lag".into(), json!(z.lag));
        m.insert("local_I".into(), json!(z.local_i));
        m.insert("pseudo_p".into(), json!(z.pseudo_p));
        m.insert(
            "quadrant".into(),
            json!(z.quadrant.map(|q| autocorr::ClusterLabel::from(q).as_str())),
        );
        m.insert("label".into(), json!(z.label.as_str()));
        m.insert("neighbors".into(), json!(w.row(i).len()));
        m.extend(extra(i));
        m
    });
    let csv = to_buf(|b| {
        let mut wtr = csv::Writer::from_writer(b);
        wtr.write_record([
            "zone_id", "value", "z", "lag", "local_I", "pseudo_p", "quadrant", "label",
        ])?;
        for (i, z) in lisa.zones.iter().enumerate() {
            wtr.write_record([
                zones.ids()[i].clone(),
                values[i].to_string(),
                z.z.to_string(),
                z.lag.to_string(),
                z.local_i.to_string(),
                z.pseudo_p.to_string(),
                z.quadrant
                    .map_or("", |q| autocorr::ClusterLabel::from(q).as_str())
                    .to_string(),
                z.label.as_str().to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<lisa csv>", e))
    })?;
    Ok((pretty(&fc), csv))
}

fn label_counts(lisa: &LisaResult) -> Value {
    let mut m = Map::new();
    for l in lisa.labels() {
        let e = m.entry(l.as_str()).or_insert(json!(0));
        *e = json!(e.as_u64().unwrap_or(0) + 1);
    }
    Value::Object(m)
}

fn moran_report(
    global: &MoranGlobalResult,
    lisa: &LisaResult,
    w: &SpatialWeights,
    params: &LisaParams,
    n_zones: usize,
    tally: &ZoneTally,
) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("I".into(), json!(global.i));
    m.insert("expected_I".into(), json!(global.expected_i));
    m.insert("pseudo_p".into(), json!(global.pseudo_p));
    m.insert("permutations".into(), json!(global.permutations));
    m.insert("seed".into(), json!(global.seed));
    m.insert("tail".into(), json!(global.tail.name()));
    m.insert("alpha".into(), json!(lisa.alpha));
    m.insert("fdr".into(), json!(lisa.fdr));
    m.insert("significance_threshold".into(), json!(lisa.threshold));
    m.insert("zones".into(), json!(n_zones));
    m.insert("records_assigned".into(), json!(tally.assigned));
    m.insert("records_unassigned".into(), json!(tally.unassigned));
    m.insert("selector".into(), json!(params.selector.to_string()));
    m.insert("weights".into(), json!(w.meta()));
    m.insert("labels".into(), label_counts(lisa));
    m.insert(
        "formulas".into(),
        json!({
            "global_I": GLOBAL_I_FORMULA,
            "local_I": LOCAL_I_FORMULA,
            "pseudo_p": PSEUDO_P_FORMULA,
            "local_null": LOCAL_NULL,
        }),
    );
    m
}

fn run_moran(
    values: &[f64],
    w: &SpatialWeights,
    params: &LisaParams,
    what: &str,
) -> Result<(MoranGlobalResult, LisaResult)> {
    let cfg = PermutationConfig {
        permutations: params.permutations,
        seed: params.seed,
        tail: params.tail,
    };
    let global = autocorr::permutation_test_global(values, w, cfg).map_err(|e| degenerate_values(values, what, e))?;
    let lisa = autocorr::lisa(values, w, cfg, params.alpha, params.fdr)?;
    Ok((global, lisa))
}

/// Global and local Moran's I of per-zone event counts.
pub fn lisa(records: &[CrashRecord], zones: &ZoneSet, params: &LisaParams) -> Result<StageOutput> {
    let w = zone_weights(zones, params.k, params.symmetrize)?;
    let t = tally(records, zones, params.selector);
    let values: Vec<f64> = t.counts.iter().map(|c| c.total as f64).collect();
    let (global, lisa) = run_moran(&values, &w, params, "count")?;
    let (gj, csv) = lisa_artifacts(zones, &values, &w, &lisa, &|_| Map::new())?;
    let mut report = moran_report(&global, &lisa, &w, params, zones.len(), &t);
    report.insert("variable".into(), json!("event count per zone"));
    Ok(StageOutput {
        command: "lisa",
        artifacts: vec![
            Artifact::new("lisa.geojson", gj),
            Artifact::new("lisa.csv", csv),
            Artifact::new("moran.json", pretty(&report)),
        ],
        parameters: json!(params),
        summary: json!({ "I": global.i, "pseudo_p": global.pseudo_p, "labels": label_counts(&lisa) }),
    })
}

/// LISA on the standardized Empirical Bayes Index of per-zone severity rates.
pub fn ebi_lisa(records: &[CrashRecord], zones: &ZoneSet, params: &LisaParams) -> Result<StageOutput> {
    let w = zone_weights(zones, params.k, params.symmetrize)?;
    let t = tally(records, zones, params.selector);
    let inputs = t
        .counts
        .iter()
        .map(|c| SeverityInput::new(c.severe, c.total))
        .collect::<Result<Vec<_>>>()?;
    let e = ebi::ebi_transform(&inputs)?;
    let values = e.standardized();
    let (global, lisa) = run_moran(&values, &w, params, "standardized EBI")?;
    let extra = |i: usize| {
        let mut m = Map::new();
        m.insert("severe".into(), json!(t.counts[i].severe));
        m.insert("total".into(), json!(t.counts[i].total));
        m.insert("rate".into(), json!(e.zones[i].rate));
        m.insert("ebi".into(), json!(e.zones[i].ebi));
        m
    };
    let (gj, csv) = lisa_artifacts(zones, &values, &w, &lisa, &extra)?;
    let ebi_csv = to_buf(|b| ebi::write_ebi_csv(zones.ids(), &e, b))?;
    let mut report = moran_report(&global, &lisa, &w, params, zones.len(), &t);
    report.insert("variable".into(), json!("standardized EBI of the severe-crash rate"));
    report.insert(
        "ebi".into(),
        json!({
            "global_rate": e.global_rate,
            "global_rate_formula": ebi::GLOBAL_RATE_FORMULA,
            "rate_formula": EBI_RATE_FORMULA,
            "std_formula": EBI_STD_FORMULA,
            "ebi_formula": EBI_FORMULA,
            "ebi_mean": e.ebi_mean,
            "ebi_stdev": e.ebi_stdev,
            "stdev_kind": ebi::STDEV_KIND,
        }),
    );
    Ok(StageOutput {
        command: "ebi-lisa",
        artifacts: vec![
            Artifact::new("ebi_lisa.geojson", gj),
            Artifact::new("ebi_lisa.csv", csv),
            Artifact::new("ebi.csv", ebi_csv),
            Artifact::new("ebi_moran.json", pretty(&report)),
        ],
        parameters: json!(params),
        summary: json!({
            "I": global.i,
            "pseudo_p": global.pseudo_p,
            "global_rate": e.global_rate,
            "labels": label_counts(&lisa),
        }),
    })
}

/// Grid placement for the density raster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    /// Fit the data plus `6h` padding on every side.
    Auto,
    /// Explicit grid in projected meters relative to the projection reference.
    Fixed {
        origin_x: f64,
        origin_y: f64,
        n_cols: usize,
        n_rows: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeParams {
    /// Meters; `None` selects Silverman's rule.
    pub bandwidth: Option<f64>,
    pub cell_size: f64,
    pub grid: GridChoice,
    /// Projection reference; `None` centers on the data's bounding box.
    pub reference: Option<GeoPoint>,
    pub max_cells: usize,
    pub pgm: bool,
    #[serde(serialize_with = "display")]
    pub selector: Selector,
}

impl Default for KdeParams {
    fn default() -> Self {
        KdeParams {
            bandwidth: None,
            cell_size: 100.0,
            grid: GridChoice::Auto,
            reference: None,
            max_cells: kde::DEFAULT_MAX_CELLS,
            pgm: false,
            selector: Selector::All,
        }
    }
}

pub fn density(records: &[CrashRecord], params: &KdeParams) -> Result<StageOutput> {
    let selected = filter_crashes(records, params.selector);
    if selected.is_empty() {
        return Err(Error::Domain(format!(
            "no records match selector `{}`",
            params.selector
        )));
    }
    let geo: Vec<GeoPoint> = selected.iter().map(|r| r.location).collect();
    let reference = match params.reference {
        Some(r) => r,
        None => {
            let mut b = BBox::empty();
            for p in &geo {
                b.extend([p.lon, p.lat]);
            }
            GeoPoint::new((b.min[0] + b.max[0]) / 2.0, (b.min[1] + b.max[1]) / 2.0)
        }
    };
    let pts: Vec<PlanarPoint> = project(&geo, reference)?;
    let (h, rule) = match params.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => (h, "fixed"),
        Some(h) => return Err(Error::Config(format!("bandwidth must be positive, got {h}"))),
        None => (kde::silverman_bandwidth(&pts)?, "silverman"),
    };
    let spec = match params.grid {
        GridChoice::Auto => GridSpec::covering(&pts, CUTOFF_BANDWIDTHS * h, params.cell_size, params.max_cells)?,
        GridChoice::Fixed {
            origin_x,
            origin_y,
            n_cols,
            n_rows,
        } => {
            let s = GridSpec::new(PlanarPoint::new(origin_x, origin_y), params.cell_size, n_cols, n_rows)?;
            s.validate(params.max_cells)?;
            s
        }
    };
    let grid = kde::kde_grid(&pts, h, spec)?;
    let asc = to_buf(|b| raster::write_ascii_grid(&grid, b).map_err(|e| Error::io("<ascii grid>", e)))?;
    let mut artifacts = vec![Artifact::new("density.asc", asc)];
    if params.pgm {
        let pgm = to_buf(|b| raster::write_pgm(&grid, b).map_err(|e| Error::io("<pgm>", e)))?;
        artifacts.push(Artifact::new("density.pgm", pgm));
    }
    Ok(StageOutput {
        command: "kde",
        artifacts,
        parameters: json!(params),
        summary: json!({
            "points": pts.len(),
            "bandwidth_m": h,
            "bandwidth_rule": rule,
            "kernel": KERNEL_NAME,
            "cutoff_bandwidths": CUTOFF_BANDWIDTHS,
            "units": "events per square meter (density integrates to 1)",
            "crs": "equirectangular meters",
            "reference": reference,
            "grid": grid.spec,
            "mass_in_grid": grid.mass(),
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalParams {
    pub window: Option<MonthWindow>,
    #[serde(serialize_with = "display")]
    pub selector: Selector,
}

pub fn temporal(records: &[CrashRecord], params: &TemporalParams) -> Result<StageOutput> {
    let selected = filter_crashes(records, params.selector);
    let window = match params.window {
        Some(w) => w,
        None => MonthWindow::spanning(&selected)
            .ok_or_else(|| Error::Data(format!("no records match selector `{}`", params.selector)))?,
    };
    let series = temporal::monthly_series(&selected, window);
    let matrix = temporal::seasonal_matrix(&series);
    let series_csv = to_buf(|b| temporal::write_series_csv(&series, b))?;
    let matrix_csv = to_buf(|b| temporal::write_matrix_csv(&matrix, b))?;
    Ok(StageOutput {
        command: "temporal",
        artifacts: vec![
            Artifact::new("monthly.csv", series_csv),
            Artifact::new("seasonal.csv", matrix_csv),
        ],
        parameters: json!(params),
        summary: json!({
            "window": window,
            "months": window.months(),
            "records": series.total(),
            "timezone": "dataset-local, no conversion",
        }),
    })
}

/// Synthetic zones (GeoJSON with `GEOID`), normalized events and ground truth.
/// With `zones` the events are drawn over those zones instead of a lattice.
pub fn synth(spec: &SynthSpec, zones: Option<ZoneSet>) -> Result<StageOutput> {
    let lattice = zones.is_none();
    let out = match zones {
        Some(z) => synth::generate_on_zones(z, spec)?,
        None => synth::generate(spec)?,
    };
    let zones_json = geojson::feature_collection(&out.zones, geojson::DEFAULT_ZONE_ID_KEY, |i| {
        let mut m = Map::new();
        m.insert("hotspot".into(), json!(out.hotspot[i]));
        m
    });
    let crashes = to_buf(|b| ingest::write_normalized(&out.records, b))?;
    let counts = out.counts();
    let truth = to_buf(|b| {
        let mut wtr = csv::Writer::from_writer(b);
        wtr.write_record(["zone_id", "hotspot", "count", "severe"])?;
        let mut severe = vec![0u64; out.zones.len()];
        for (r, &z) in out.records.iter().zip(&out.record_zone) {
            severe[z] += u64::from(r.severe);
        }
        for i in 0..out.zones.len() {
            wtr.write_record([
                out.zones.ids()[i].clone(),
                u8::from(out.hotspot[i]).to_string(),
                counts[i].to_string(),
                severe[i].to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<truth csv>", e))
    })?;
    Ok(StageOutput {
        command: "synth",
        artifacts: vec![
            Artifact::new("zones.geojson", pretty(&zones_json)),
            Artifact::new("crashes.csv", crashes),
            Artifact::new("truth.csv", truth),
        ],
        parameters: json!({ "spec": spec, "zones": if lattice { "lattice" } else { "supplied" } }),
        summary: json!({
            "zones": out.zones.len(),
            "records": out.records.len(),
            "hotspots": out.hotspot.iter().filter(|&&h| h).count(),
        }),
    })
}

/// KNN weights as `from_id,to_id,weight` plus a JSON header sidecar.
pub fn weights_export(zones: &ZoneSet, k: usize, symmetrize: bool, standardize: bool) -> Result<StageOutput> {
    let proj = zone_projection(zones)?;
    let centroids = zones.project(&proj)?.centroids()?;
    let mut w = weights::knn_weights(&centroids, k)?;
    if symmetrize {
        w = w.symmetrize();
    }
    if standardize {
        w = weights::row_standardize(&w);
    }
    let csv = to_buf(|b| weights::write_weights_csv(&w, zones.ids(), b))?;
    let centroid_geo: Vec<Value> = centroids
        .iter()
        .zip(zones.ids())
        .map(|(c, id)| {
            let g = proj.inverse(*c);
            json!({ "zone_id": id, "lon": g.lon, "lat": g.lat })
        })
        .collect();
    let header = json!({ "meta": w.meta(), "n": w.n(), "s0": w.s0(), "projection_reference": proj.reference(), "centroids": centroid_geo });
    Ok(StageOutput {
        command: "weights-export",
        artifacts: vec![
            Artifact::new("weights.csv", csv),
            Artifact::new("weights.json", pretty(&header)),
        ],
        parameters: json!({ "k": k, "symmetrize": symmetrize, "standardize": standardize }),
        summary: json!({ "zones": w.n(), "links": w.rows().map(<[_]>::len).sum::<usize>() }),
    })
}
