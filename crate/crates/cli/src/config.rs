//! Optional TOML run configuration. Every field is optional; command-line
//! flags override it and built-in defaults fill whatever is left.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use crashspot::ingest::ColumnMapping;
use crashspot::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub paths: Paths,
    pub mapping: Option<ColumnMapping>,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default)]
    pub kde: Kde,
    #[serde(default)]
    pub temporal: Temporal,
    #[serde(default)]
    pub synth: Synth,
    pub workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub raw: Option<PathBuf>,
    pub crashes: Option<PathBuf>,
    pub zones: Option<PathBuf>,
    pub zone_id_key: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    pub k: Option<usize>,
    pub symmetrize: Option<bool>,
    pub permutations: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub fdr: Option<bool>,
    pub tail: Option<String>,
    pub select: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kde {
    pub bandwidth: Option<f64>,
    pub cell_size: Option<f64>,
    /// `"auto"` or `"x0,y0,cols,rows"`
    pub grid: Option<String>,
    /// `"lon,lat"`
    pub reference: Option<String>,
    pub max_cells: Option<usize>,
    pub pgm: Option<bool>,
    pub select: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Temporal {
    /// `YYYY-MM`
    pub start: Option<String>,
    pub end: Option<String>,
    pub select: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synth {
    pub size: Option<usize>,
    pub side_m: Option<f64>,
    pub origin: Option<String>,
    pub base_intensity: Option<f64>,
    pub hotspot_multiplier: Option<f64>,
    /// `"row,col,block"` (lower-left corner and side of a square block)
    pub hotspot_block: Option<String>,
    pub hotspot_zones: Option<Vec<usize>>,
    pub severe_probability: Option<f64>,
    pub hotspot_severe_probability: Option<f64>,
    pub seed: Option<u64>,
    pub start: Option<NaiveDate>,
    pub span_days: Option<u32>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        if let Some(m) = &cfg.mapping {
            m.validate()?;
        }
        Ok(cfg)
    }
}

/// Flag, then file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(Error::Config(format!("{what}: expected two numbers, got `{s}`"))),
        },
        _ => Err(Error::Config(format!("{what}: expected `a,b`, got `{s}`"))),
    }
}
