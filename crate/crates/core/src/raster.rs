//! ESRI ASCII grid and PGM output for density rasters.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::geometry::PlanarPoint;
use crate::kde::{GridSpec, KdeGrid};

pub const NODATA: f64 = -9999.0;

/// Writes the six-line header followed by rows from north to south, values
/// in scientific notation with 9 significant digits.
pub fn write_ascii_grid<W: Write>(grid: &KdeGrid, mut out: W) -> std::io::Result<()> {
    let s = &grid.spec;
    writeln!(out, "ncols {}", s.n_cols)?;
    writeln!(out, "nrows {}", s.n_rows)?;
    writeln!(out, "xllcorner {}", s.origin.x)?;
    writeln!(out, "yllcorner {}", s.origin.y)?;
    writeln!(out, "cellsize {}", s.cell_size)?;
    writeln!(out, "NODATA_value {NODATA}")?;
    let mut line = String::new();
    for row in grid.values.chunks(s.n_cols) {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{v:.8e}"));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub spec: GridSpec,
    pub nodata: f64,
    pub values: Vec<f64>,
}

pub fn read_ascii_grid<R: Read>(source: R) -> Result<AsciiGrid> {
    let mut lines = BufReader::new(source).lines();
    let mut header = |key: &str| -> Result<f64> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Data(format!("missing `{key}` header line")))?
            .map_err(|e| Error::io("<ascii grid>", e))?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some(k), Some(v)) if k.eq_ignore_ascii_case(key) => v
                .parse()
                .map_err(|_| Error::Data(format!("bad value for `{key}`: `{v}`"))),
            _ => Err(Error::Data(format!("expected `{key}` header, got `{line}`"))),
        }
    };
    let n_cols = header("ncols")? as usize;
    let n_rows = header("nrows")? as usize;
    let x = header("xllcorner")?;
    let y = header("yllcorner")?;
    let cell = header("cellsize")?;
    let nodata = header("NODATA_value")?;
    let spec = GridSpec {
        origin: PlanarPoint::new(x, y),
        cell_size: cell,
        n_cols,
        n_rows,
    };
    spec.validate(usize::MAX)?;
    let mut values = Vec::with_capacity(n_cols * n_rows);
    for line in lines {
        let line = line.map_err(|e| Error::io("<ascii grid>", e))?;
        for tok in line.split_whitespace() {
            values.push(
                tok.parse()
                    .map_err(|_| Error::Data(format!("bad cell value `{tok}`")))?,
            );
        }
    }
    if values.len() != n_cols * n_rows {
        return Err(Error::Data(format!(
            "expected {} cells, found {}",
            n_cols * n_rows,
            values.len()
        )));
    }
    Ok(AsciiGrid { spec, nodata, values })
}

/// 8-bit binary PGM, min-max normalized. A constant grid renders mid-gray.
pub fn write_pgm<W: Write>(grid: &KdeGrid, mut out: W) -> std::io::Result<()> {
    let (lo, hi) = grid
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    write!(out, "P5\n{} {}\n255\n", grid.spec.n_cols, grid.spec.n_rows)?;
    let pixels: Vec<u8> = grid
        .values
        .iter()
        .map(|&v| {
            if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect();
    out.write_all(&pixels)?;
    out.flush()
}
