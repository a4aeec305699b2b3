//! Gaussian kernel density estimation of point events on a raster grid.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::PlanarPoint;

/// Kernels are truncated at this many bandwidths.
pub const CUTOFF_BANDWIDTHS: f64 = 6.0;
pub const DEFAULT_MAX_CELLS: usize = 4_000_000;
pub const KERNEL_NAME: &str = "gaussian";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    /// Lower-left corner of the lower-left cell.
    pub origin: PlanarPoint,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl GridSpec {
    pub fn new(origin: PlanarPoint, cell_size: f64, n_cols: usize, n_rows: usize) -> Result<Self> {
        let spec = GridSpec {
            origin,
            cell_size,
            n_cols,
            n_rows,
        };
        spec.validate(DEFAULT_MAX_CELLS)?;
        Ok(spec)
    }

    pub fn validate(&self, max_cells: usize) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::Config(format!(
                "cell size must be positive, got {}",
                self.cell_size
            )));
        }
        if !(self.origin.x.is_finite() && self.origin.y.is_finite()) {
            return Err(Error::Config("grid origin is not finite".into()));
        }
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(Error::Config("grid has no cells".into()));
        }
        match self.n_cols.checked_mul(self.n_rows) {
            Some(c) if c <= max_cells => Ok(()),
            _ => Err(Error::Config(format!(
                "grid of {} x {} cells exceeds the cap of {max_cells}",
                self.n_cols, self.n_rows
            ))),
        }
    }

    /// Grid covering the points' extent padded by `pad` on every side.
    pub fn covering(points: &[PlanarPoint], pad: f64, cell_size: f64, max_cells: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("cannot fit a grid to zero points".into()));
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let n_cols = (((x1 - x0) + 2.0 * pad) / cell_size).ceil().max(1.0) as usize;
        let n_rows = (((y1 - y0) + 2.0 * pad) / cell_size).ceil().max(1.0) as usize;
        let spec = GridSpec {
            origin: PlanarPoint::new(x0 - pad, y0 - pad),
            cell_size,
            n_cols,
            n_rows,
        };
        spec.validate(max_cells)?;
        Ok(spec)
    }

    /// Center of cell `(row, col)`; row 0 is the northernmost row.
    pub fn cell_center(&self, row: usize, col: usize) -> PlanarPoint {
        PlanarPoint::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + ((self.n_rows - row) as f64 - 0.5) * self.cell_size,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeGrid {
    pub spec: GridSpec,
    /// Row-major densities in 1/m², northernmost row first.
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub kernel: &'static str,
}

impl KdeGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.spec.n_cols + col]
    }

    /// Σ density · cell area; close to 1 when the grid covers the kernels.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_size * self.spec.cell_size
    }
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn iqr(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    quantile(&s, 0.75) - quantile(&s, 0.25)
}

/// Silverman's rule of thumb on pooled axes:
/// `1.06 · min(σ, IQR / 1.34) · n^(-1/5)`, where σ and IQR are the means of
/// the per-axis sample standard deviations and interquartile ranges. When the
/// pooled IQR is zero, σ alone is used.
pub fn silverman_bandwidth(points: &[PlanarPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Degenerate(format!(
            "bandwidth needs at least 2 points, got {}",
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let sigma = (sample_std(&xs) + sample_std(&ys)) / 2.0;
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Degenerate("all points coincide; bandwidth undefined".into()));
    }
    let pooled_iqr = (iqr(&xs) + iqr(&ys)) / 2.0;
    Ok(rule_of_thumb(sigma, pooled_iqr, points.len()))
}

fn rule_of_thumb(sigma: f64, iqr: f64, n: usize) -> f64 {
    let spread = iqr / 1.34;
    let scale = if spread > 0.0 { sigma.min(spread) } else { sigma };
    1.06 * scale * (n as f64).powf(-0.2)
}

/// Evaluates the density at every cell center. Each kernel contributes only
/// within `6h` of its point.
pub fn kde_grid(points: &[PlanarPoint], bandwidth: f64, spec: GridSpec) -> Result<KdeGrid> {
    if points.is_empty() {
        return Err(Error::Domain("no points to estimate density from".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    spec.validate(usize::MAX)?;

    let mut by_y: Vec<PlanarPoint> = points.to_vec();
    by_y.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    let ys: Vec<f64> = by_y.iter().map(|p| p.y).collect();

    let radius = CUTOFF_BANDWIDTHS * bandwidth;
    let r2 = radius * radius;
    let inv_2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let norm = 1.0 / (points.len() as f64 * 2.0 * PI * bandwidth * bandwidth);
    let cs = spec.cell_size;

    let mut values = vec![0.0; spec.n_cols * spec.n_rows];
    values.par_chunks_mut(spec.n_cols).enumerate().for_each(|(row, out)| {
        let cy = spec.cell_center(row, 0).y;
        let lo = ys.partition_point(|&y| y < cy - radius);
        let hi = ys.partition_point(|&y| y <= cy + radius);
        for p in &by_y[lo..hi] {
            let dy = cy - p.y;
            let rem = r2 - dy * dy;
            if rem < 0.0 {
                continue;
            }
            let half = rem.sqrt();
            // one column of slack each side; the distance test below decides
            let c0 = ((p.x - half - spec.origin.x) / cs - 1.5).ceil().max(0.0) as usize;
            let c1 = ((p.x + half - spec.origin.x) / cs + 0.5).floor();
            if c1 < 0.0 {
                continue;
            }
            let c1 = (c1 as usize).min(spec.n_cols - 1);
            for (col, v) in out.iter_mut().enumerate().take(c1 + 1).skip(c0) {
                let dx = spec.origin.x + (col as f64 + 0.5) * cs - p.x;
                let d2 = dx * dx + dy * dy;
                if d2 <= r2 {
                    *v += (-d2 * inv_2h2).exp();
                }
            }
        }
        for v in out.iter_mut() {
            *v *= norm;
        }
    });

    Ok(KdeGrid {
        spec,
        values,
        bandwidth,
        kernel: KERNEL_NAME,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point_peak() {
        let spec = GridSpec::new(PlanarPoint::new(0.0, 0.0), 5.0, 21, 21).unwrap();
        let center = spec.cell_center(10, 10);
        let g = kde_grid(&[center], 10.0, spec).unwrap();
        let peak = 1.0 / (2.0 * PI * 100.0);
        assert!((g.get(10, 10) - peak).abs() < 1e-18);
        assert!((peak - 1.591_549_430_918_953_4e-3).abs() < 1e-15);
        assert!(g.values.iter().all(|&v| v >= 0.0 && v <= g.get(10, 10)));
    }

    #[test]
    fn padded_grid_holds_the_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<PlanarPoint> = (0..200)
            .map(|_| PlanarPoint::new(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0)))
            .collect();
        let h = silverman_bandwidth(&pts).unwrap();
        let spec = GridSpec::covering(&pts, CUTOFF_BANDWIDTHS * h, h / 4.0, DEFAULT_MAX_CELLS).unwrap();
        let m = kde_grid(&pts, h, spec).unwrap().mass();
        assert!((0.95..=1.0 + 1e-6).contains(&m), "{m}");
    }

    #[test]
    fn two_point_bandwidth_closed_form() {
        // x: sd = 100/√2, IQR = 50; y: sd = 0, IQR = 0.
        // pooled sd = 35.355..., pooled IQR/1.34 = 25/1.34 = 18.656...
        let h = silverman_bandwidth(&[PlanarPoint::new(0.0, 0.0), PlanarPoint::new(100.0, 0.0)]).unwrap();
        let expect = 1.06 * (25.0 / 1.34) * 2f64.powf(-0.2);
        assert!((h - expect).abs() < 1e-12, "{h} vs {expect}");
    }

    #[test]
    fn identical_points_are_degenerate() {
        let p = PlanarPoint::new(3.0, 4.0);
        assert!(matches!(silverman_bandwidth(&[p, p, p]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn empty_points_and_oversized_grids_fail() {
        let spec = GridSpec::new(PlanarPoint::new(0.0, 0.0), 1.0, 2, 2).unwrap();
        assert!(matches!(kde_grid(&[], 1.0, spec), Err(Error::Domain(_))));
        assert!(GridSpec::new(PlanarPoint::new(0.0, 0.0), 1.0, 3000, 3000).is_err());
        assert!(GridSpec::new(PlanarPoint::new(0.0, 0.0), 0.0, 3, 3).is_err());
    }

    #[test]
    fn bandwidth_scales_and_shrinks_with_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<PlanarPoint> = (0..100).map(|_| PlanarPoint::new(rng.gen(), rng.gen())).collect();
        let h = silverman_bandwidth(&pts).unwrap();
        let scaled: Vec<PlanarPoint> = pts.iter().map(|p| PlanarPoint::new(p.x * 7.5, p.y * 7.5)).collect();
        assert!((silverman_bandwidth(&scaled).unwrap() / h - 7.5).abs() < 1e-12);
        let ratio = rule_of_thumb(3.0, 2.0, 200) / rule_of_thumb(3.0, 2.0, 100);
        assert!((ratio - 2f64.powf(-0.2)).abs() < 1e-15, "{ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn translation_equivariance(seed in 0u64..1000, tx in -5e3f64..5e3, ty in -5e3f64..5e3) {
            // shift by whole cells so cell centers move exactly with the points
            let cs = 8.0;
            let (tx, ty) = ((tx / cs).round() * cs, (ty / cs).round() * cs);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // dyadic coordinates keep every shifted value exact
            let dyadic = |v: f64| (v * 1024.0).round() / 1024.0;
            let pts: Vec<PlanarPoint> = (0..30).map(|_| PlanarPoint::new(dyadic(rng.gen_range(0.0..256.0)), dyadic(rng.gen_range(0.0..256.0)))).collect();
            let spec = GridSpec::new(PlanarPoint::new(0.0, 0.0), cs, 32, 32).unwrap();
            let a = kde_grid(&pts, 20.0, spec).unwrap();
            let moved: Vec<PlanarPoint> = pts.iter().map(|p| PlanarPoint::new(p.x + tx, p.y + ty)).collect();
            let spec_b = GridSpec::new(PlanarPoint::new(tx, ty), cs, 32, 32).unwrap();
            let b = kde_grid(&moved, 20.0, spec_b).unwrap();
            for (u, v) in a.values.iter().zip(&b.values) {
                prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1e-300) + 1e-18);
            }
        }

        #[test]
        fn adding_a_point_is_local(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<PlanarPoint> = (0..20).map(|_| PlanarPoint::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0))).collect();
            let extra = PlanarPoint::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0));
            let h = 15.0;
            let spec = GridSpec::new(PlanarPoint::new(0.0, 0.0), 5.0, 80, 80).unwrap();
            let a = kde_grid(&pts, h, spec).unwrap();
            let mut more = pts.clone();
            more.push(extra);
            let b = kde_grid(&more, h, spec).unwrap();
            // rescale away the 1/n factor so the comparison isolates the new kernel
            let (na, nb) = (pts.len() as f64, more.len() as f64);
            for r in 0..80 {
                for c in 0..80 {
                    let (u, v) = (a.get(r, c) * na, b.get(r, c) * nb);
                    let d2 = spec.cell_center(r, c).dist2(&extra);
                    if d2 <= 36.0 * h * h {
                        prop_assert!(v > u);
                    } else {
                        prop_assert!((v - u).abs() <= 1e-12 * u.max(1e-300));
                    }
                }
            }
        }
    }
}
