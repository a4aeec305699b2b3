//! Synthetic zones and point events with planted hotspots, for ground-truth
//! tests of the detection pipeline.

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeoPoint, PlanarPoint, Projection, ZonePolygon, ZoneSet};
use crate::ingest::{CrashRecord, FlagSet};
use crate::rng::{substream, Domain};

const MAX_REJECTIONS: usize = 100_000;

/// Square `size × size` lattice of `side_m`-meter zones. Zone `row * size +
/// col` has its lower-left corner `(col, row) * side_m` meters east/north of
/// `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub size: usize,
    pub side_m: f64,
    pub origin: GeoPoint,
}

impl Default for Lattice {
    fn default() -> Self {
        Lattice {
            size: 10,
            side_m: 1000.0,
            origin: GeoPoint::new(-77.2, 39.15),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub lattice: Lattice,
    /// Expected events per zone outside hotspots.
    pub base_intensity: f64,
    pub hotspot_zones: Vec<usize>,
    pub hotspot_multiplier: f64,
    pub severe_probability: f64,
    pub hotspot_severe_probability: f64,
    pub seed: u64,
    pub start: NaiveDate,
    pub span_days: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            lattice: Lattice::default(),
            base_intensity: 50.0,
            hotspot_zones: Vec::new(),
            hotspot_multiplier: 1.0,
            severe_probability: 0.02,
            hotspot_severe_probability: 0.02,
            seed: 0,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            span_days: 366,
        }
    }
}

impl SynthSpec {
    /// Indices of the `block × block` square whose lower-left zone is at
    /// `(row, col)`.
    pub fn block(size: usize, row: usize, col: usize, block: usize) -> Vec<usize> {
        (row..row + block)
            .flat_map(|r| (col..col + block).map(move |c| r * size + c))
            .filter(|&i| i < size * size)
            .collect()
    }

    fn validate(&self, n_zones: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.lattice.size < 3 {
            return bad(format!("lattice size must be at least 3, got {}", self.lattice.size));
        }
        if self.lattice.side_m.is_nan() || self.lattice.side_m <= 0.0 {
            return bad(format!("zone side must be positive, got {}", self.lattice.side_m));
        }
        if !(self.base_intensity >= 0.0 && self.base_intensity.is_finite()) {
            return bad(format!(
                "base intensity must be non-negative, got {}",
                self.base_intensity
            ));
        }
        if !(self.hotspot_multiplier >= 1.0 && self.hotspot_multiplier.is_finite()) {
            return bad(format!(
                "hotspot multiplier must be at least 1, got {}",
                self.hotspot_multiplier
            ));
        }
        for p in [self.severe_probability, self.hotspot_severe_probability] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        if let Some(&i) = self.hotspot_zones.iter().find(|&&i| i >= n_zones) {
            return bad(format!("hotspot zone {i} out of range ({n_zones} zones)"));
        }
        if self.span_days == 0 {
            return bad("span_days must be positive".into());
        }
        Ok(())
    }

    /// Whether planted zones differ from the rest at all.
    pub fn has_signal(&self) -> bool {
        !self.hotspot_zones.is_empty()
            && (self.hotspot_multiplier > 1.0 || self.hotspot_severe_probability != self.severe_probability)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub zones: ZoneSet,
    pub records: Vec<CrashRecord>,
    /// Ground truth per zone.
    pub hotspot: Vec<bool>,
    /// Zone each record was drawn in.
    pub record_zone: Vec<usize>,
}

impl SynthOutput {
    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0; self.zones.len()];
        for &z in &self.record_zone {
            c[z] += 1;
        }
        c
    }
}

pub fn lattice_zones(lattice: &Lattice) -> Result<ZoneSet> {
    let proj = Projection::new(lattice.origin)?;
    let corner = |c: usize, r: usize| {
        let g = proj.inverse(PlanarPoint::new(c as f64 * lattice.side_m, r as f64 * lattice.side_m));
        [g.lon, g.lat]
    };
    let width = (lattice.size * lattice.size).to_string().len().max(3);
    let mut parts = Vec::with_capacity(lattice.size * lattice.size);
    for r in 0..lattice.size {
        for c in 0..lattice.size {
            let ring = vec![corner(c, r), corner(c + 1, r), corner(c + 1, r + 1), corner(c, r + 1)];
            parts.push(ZonePolygon::new(
                format!("z{:0width$}", r * lattice.size + c),
                ring,
                vec![],
            )?);
        }
    }
    ZoneSet::new(parts)
}

fn poisson(rng: &mut impl Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive finite rate").sample(rng) as u64
}

fn draw_events(
    spec: &SynthSpec,
    zones: ZoneSet,
    place: impl Fn(usize, &mut rand_chacha::ChaCha8Rng) -> Result<GeoPoint>,
) -> Result<SynthOutput> {
    let n = zones.len();
    spec.validate(n)?;
    let mut hotspot = vec![false; n];
    if spec.has_signal() {
        for &i in &spec.hotspot_zones {
            hotspot[i] = true;
        }
    }
    let span_secs = i64::from(spec.span_days) * 86_400;
    let t0 = spec.start.and_hms_opt(0, 0, 0).expect("midnight");
    let mut records = Vec::new();
    let mut record_zone = Vec::new();
    for z in 0..n {
        let planted = spec.hotspot_zones.contains(&z);
        let lambda = spec.base_intensity * if planted { spec.hotspot_multiplier } else { 1.0 };
        let p_severe = if planted {
            spec.hotspot_severe_probability
        } else {
            spec.severe_probability
        };
        let count = poisson(&mut substream(spec.seed, Domain::SynthCounts, z as u64), lambda);
        for e in 0..count {
            let mut rng = substream(spec.seed, Domain::SynthEvents, ((z as u64) << 32) | e);
            let location = place(z, &mut rng)?;
            let severe = rng.gen_bool(p_severe);
            let timestamp = t0 + Duration::seconds(rng.gen_range(0..span_secs));
            records.push(CrashRecord {
                report_id: format!("{}-{e:05}", zones.ids()[z]),
                timestamp,
                location,
                severe,
                flags: FlagSet::default(),
            });
            record_zone.push(z);
        }
    }
    Ok(SynthOutput {
        zones,
        records,
        hotspot,
        record_zone,
    })
}

/// Poisson counts per lattice zone, locations uniform within the zone,
/// severity by a per-stratum coin flip. Fully determined by `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate(usize::MAX)?;
    let zones = lattice_zones(&spec.lattice)?;
    let cells: Vec<[[f64; 2]; 2]> = zones.parts().iter().map(|p| [p.outer()[0], p.outer()[2]]).collect();
    draw_events(spec, zones, |z, rng| {
        let [lo, hi] = cells[z];
        let (u, v): (f64, f64) = (rng.gen(), rng.gen());
        Ok(GeoPoint::new(lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1])))
    })
}

/// Same process over arbitrary zones; locations are rejection-sampled from
/// each zone's bounding box. `spec.lattice` is ignored.
pub fn generate_on_zones(zones: ZoneSet, spec: &SynthSpec) -> Result<SynthOutput> {
    let shapes = zones.clone();
    draw_events(spec, zones, move |z, rng| {
        let parts: Vec<&ZonePolygon> = shapes.parts_of(z).collect();
        for _ in 0..MAX_REJECTIONS {
            let part = parts[rng.gen_range(0..parts.len())];
            let b = part.bbox();
            let p = [
                b.min[0] + rng.gen::<f64>() * (b.max[0] - b.min[0]),
                b.min[1] + rng.gen::<f64>() * (b.max[1] - b.min[1]),
            ];
            if part.contains(p) {
                return Ok(GeoPoint::new(p[0], p[1]));
            }
        }
        Err(Error::Data(format!(
            "could not place a point inside zone {} after {MAX_REJECTIONS} tries",
            shapes.ids()[z]
        )))
    })
}
