//! Planar projection, polygon predicates, centroids and point-to-zone assignment.
//!
//! Zone rings are stored as raw `[x, y]` pairs so the same predicates work in
//! geographic degrees (x = lon, y = lat) and in projected meters. The local
//! equirectangular projection is affine in (lon, lat), so containment is
//! unaffected by which space it is evaluated in.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used by the local projection, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Self {
        GeoPoint { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn dist2(&self, other: &PlanarPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Anything with a planar `[x, y]` reading.
pub trait Xy {
    fn xy(&self) -> [f64; 2];
}

impl Xy for GeoPoint {
    fn xy(&self) -> [f64; 2] {
        [self.lon, self.lat]
    }
}

impl Xy for PlanarPoint {
    fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

impl Xy for [f64; 2] {
    fn xy(&self) -> [f64; 2] {
        *self
    }
}

/// Local equirectangular projection about a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    reference: GeoPoint,
    cos_lat0: f64,
}

impl Projection {
    pub fn new(reference: GeoPoint) -> Result<Self> {
        if !reference.is_valid() {
            return Err(Error::Coordinate {
                index: 0,
                x: reference.lon,
                y: reference.lat,
            });
        }
        Ok(Projection {
            reference,
            cos_lat0: reference.lat.to_radians().cos(),
        })
    }

    pub fn reference(&self) -> GeoPoint {
        self.reference
    }

    pub fn forward(&self, p: GeoPoint) -> PlanarPoint {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        PlanarPoint {
            x: k * (p.lon - self.reference.lon) * self.cos_lat0,
            y: k * (p.lat - self.reference.lat),
        }
    }

    pub fn inverse(&self, p: PlanarPoint) -> GeoPoint {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        GeoPoint {
            lon: self.reference.lon + p.x / (k * self.cos_lat0),
            lat: self.reference.lat + p.y / k,
        }
    }

    pub fn forward_xy(&self, xy: [f64; 2]) -> [f64; 2] {
        let p = self.forward(GeoPoint::new(xy[0], xy[1]));
        [p.x, p.y]
    }
}

/// Projects geographic points to meters about `reference`.
pub fn project(points: &[GeoPoint], reference: GeoPoint) -> Result<Vec<PlanarPoint>> {
    let proj = Projection::new(reference)?;
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            if p.is_valid() {
                Ok(proj.forward(*p))
            } else {
                Err(Error::Coordinate {
                    index,
                    x: p.lon,
                    y: p.lat,
                })
            }
        })
        .collect()
}

pub type Ring = Vec<[f64; 2]>;

/// Axis-aligned bounding box `[min_x, min_y, max_x, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BBox {
    pub fn empty() -> Self {
        BBox {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        }
    }

    pub fn extend(&mut self, p: [f64; 2]) {
        self.min = [self.min[0].min(p[0]), self.min[1].min(p[1])];
        self.max = [self.max[0].max(p[0]), self.max[1].max(p[1])];
    }

    pub fn union(&mut self, other: &BBox) {
        self.extend(other.min);
        self.extend(other.max);
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// One polygon part of a zone. Multi-part zones are several `ZonePolygon`s
/// sharing a `zone_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonePolygon {
    zone_id: String,
    outer: Ring,
    holes: Vec<Ring>,
    bbox: BBox,
}

fn close_ring(zone_id: &str, mut ring: Ring) -> Result<Ring> {
    if let Some(&p) = ring.iter().find(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::Structure {
            zone_id: zone_id.to_string(),
            reason: format!("non-finite vertex ({}, {})", p[0], p[1]),
        });
    }
    if let (Some(first), Some(last)) = (ring.first(), ring.last()) {
        if first != last {
            let first = *first;
            ring.push(first);
        }
    }
    if ring.len() < 4 {
        return Err(Error::Structure {
            zone_id: zone_id.to_string(),
            reason: format!("ring has {} vertices after closing, need at least 4", ring.len()),
        });
    }
    Ok(ring)
}

impl ZonePolygon {
    /// Closes each ring if needed and rejects rings with fewer than four
    /// vertices. Self-intersection is not checked.
    pub fn new(zone_id: impl Into<String>, outer: Ring, holes: Vec<Ring>) -> Result<Self> {
        let zone_id = zone_id.into();
        let outer = close_ring(&zone_id, outer)?;
        let holes = holes
            .into_iter()
            .map(|h| close_ring(&zone_id, h))
            .collect::<Result<Vec<_>>>()?;
        let mut bbox = BBox::empty();
        for p in &outer {
            bbox.extend(*p);
        }
        Ok(ZonePolygon {
            zone_id,
            outer,
            holes,
            bbox,
        })
    }

    pub fn zone_id(&self) -> &str {
        &self.zone_id
    }

    pub fn outer(&self) -> &Ring {
        &self.outer
    }

    pub fn holes(&self) -> &[Ring] {
        &self.holes
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    /// Applies `f` to every vertex, e.g. to project into meters.
    pub fn map_coords(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<ZonePolygon> {
        let outer = self.outer.iter().map(|p| f(*p)).collect();
        let holes = self.holes.iter().map(|h| h.iter().map(|p| f(*p)).collect()).collect();
        ZonePolygon::new(self.zone_id.clone(), outer, holes)
    }

    /// Even-odd containment. Holes toggle parity, so a point inside a hole is
    /// outside the polygon.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        self.rings()
            .fold(false, |inside, ring| inside ^ ring_crossings_odd(ring, p))
    }
}

/// Ray cast toward +x. An edge counts when `p.y` lies in `[y_lo, y_hi)` of the
/// edge and the crossing is strictly to the right of `p`: edges own their
/// lower endpoint and not their upper one, and the left side of a cell owns
/// its boundary while the right side does not. Two polygons sharing an edge
/// therefore never both claim a point on it.
fn ring_crossings_odd(ring: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut odd = false;
    for edge in ring.windows(2) {
        let (a, b) = (edge[0], edge[1]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x_cross {
                odd = !odd;
            }
        }
    }
    odd
}

pub fn point_in_polygon(p: &impl Xy, poly: &ZonePolygon) -> bool {
    poly.contains(p.xy())
}

fn ring_moments(ring: &[[f64; 2]]) -> (f64, f64, f64) {
    // signed area, and first moments ∫x dA, ∫y dA
    let (mut a2, mut mx, mut my) = (0.0, 0.0, 0.0);
    for e in ring.windows(2) {
        let (p, q) = (e[0], e[1]);
        let cross = p[0] * q[1] - q[0] * p[1];
        a2 += cross;
        mx += (p[0] + q[0]) * cross;
        my += (p[1] + q[1]) * cross;
    }
    (a2 / 2.0, mx / 6.0, my / 6.0)
}

/// Unsigned area and first moments of a polygon with holes subtracted.
fn polygon_moments(poly: &ZonePolygon) -> (f64, f64, f64) {
    let mut total = (0.0, 0.0, 0.0);
    for (i, ring) in poly.rings().enumerate() {
        let (a, mx, my) = ring_moments(ring);
        // orient outer positive, holes negative, whatever the input winding
        let s = if (a >= 0.0) == (i == 0) { 1.0 } else { -1.0 };
        total.0 += s * a;
        total.1 += s * mx;
        total.2 += s * my;
    }
    total
}

pub fn polygon_area(poly: &ZonePolygon) -> f64 {
    polygon_moments(poly).0
}

/// Area-weighted (shoelace) centroid; holes contribute negative area.
pub fn centroid(poly: &ZonePolygon) -> Result<PlanarPoint> {
    centroid_of_parts(std::slice::from_ref(poly))
}

/// Area-weighted centroid of several parts of one zone.
pub fn centroid_of_parts(parts: &[ZonePolygon]) -> Result<PlanarPoint> {
    let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
    for part in parts {
        let m = polygon_moments(part);
        a += m.0;
        mx += m.1;
        my += m.2;
    }
    if a == 0.0 || !a.is_finite() {
        return Err(Error::Structure {
            zone_id: parts.first().map(|p| p.zone_id.clone()).unwrap_or_default(),
            reason: "zero total area".into(),
        });
    }
    Ok(PlanarPoint::new(mx / a, my / a))
}

/// Polygons grouped by zone id, in first-appearance order.
#[derive(Debug, Clone)]
pub struct ZoneSet {
    ids: Vec<String>,
    parts: Vec<ZonePolygon>,
    part_zone: Vec<usize>,
}

impl ZoneSet {
    pub fn new(parts: Vec<ZonePolygon>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Data("zone set is empty".into()));
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut ids = Vec::new();
        let part_zone = parts
            .iter()
            .map(|p| {
                *index.entry(p.zone_id.clone()).or_insert_with(|| {
                    ids.push(p.zone_id.clone());
                    ids.len() - 1
                })
            })
            .collect();
        Ok(ZoneSet { ids, parts, part_zone })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn parts(&self) -> &[ZonePolygon] {
        &self.parts
    }

    /// Zone index owning polygon part `part`.
    pub fn zone_of_part(&self, part: usize) -> usize {
        self.part_zone[part]
    }

    pub fn parts_of(&self, zone: usize) -> impl Iterator<Item = &ZonePolygon> {
        self.parts
            .iter()
            .zip(&self.part_zone)
            .filter(move |(_, &z)| z == zone)
            .map(|(p, _)| p)
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox::empty();
        for p in &self.parts {
            b.union(&p.bbox);
        }
        b
    }

    /// Projects every part through `proj` (coordinates taken as lon/lat).
    pub fn project(&self, proj: &Projection) -> Result<ZoneSet> {
        let parts = self
            .parts
            .iter()
            .map(|p| p.map_coords(|xy| proj.forward_xy(xy)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ZoneSet {
            ids: self.ids.clone(),
            parts,
            part_zone: self.part_zone.clone(),
        })
    }

    /// One area-weighted centroid per zone, in the set's own coordinates.
    pub fn centroids(&self) -> Result<Vec<PlanarPoint>> {
        let mut grouped: Vec<Vec<ZonePolygon>> = vec![Vec::new(); self.ids.len()];
        for (p, &z) in self.parts.iter().zip(&self.part_zone) {
            grouped[z].push(p.clone());
        }
        grouped.iter().map(|g| centroid_of_parts(g)).collect()
    }
}

/// Zone index per input point, `None` when no zone contains it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneAssignment {
    pub zone: Vec<Option<usize>>,
}

impl ZoneAssignment {
    pub fn assigned(&self) -> usize {
        self.zone.iter().filter(|z| z.is_some()).count()
    }

    pub fn unassigned(&self) -> usize {
        self.zone.len() - self.assigned()
    }
}

/// Uniform bucket grid over part bounding boxes.
struct BucketIndex {
    bbox: BBox,
    cols: usize,
    rows: usize,
    cell: [f64; 2],
    buckets: Vec<Vec<usize>>,
}

impl BucketIndex {
    fn build(parts: &[ZonePolygon]) -> Self {
        let mut bbox = BBox::empty();
        for p in parts {
            bbox.union(&p.bbox);
        }
        let side = ((parts.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let (cols, rows) = (side, side);
        let cell = [
            ((bbox.max[0] - bbox.min[0]) / cols as f64).max(f64::MIN_POSITIVE),
            ((bbox.max[1] - bbox.min[1]) / rows as f64).max(f64::MIN_POSITIVE),
        ];
        let mut idx = BucketIndex {
            bbox,
            cols,
            rows,
            cell,
            buckets: vec![Vec::new(); cols * rows],
        };
        for (i, p) in parts.iter().enumerate() {
            let (c0, r0) = idx.cell_of(p.bbox.min);
            let (c1, r1) = idx.cell_of(p.bbox.max);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    idx.buckets[r * cols + c].push(i);
                }
            }
        }
        idx
    }

    fn cell_of(&self, p: [f64; 2]) -> (usize, usize) {
        let c = ((p[0] - self.bbox.min[0]) / self.cell[0]).floor();
        let r = ((p[1] - self.bbox.min[1]) / self.cell[1]).floor();
        (
            (c.max(0.0) as usize).min(self.cols - 1),
            (r.max(0.0) as usize).min(self.rows - 1),
        )
    }

    fn candidates(&self, p: [f64; 2]) -> &[usize] {
        if !self.bbox.contains(p) {
            return &[];
        }
        let (c, r) = self.cell_of(p);
        &self.buckets[r * self.cols + c]
    }
}

/// Assigns each point to the zone of the lowest-indexed part containing it.
/// Buckets hold part indices in ascending order, so this matches a naive
/// scan over all parts.
pub fn assign_zones<P: Xy + Sync>(points: &[P], zones: &ZoneSet) -> ZoneAssignment {
    let index = BucketIndex::build(&zones.parts);
    let zone = points
        .par_iter()
        .map(|p| {
            let xy = p.xy();
            if !(xy[0].is_finite() && xy[1].is_finite()) {
                return None;
            }
            index
                .candidates(xy)
                .iter()
                .find(|&&i| zones.parts[i].contains(xy))
                .map(|&i| zones.part_zone[i])
        })
        .collect();
    ZoneAssignment { zone }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(id: &str, x0: f64, y0: f64, s: f64) -> ZonePolygon {
        ZonePolygon::new(id, vec![[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]], vec![]).unwrap()
    }

    #[test]
    fn projection_identity_and_north_offset() {
        let r = GeoPoint::new(-77.2, 39.15);
        let out = project(&[r, GeoPoint::new(-77.2, 39.16)], r).unwrap();
        assert_eq!(out[0], PlanarPoint::new(0.0, 0.0));
        assert!(out[1].x.abs() < 1e-12);
        assert!((out[1].y - 1_111.949_266_445_587_4).abs() < 1e-6, "{}", out[1].y);
    }

    #[test]
    fn projection_east_offset_matches_high_precision_value() {
        // 6371000 * 0.01 * pi/180 * cos(39.15 deg), evaluated with mpmath at 30 digits
        let expected = 862.311_922_752_041_7;
        let r = GeoPoint::new(-77.2, 39.15);
        let out = project(&[GeoPoint::new(-77.19, 39.15)], r).unwrap();
        assert!((out[0].x - expected).abs() < 1e-6, "{}", out[0].x);
        assert!(out[0].y.abs() < 1e-12);
    }

    #[test]
    fn projection_rejects_non_finite_with_index() {
        let r = GeoPoint::new(0.0, 0.0);
        let err = project(&[r, r, GeoPoint::new(f64::NAN, 1.0)], r).unwrap_err();
        assert!(matches!(err, Error::Coordinate { index: 2, .. }));
    }

    #[test]
    fn unit_square_containment() {
        let sq = square("a", 0.0, 0.0, 1.0);
        assert!(point_in_polygon(&[0.5, 0.5], &sq));
        assert!(!point_in_polygon(&[1.5, 0.5], &sq));
        let holed = ZonePolygon::new(
            "h",
            sq.outer().clone(),
            vec![vec![[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75]]],
        )
        .unwrap();
        assert!(!holed.contains([0.5, 0.5]));
        assert!(holed.contains([0.1, 0.5]));
    }

    #[test]
    fn shared_edge_belongs_to_exactly_one_zone() {
        let a = square("a", 0.0, 0.0, 1.0);
        let b = square("b", 1.0, 0.0, 1.0);
        let c = square("c", 0.0, 1.0, 1.0);
        for p in [[1.0, 0.5], [0.5, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0]] {
            let hits = [&a, &b, &c].iter().filter(|z| z.contains(p)).count();
            assert!(hits <= 1, "{p:?} claimed {hits} times");
        }
        assert!(b.contains([1.0, 0.5]));
        assert!(c.contains([0.5, 1.0]));
    }

    #[test]
    fn degenerate_ring_is_structural_error() {
        let err = ZonePolygon::new("z", vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]], vec![]).unwrap_err();
        assert!(matches!(err, Error::Structure { .. }));
    }

    #[test]
    fn centroids() {
        let c = centroid(&square("a", 0.0, 0.0, 1.0)).unwrap();
        assert!((c.x - 0.5).abs() < 1e-15 && (c.y - 0.5).abs() < 1e-15);
        let tri = ZonePolygon::new("t", vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![]).unwrap();
        let c = centroid(&tri).unwrap();
        assert!((c.x - 1.0 / 3.0).abs() < 1e-15 && (c.y - 1.0 / 3.0).abs() < 1e-15);
        // hole wound the same way as the outer ring still subtracts
        let holed = ZonePolygon::new(
            "h",
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![vec![[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75]]],
        )
        .unwrap();
        assert!((polygon_area(&holed) - 0.75).abs() < 1e-15);
        let c = centroid(&holed).unwrap();
        assert!((c.x - 0.5).abs() < 1e-15 && (c.y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_area_centroid_fails() {
        let flat = ZonePolygon::new("f", vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![]).unwrap();
        assert!(centroid(&flat).is_err());
    }

    #[test]
    fn assignment_of_three_zones() {
        let zones = ZoneSet::new(vec![
            square("A", 0.0, 0.0, 1.0),
            square("B", 1.0, 0.0, 1.0),
            square("C", 2.0, 0.0, 1.0),
        ])
        .unwrap();
        let a = assign_zones(&[[0.5, 0.5], [5.0, 5.0], [2.5, 0.1]], &zones);
        assert_eq!(a.zone, vec![Some(0), None, Some(2)]);
        assert_eq!(a.unassigned(), 1);
    }

    #[test]
    fn multipart_zone_shares_one_id() {
        let zones = ZoneSet::new(vec![
            square("A", 0.0, 0.0, 1.0),
            square("B", 1.0, 0.0, 1.0),
            square("A", 5.0, 5.0, 1.0),
        ])
        .unwrap();
        assert_eq!(zones.len(), 2);
        let a = assign_zones(&[[5.5, 5.5]], &zones);
        assert_eq!(a.zone, vec![Some(0)]);
        let c = zones.centroids().unwrap();
        assert!((c[0].x - 3.0).abs() < 1e-12 && (c[0].y - 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn containment_is_translation_invariant(
            px in -2.0f64..3.0, py in -2.0f64..3.0,
            dx in -100.0f64..100.0, dy in -100.0f64..100.0,
        ) {
            // dyadic offsets keep the shifted coordinates exact
            let dx = (dx * 64.0).round() / 64.0;
            let dy = (dy * 64.0).round() / 64.0;
            let px = (px * 1024.0).round() / 1024.0;
            let py = (py * 1024.0).round() / 1024.0;
            let poly = ZonePolygon::new(
                "p",
                vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 2.0], [0.0, 1.0]],
                vec![],
            ).unwrap();
            let shifted = poly.map_coords(|q| [q[0] + dx, q[1] + dy]).unwrap();
            prop_assert_eq!(poly.contains([px, py]), shifted.contains([px + dx, py + dy]));
        }

        #[test]
        fn convex_centroid_is_inside(
            n in 3usize..12, rx in 0.5f64..50.0, ry in 0.5f64..50.0,
            cx in -1e3f64..1e3, cy in -1e3f64..1e3, rot in 0.0f64..std::f64::consts::TAU,
        ) {
            let ring: Ring = (0..n)
                .map(|i| {
                    let t = rot + i as f64 * std::f64::consts::TAU / n as f64;
                    [cx + rx * t.cos(), cy + ry * t.sin()]
                })
                .collect();
            let poly = ZonePolygon::new("c", ring, vec![]).unwrap();
            let c = centroid(&poly).unwrap();
            prop_assert!(poly.contains([c.x, c.y]));
        }

        #[test]
        fn projection_round_trips(
            lon in -78.0f64..-76.5, lat in 38.5f64..40.0,
        ) {
            let proj = Projection::new(GeoPoint::new(-77.2, 39.15)).unwrap();
            let back = proj.inverse(proj.forward(GeoPoint::new(lon, lat)));
            prop_assert!((back.lon - lon).abs() < 1e-9);
            prop_assert!((back.lat - lat).abs() < 1e-9);
        }
    }
}
