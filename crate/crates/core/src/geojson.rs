//! GeoJSON FeatureCollection reading and writing for zone geometries.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{Ring, ZonePolygon, ZoneSet};

pub const DEFAULT_ZONE_ID_KEY: &str = "GEOID";

fn ring_from(value: &Value, ctx: &str) -> Result<Ring> {
    let coords = value
        .as_array()
        .ok_or_else(|| Error::Data(format!("{ctx}: ring is not an array")))?;
    coords
        .iter()
        .map(|c| match c.as_array().map(Vec::as_slice) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok([x, y]),
                _ => Err(Error::Data(format!("{ctx}: non-numeric coordinate"))),
            },
            _ => Err(Error::Data(format!("{ctx}: malformed position"))),
        })
        .collect()
}

fn polygon_from(zone_id: &str, rings: &Value, ctx: &str) -> Result<ZonePolygon> {
    let rings = rings
        .as_array()
        .ok_or_else(|| Error::Data(format!("{ctx}: polygon is not an array of rings")))?;
    let mut rings = rings.iter().map(|r| ring_from(r, ctx));
    let outer = rings
        .next()
        .ok_or_else(|| Error::Data(format!("{ctx}: polygon has no rings")))??;
    let holes = rings.collect::<Result<Vec<_>>>()?;
    ZonePolygon::new(zone_id, outer, holes)
}

/// Reads Polygon and MultiPolygon features; the zone id comes from property
/// `id_key` (strings as-is, numbers formatted). Features with other geometry
/// types are rejected.
pub fn read_zones(text: &str, id_key: &str) -> Result<Vec<ZonePolygon>> {
    let root: Value = serde_json::from_str(text)?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Data("zones file is not a GeoJSON FeatureCollection".into()));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Data("FeatureCollection has no `features` array".into()))?;
    let mut parts = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let ctx = format!("feature {i}");
        let id = match f.get("properties").and_then(|p| p.get(id_key)) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(Error::Data(format!("{ctx}: missing property `{id_key}`"))),
        };
        let geom = f
            .get("geometry")
            .ok_or_else(|| Error::Data(format!("{ctx}: no geometry")))?;
        let coords = geom.get("coordinates").unwrap_or(&Value::Null);
        match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => parts.push(polygon_from(&id, coords, &ctx)?),
            Some("MultiPolygon") => {
                let polys = coords
                    .as_array()
                    .ok_or_else(|| Error::Data(format!("{ctx}: MultiPolygon coordinates are not an array")))?;
                for p in polys {
                    parts.push(polygon_from(&id, p, &ctx)?);
                }
            }
            other => {
                return Err(Error::Data(format!(
                    "{ctx}: unsupported geometry type {}",
                    other.unwrap_or("<none>")
                )))
            }
        }
    }
    Ok(parts)
}

fn rings_json(p: &ZonePolygon) -> Value {
    Value::Array(p.rings().map(|r| json!(r)).collect())
}

/// Polygon for single-part zones, MultiPolygon otherwise.
pub fn zone_geometry(zones: &ZoneSet, zone: usize) -> Value {
    let parts: Vec<&ZonePolygon> = zones.parts_of(zone).collect();
    match parts.as_slice() {
        [one] => json!({ "type": "Polygon", "coordinates": rings_json(one) }),
        many => json!({
            "type": "MultiPolygon",
            "coordinates": many.iter().map(|p| rings_json(p)).collect::<Vec<_>>(),
        }),
    }
}

/// FeatureCollection with one feature per zone; `properties(i)` supplies the
/// zone's properties (the id key is added first).
pub fn feature_collection(
    zones: &ZoneSet,
    id_key: &str,
    mut properties: impl FnMut(usize) -> Map<String, Value>,
) -> Value {
    let features: Vec<Value> = (0..zones.len())
        .map(|i| {
            let mut props = Map::new();
            props.insert(id_key.to_string(), Value::String(zones.ids()[i].clone()));
            props.extend(properties(i));
            json!({
                "type": "Feature",
                "properties": props,
                "geometry": zone_geometry(zones, i),
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}
