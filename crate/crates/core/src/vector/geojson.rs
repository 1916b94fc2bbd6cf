//! GeoJSON reading and writing for lakes, rivers, reference lakes and land.

use std::path::Path;

use serde_json::{json, Map, Value};

use super::contour::{epoch_year, LakeFeature};
use super::matching::ReferenceLake;
use crate::error::{Error, Result};
use crate::geom::{signed_area, Point};
use crate::raster::{LandPolygon, River};

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn coords(ring: &[Point]) -> Value {
    Value::Array(ring.iter().map(|&(x, y)| json!([x, y])).collect())
}

fn parse_point(v: &Value) -> Result<Point> {
    let a = v
        .as_array()
        .ok_or_else(|| bad("position is not an array"))?;
    match (
        a.first().and_then(Value::as_f64),
        a.get(1).and_then(Value::as_f64),
    ) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(bad("position needs two numbers")),
    }
}

fn parse_line(v: &Value) -> Result<Vec<Point>> {
    v.as_array()
        .ok_or_else(|| bad("coordinate list is not an array"))?
        .iter()
        .map(parse_point)
        .collect()
}

fn parse_polygon(v: &Value) -> Result<Vec<Vec<Point>>> {
    v.as_array()
        .ok_or_else(|| bad("polygon is not an array of rings"))?
        .iter()
        .map(parse_line)
        .collect()
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

/// Features of a FeatureCollection as `(geometry, properties)` pairs.
fn features(doc: &Value) -> Result<Vec<(&Value, &Map<String, Value>)>> {
    static EMPTY: std::sync::OnceLock<Map<String, Value>> = std::sync::OnceLock::new();
    let empty = EMPTY.get_or_init(Map::new);
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("expected a FeatureCollection"));
    }
    doc.get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("FeatureCollection lacks features"))?
        .iter()
        .map(|f| {
            let g = f
                .get("geometry")
                .ok_or_else(|| bad("feature lacks geometry"))?;
            let p = f
                .get("properties")
                .and_then(Value::as_object)
                .unwrap_or(empty);
            Ok((g, p))
        })
        .collect()
}

/// Polygons of a geometry (Polygon or MultiPolygon).
fn polygons_of(g: &Value) -> Result<Vec<Vec<Vec<Point>>>> {
    let c = g
        .get("coordinates")
        .ok_or_else(|| bad("geometry lacks coordinates"))?;
    match g.get("type").and_then(Value::as_str) {
        Some("Polygon") => Ok(vec![parse_polygon(c)?]),
        Some("MultiPolygon") => c
            .as_array()
            .ok_or_else(|| bad("MultiPolygon coordinates are not an array"))?
            .iter()
            .map(parse_polygon)
            .collect(),
        other => Err(bad(format!("expected Polygon geometry, found {other:?}"))),
    }
}

pub fn lakes_to_geojson(features: &[LakeFeature], config: &Value) -> Value {
    let feats: Vec<Value> = features
        .iter()
        .map(|f| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [coords(&f.ring)] },
                "properties": {
                    "lake_id": f.lake_id,
                    "epoch": f.epoch,
                    "epoch_year": epoch_year(f.epoch),
                    "area_km2": f.area_km2,
                    "pixel_count": f.pixel_count,
                    "matched": f.lake_id.is_some(),
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "config": config, "features": feats })
}

pub fn lakes_from_geojson(doc: &Value) -> Result<Vec<LakeFeature>> {
    features(doc)?
        .into_iter()
        .map(|(g, p)| {
            let ring = polygons_of(g)?
                .into_iter()
                .next()
                .and_then(|p| p.into_iter().next())
                .ok_or_else(|| bad("lake without a ring"))?;
            let num = |k: &str| {
                p.get(k)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| bad(format!("lake lacks {k}")))
            };
            Ok(LakeFeature {
                epoch: num("epoch")? as usize,
                ring,
                pixel_count: num("pixel_count")? as usize,
                area_km2: num("area_km2")?,
                lake_id: p.get("lake_id").and_then(Value::as_u64),
            })
        })
        .collect()
}

pub fn rivers_to_geojson(rivers: &[River]) -> Value {
    let feats: Vec<Value> = rivers
        .iter()
        .map(|r| {
            json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords(&r.points) },
                "properties": { "width_m": r.width_m }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": feats })
}

/// LineString and MultiLineString features with a `width_m` property.
pub fn rivers_from_geojson(doc: &Value) -> Result<Vec<River>> {
    let mut out = Vec::new();
    for (g, p) in features(doc)? {
        let width_m = p
            .get("width_m")
            .and_then(Value::as_f64)
            .ok_or_else(|| bad("river lacks width_m"))?;
        let c = g
            .get("coordinates")
            .ok_or_else(|| bad("geometry lacks coordinates"))?;
        match g.get("type").and_then(Value::as_str) {
            Some("LineString") => out.push(River {
                points: parse_line(c)?,
                width_m,
            }),
            Some("MultiLineString") => {
                for line in c
                    .as_array()
                    .ok_or_else(|| bad("MultiLineString is not an array"))?
                {
                    out.push(River {
                        points: parse_line(line)?,
                        width_m,
                    });
                }
            }
            other => {
                return Err(bad(format!(
                    "expected LineString geometry, found {other:?}"
                )))
            }
        }
    }
    Ok(out)
}

pub fn reference_to_geojson(lakes: &[ReferenceLake]) -> Value {
    let feats: Vec<Value> = lakes
        .iter()
        .map(|l| {
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": l.polygon.iter().map(|r| coords(r)).collect::<Vec<_>>()
                },
                "properties": { "lake_id": l.lake_id, "area_km2": l.area_km2 }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": feats })
}

/// Polygon features with an integer `lake_id`; `area_km2` is optional.
pub fn reference_from_geojson(doc: &Value) -> Result<Vec<ReferenceLake>> {
    features(doc)?
        .into_iter()
        .map(|(g, p)| {
            let lake_id = p
                .get("lake_id")
                .and_then(Value::as_u64)
                .ok_or_else(|| bad("reference lake lacks an integer lake_id"))?;
            let polygon = polygons_of(g)?
                .into_iter()
                .next()
                .ok_or_else(|| bad("reference lake without a polygon"))?;
            let area_km2 = p.get("area_km2").and_then(Value::as_f64).unwrap_or(0.0);
            Ok(ReferenceLake {
                lake_id,
                polygon,
                area_km2,
            })
        })
        .collect()
}

pub fn land_to_geojson(polygons: &[LandPolygon]) -> Value {
    let feats: Vec<Value> = polygons
        .iter()
        .map(|p| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": p.iter().map(|r| coords(r)).collect::<Vec<_>>() },
                "properties": {}
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": feats })
}

pub fn land_from_geojson(doc: &Value) -> Result<Vec<LandPolygon>> {
    let mut out = Vec::new();
    for (g, _) in features(doc)? {
        out.extend(polygons_of(g)?);
    }
    Ok(out)
}

/// Orientation helper for callers writing their own rings.
pub fn is_counter_clockwise(ring: &[Point]) -> bool {
    signed_area(ring) > 0.0
}
