//! GeoJSON exchange for tissue outlines (RFC 7946 FeatureCollection).
//!
//! Coordinates are level-0 pixel units. Each outer ring becomes one Feature
//! with a Polygon geometry whose first ring is the exterior and subsequent
//! rings are holes; MultiPolygon is accepted on import. This is the editing
//! handoff: masks exported here can be corrected in an annotation tool and
//! re-imported, fully replacing the pipeline mask downstream.

use std::path::Path;

use pathforge_core::contour::{rasterize_polygons, Polygon, Ring, TissuePolygons};
use pathforge_core::mask::TissueMask;

use crate::error::{PathforgeError, Result};

#[derive(serde::Serialize, serde::Deserialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<Feature>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: String,
    geometry: Geometry,
    #[serde(default)]
    properties: serde_json::Map<String, serde_json::Value>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: serde_json::Value,
}

fn ring_to_coords(ring: &Ring) -> serde_json::Value {
    let mut points: Vec<serde_json::Value> =
        ring.iter().map(|&(x, y)| serde_json::json!([x, y])).collect();
    // GeoJSON rings repeat the first position at the end
    if let Some(first) = points.first().cloned() {
        points.push(first);
    }
    serde_json::Value::Array(points)
}

pub fn export_geojson(polys: &TissuePolygons, path: &Path) -> Result<()> {
    if polys.polygons.is_empty() {
        return Err(pathforge_core::seg::SegError::EmptyMask.into());
    }
    let features = polys
        .polygons
        .iter()
        .map(|poly| {
            let mut rings = vec![ring_to_coords(&poly.outer)];
            rings.extend(poly.holes.iter().map(ring_to_coords));
            let mut properties = serde_json::Map::new();
            properties.insert(
                "slide_id".to_string(),
                serde_json::Value::String(polys.slide_id.clone()),
            );
            Feature {
                kind: "Feature".to_string(),
                geometry: Geometry {
                    kind: "Polygon".to_string(),
                    coordinates: serde_json::Value::Array(rings),
                },
                properties,
            }
        })
        .collect();
    let collection = FeatureCollection { kind: "FeatureCollection".to_string(), features };
    std::fs::write(path, serde_json::to_vec_pretty(&collection)?)?;
    Ok(())
}

fn parse_ring(value: &serde_json::Value) -> Result<Ring> {
    let points = value
        .as_array()
        .ok_or_else(|| PathforgeError::MalformedGeoJson("ring is not an array".to_string()))?;
    let mut ring: Ring = Vec::with_capacity(points.len());
    for p in points {
        let pair = p
            .as_array()
            .filter(|a| a.len() >= 2)
            .ok_or_else(|| PathforgeError::MalformedGeoJson("position is not [x, y]".to_string()))?;
        let x = pair[0].as_f64().ok_or_else(|| {
            PathforgeError::MalformedGeoJson("non-numeric coordinate".to_string())
        })?;
        let y = pair[1].as_f64().ok_or_else(|| {
            PathforgeError::MalformedGeoJson("non-numeric coordinate".to_string())
        })?;
        ring.push((x, y));
    }
    // drop the duplicated closing position
    if ring.len() >= 2 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(PathforgeError::MalformedGeoJson("ring with fewer than 3 points".to_string()));
    }
    Ok(ring)
}

fn parse_polygon(coordinates: &serde_json::Value) -> Result<Polygon> {
    let rings = coordinates
        .as_array()
        .ok_or_else(|| PathforgeError::MalformedGeoJson("polygon is not an array".to_string()))?;
    if rings.is_empty() {
        return Err(PathforgeError::MalformedGeoJson("polygon with no rings".to_string()));
    }
    let outer = parse_ring(&rings[0])?;
    let holes = rings[1..].iter().map(parse_ring).collect::<Result<Vec<_>>>()?;
    Ok(Polygon { outer, holes })
}

/// Parse a FeatureCollection into tissue polygons. Geometries other than
/// Polygon/MultiPolygon are rejected.
pub fn parse_geojson(path: &Path, slide_id: &str) -> Result<TissuePolygons> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PathforgeError::MissingFile(path.to_path_buf()),
        _ => PathforgeError::Io(e),
    })?;
    let collection: FeatureCollection = serde_json::from_slice(&bytes)
        .map_err(|e| PathforgeError::MalformedGeoJson(e.to_string()))?;
    if collection.kind != "FeatureCollection" {
        return Err(PathforgeError::MalformedGeoJson(format!(
            "expected FeatureCollection, got {:?}",
            collection.kind
        )));
    }
    let mut polygons = Vec::new();
    for feature in &collection.features {
        match feature.geometry.kind.as_str() {
            "Polygon" => polygons.push(parse_polygon(&feature.geometry.coordinates)?),
            "MultiPolygon" => {
                let parts = feature.geometry.coordinates.as_array().ok_or_else(|| {
                    PathforgeError::MalformedGeoJson("MultiPolygon is not an array".to_string())
                })?;
                for part in parts {
                    polygons.push(parse_polygon(part)?);
                }
            }
            other => return Err(PathforgeError::UnsupportedGeometry(other.to_string())),
        }
    }
    if polygons.is_empty() {
        return Err(PathforgeError::MalformedGeoJson("no polygons".to_string()));
    }
    Ok(TissuePolygons { slide_id: slide_id.to_string(), polygons })
}

/// Import a GeoJSON file as an external tissue mask on the given grid.
pub fn import_geojson(
    path: &Path,
    slide_id: &str,
    mask_width: u32,
    mask_height: u32,
    scale: f64,
) -> Result<TissueMask> {
    let polys = parse_geojson(path, slide_id)?;
    Ok(rasterize_polygons(&polys, mask_width, mask_height, scale))
}
