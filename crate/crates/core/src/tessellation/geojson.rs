//! GeoJSON serialization of tessellations.
//!
//! The collection carries the centroids, box, kind and precision as foreign
//! members, which is enough to rebuild the identical tessellation on load.

use serde_json::{json, Map, Value};

use super::{tessellate, Centroid, Region, Tessellation, TessellationKind};
use crate::error::{Error, Result};
use crate::geo::{GeoBBox, LatLon};

/// `Polygon` geometry from a closed (lat, lon) ring.
pub fn polygon_geometry(ring: &[LatLon]) -> Value {
    let coords: Vec<Value> = ring.iter().map(|p| json!([p.lon, p.lat])).collect();
    json!({ "type": "Polygon", "coordinates": [coords] })
}

fn region_properties(tess: &Tessellation, region: &Region) -> Map<String, Value> {
    let mut props = Map::new();
    props.insert("region_id".into(), json!(region.id()));
    props.insert("kind".into(), json!(tess.kind().as_str()));
    match region {
        Region::Voronoi(c) => {
            props.insert("site_id".into(), json!(c.site.id));
            props.insert("site_lat".into(), json!(c.site.lat));
            props.insert("site_lon".into(), json!(c.site.lon));
            props.insert("area_km2".into(), json!(c.area_km2));
        }
        Region::Geohash(c) => {
            props.insert("code".into(), json!(c.code));
            props.insert("neighbor_codes".into(), json!(c.neighbor_codes));
        }
    }
    props.insert("neighbor_ids".into(), json!(region.neighbor_ids()));
    props
}

/// Feature per region, with `extra` merged into the collection's foreign members.
pub fn to_geojson(tess: &Tessellation, extra: &Map<String, Value>) -> Value {
    let features: Vec<Value> = tess
        .regions()
        .iter()
        .map(|r| {
            json!({
                "type": "Feature",
                "geometry": polygon_geometry(&r.polygon()),
                "properties": region_properties(tess, r),
            })
        })
        .collect();
    let b = tess.bbox();
    let mut root = Map::new();
    root.insert("type".into(), json!("FeatureCollection"));
    root.insert("bbox".into(), json!([b.min_lon, b.min_lat, b.max_lon, b.max_lat]));
    root.insert("kind".into(), json!(tess.kind().as_str()));
    if let Some(p) = tess.precision() {
        root.insert("precision".into(), json!(p));
    }
    let centroids: Vec<Value> = tess.centroids().iter().map(|c| json!([c.id, c.lat, c.lon])).collect();
    root.insert("centroids".into(), Value::Array(centroids));
    for (k, v) in extra {
        root.insert(k.clone(), v.clone());
    }
    root.insert("features".into(), Value::Array(features));
    Value::Object(root)
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::Data(format!("tessellation GeoJSON lacks {key:?}")))
}

fn as_f64(v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::Data(format!("expected a number, found {v}")))
}

/// Rebuilds a tessellation written by [`to_geojson`].
pub fn from_geojson(v: &Value) -> Result<Tessellation> {
    let kind: TessellationKind = field(v, "kind")?
        .as_str()
        .ok_or_else(|| Error::Data("kind must be a string".into()))?
        .parse()?;
    let b = field(v, "bbox")?
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| Error::Data("bbox must have 4 numbers".into()))?;
    let bbox = GeoBBox::new(as_f64(&b[1])?, as_f64(&b[0])?, as_f64(&b[3])?, as_f64(&b[2])?)?;
    let centroids = field(v, "centroids")?
        .as_array()
        .ok_or_else(|| Error::Data("centroids must be an array".into()))?
        .iter()
        .map(|c| {
            let a = c
                .as_array()
                .filter(|a| a.len() == 3)
                .ok_or_else(|| Error::Data("centroid entries are [id, lat, lon]".into()))?;
            Ok(Centroid {
                id: a[0].as_u64().ok_or_else(|| Error::Data("centroid id".into()))? as usize,
                lat: as_f64(&a[1])?,
                lon: as_f64(&a[2])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let precision = match v.get("precision") {
        Some(p) => p.as_u64().ok_or_else(|| Error::Data("precision".into()))? as usize,
        None => 6,
    };
    tessellate(kind, &centroids, &bbox, precision)
}
