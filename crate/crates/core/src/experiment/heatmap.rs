use std::ops::Range;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::features::SeriesMatrix;
use crate::tessellation::geojson::polygon_geometry;
use crate::tessellation::Tessellation;

/// Half-open volume bands `[lo, hi)`.
pub const BANDS: [(u64, u64, &str); 5] = [
    (0, 5_000, "0-5000"),
    (5_000, 10_000, "5000-10000"),
    (10_000, 25_000, "10000-25000"),
    (25_000, 50_000, "25000-50000"),
    (50_000, 150_000, "50000-150000"),
];

/// Band label and overflow flag; volumes past the top band keep its label.
pub fn bucket(volume: u64) -> (&'static str, bool) {
    for (lo, hi, label) in BANDS {
        if volume >= lo && volume < hi {
            return (label, false);
        }
    }
    (BANDS[BANDS.len() - 1].2, true)
}

/// Per-region event volume over `bins` (all bins when `None`) as a GeoJSON collection.
pub fn export_heatmap(
    tess: &Tessellation,
    series: &SeriesMatrix,
    bins: Option<Range<usize>>,
    extra: &Map<String, Value>,
) -> Result<Value> {
    let expected: Vec<usize> = (0..tess.len()).collect();
    if series.region_ids != expected {
        return Err(Error::Data(format!(
            "series has {} region ids that do not match the {} tessellation regions",
            series.region_ids.len(),
            tess.len()
        )));
    }
    let bins = bins.unwrap_or(0..series.n_bins());
    if bins.start > bins.end || bins.end > series.n_bins() {
        return Err(Error::Argument(format!(
            "bin range {bins:?} outside 0..{}",
            series.n_bins()
        )));
    }
    let features: Vec<Value> = tess
        .regions()
        .iter()
        .map(|r| {
            let volume: u64 = series.row(r.id())[bins.clone()].iter().sum();
            let (label, overflow) = bucket(volume);
            json!({
                "type": "Feature",
                "geometry": polygon_geometry(&r.polygon()),
                "properties": {
                    "region_id": r.id(),
                    "volume": volume,
                    "bucket": label,
                    "overflow": overflow,
                },
            })
        })
        .collect();
    let mut root = Map::new();
    root.insert("type".into(), json!("FeatureCollection"));
    root.insert("kind".into(), json!(tess.kind().as_str()));
    root.insert("bins".into(), json!([bins.start, bins.end]));
    for (k, v) in extra {
        root.insert(k.clone(), v.clone());
    }
    root.insert("features".into(), Value::Array(features));
    Ok(Value::Object(root))
}
