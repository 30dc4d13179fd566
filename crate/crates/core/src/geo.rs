//! Geographic primitives and the local planar projection used by all geometry.
//!
//! Every distance, area and Voronoi construction runs in an equirectangular
//! projection about the centre of the study box, scaled to kilometres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Latitude/longitude rectangle, inclusive on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl GeoBBox {
    pub const WORLD: GeoBBox = GeoBBox {
        min_lat: -90.0,
        min_lon: -180.0,
        max_lat: 90.0,
        max_lon: 180.0,
    };

    /// Builds a box, rejecting inverted or degenerate extents.
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self> {
        let b = Self {
            min_lat,
            min_lon,
            max_lat,
            max_lon,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.min_lat, self.min_lon, self.max_lat, self.max_lon]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.min_lat >= self.max_lat || self.min_lon >= self.max_lon {
            return Err(Error::Argument(format!(
                "degenerate or inverted bbox {},{},{},{}",
                self.min_lat, self.min_lon, self.max_lat, self.max_lon
            )));
        }
        if self.min_lat < -90.0 || self.max_lat > 90.0 || self.min_lon < -180.0 || self.max_lon > 180.0 {
            return Err(Error::Argument("bbox outside valid coordinate ranges".into()));
        }
        Ok(())
    }

    /// Parses `minLat,minLon,maxLat,maxLon`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Argument(format!("bad bbox {s:?}: {e}")))?;
        if parts.len() != 4 {
            return Err(Error::Argument(format!("bbox needs 4 numbers, got {s:?}")));
        }
        Self::new(parts[0], parts[1], parts[2], parts[3])
    }

    pub fn contains(&self, p: LatLon) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn center(&self) -> LatLon {
        LatLon::new(
            0.5 * (self.min_lat + self.max_lat),
            0.5 * (self.min_lon + self.max_lon),
        )
    }

    /// Area in km² under the box's own local projection.
    pub fn area_km2(&self) -> f64 {
        LocalProjection::about(self).project_bbox(self).area()
    }
}

/// Planar point in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Axis-aligned planar rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: Point::new(min_x, min_y),
            max: Point::new(max_x, max_y),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Counter-clockwise corner ring, not closed.
    pub fn ring(&self) -> Vec<Point> {
        vec![
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ]
    }

    pub fn diagonal(&self) -> f64 {
        self.min.dist2(&self.max).sqrt()
    }
}

/// Equirectangular projection about a reference point: `x = Δlon·cos(lat₀)`,
/// `y = Δlat`, both converted to kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalProjection {
    pub origin: LatLon,
    km_per_deg_lat: f64,
    km_per_deg_lon: f64,
}

impl LocalProjection {
    pub fn new(origin: LatLon) -> Self {
        let km_per_deg = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        Self {
            origin,
            km_per_deg_lat: km_per_deg,
            km_per_deg_lon: km_per_deg * origin.lat.to_radians().cos(),
        }
    }

    pub fn about(bbox: &GeoBBox) -> Self {
        Self::new(bbox.center())
    }

    pub fn project(&self, p: LatLon) -> Point {
        Point::new(
            (p.lon - self.origin.lon) * self.km_per_deg_lon,
            (p.lat - self.origin.lat) * self.km_per_deg_lat,
        )
    }

    pub fn unproject(&self, p: Point) -> LatLon {
        LatLon::new(
            self.origin.lat + p.y / self.km_per_deg_lat,
            self.origin.lon + p.x / self.km_per_deg_lon,
        )
    }

    pub fn project_bbox(&self, b: &GeoBBox) -> Rect {
        let lo = self.project(LatLon::new(b.min_lat, b.min_lon));
        let hi = self.project(LatLon::new(b.max_lat, b.max_lon));
        Rect { min: lo, max: hi }
    }
}

/// Great-circle distance in kilometres (haversine).
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// Containment test for a counter-clockwise convex ring, boundary inclusive
/// up to `eps` (in the units of the cross product).
pub fn convex_contains(ring: &[Point], p: Point, eps: f64) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= -eps
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_round_trip() {
        let proj = LocalProjection::new(LatLon::new(12.97, 77.59));
        let p = LatLon::new(13.01, 77.51);
        let back = proj.unproject(proj.project(p));
        assert!((back.lat - p.lat).abs() < 1e-12);
        assert!((back.lon - p.lon).abs() < 1e-12);
    }

    #[test]
    fn bbox_parse_and_reject() {
        let b = GeoBBox::parse("12.8,77.4,13.1,77.8").unwrap();
        assert_eq!(b.min_lon, 77.4);
        assert!(GeoBBox::parse("13.1,77.4,12.8,77.8").is_err());
        assert!(GeoBBox::parse("1,2,3").is_err());
    }

    #[test]
    fn haversine_one_degree_latitude() {
        let d = haversine_km(LatLon::new(0.0, 0.0), LatLon::new(1.0, 0.0));
        assert!((d - 111.195).abs() < 1e-2);
    }

    #[test]
    fn shoelace_and_containment() {
        let r = Rect::new(0.0, 0.0, 2.0, 3.0).ring();
        assert_eq!(signed_area(&r), 6.0);
        assert!(convex_contains(&r, Point::new(1.0, 1.0), 0.0));
        assert!(convex_contains(&r, Point::new(2.0, 1.0), 0.0));
        assert!(!convex_contains(&r, Point::new(2.1, 1.0), 0.0));
    }
}
