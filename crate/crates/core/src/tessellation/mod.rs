//! The two competing spatial partitions: K-Means-seeded clipped Voronoi cells
//! and fixed geohash grid cells, each with first-order adjacency.

pub mod delaunay;
pub mod geohash;
pub mod geojson;
pub mod kmeans;
pub mod voronoi;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoBBox, LatLon, LocalProjection, Point};

pub use kmeans::{kmeans, kmeans_objective, KMeansConfig, KMeansResult};
pub use voronoi::VoronoiDiagram;

/// Insertion-order seed for the Delaunay step. The diagram itself does not depend on it.
const DELAUNAY_SEED: u64 = 0x7e55_e11a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TessellationKind {
    Voronoi,
    Geohash,
}

impl TessellationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TessellationKind::Voronoi => "voronoi",
            TessellationKind::Geohash => "geohash",
        }
    }
}

impl fmt::Display for TessellationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TessellationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "voronoi" => Ok(TessellationKind::Voronoi),
            "geohash" => Ok(TessellationKind::Geohash),
            other => Err(Error::Argument(format!("unknown tessellation kind {other:?}"))),
        }
    }
}

/// A K-Means center, used as a Voronoi site and as the geohash anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub id: usize,
    pub lat: f64,
    pub lon: f64,
}

impl Centroid {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiCell {
    pub region_id: usize,
    pub site: Centroid,
    /// Closed ring of (lat, lon) vertices, counter-clockwise in the projection.
    pub polygon: Vec<LatLon>,
    pub neighbor_ids: BTreeSet<usize>,
    pub area_km2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeohashCell {
    pub region_id: usize,
    pub code: String,
    pub bbox: GeoBBox,
    /// N, NE, E, SE, S, SW, W, NW.
    pub neighbor_codes: [String; 8],
    /// Region id of each neighbor code, `None` when that cell is not part of the tessellation.
    pub neighbor_regions: [Option<usize>; 8],
}

impl GeohashCell {
    pub fn polygon(&self) -> Vec<LatLon> {
        let b = &self.bbox;
        vec![
            LatLon::new(b.min_lat, b.min_lon),
            LatLon::new(b.min_lat, b.max_lon),
            LatLon::new(b.max_lat, b.max_lon),
            LatLon::new(b.max_lat, b.min_lon),
            LatLon::new(b.min_lat, b.min_lon),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Voronoi(VoronoiCell),
    Geohash(GeohashCell),
}

impl Region {
    pub fn id(&self) -> usize {
        match self {
            Region::Voronoi(c) => c.region_id,
            Region::Geohash(c) => c.region_id,
        }
    }

    pub fn polygon(&self) -> Vec<LatLon> {
        match self {
            Region::Voronoi(c) => c.polygon.clone(),
            Region::Geohash(c) => c.polygon(),
        }
    }

    pub fn neighbor_ids(&self) -> BTreeSet<usize> {
        match self {
            Region::Voronoi(c) => c.neighbor_ids.clone(),
            Region::Geohash(c) => c.neighbor_regions.iter().flatten().copied().collect(),
        }
    }
}

#[derive(Debug, Clone)]
enum Locator {
    Voronoi(VoronoiDiagram),
    Geohash { precision: usize, codes: HashMap<String, usize> },
}

/// A partition of the study box into regions with dense ids.
#[derive(Debug, Clone)]
pub struct Tessellation {
    kind: TessellationKind,
    bbox: GeoBBox,
    projection: LocalProjection,
    centroids: Vec<Centroid>,
    regions: Vec<Region>,
    site_index: Vec<usize>,
    locator: Locator,
}

impl Tessellation {
    pub fn kind(&self) -> TessellationKind {
        self.kind
    }

    pub fn bbox(&self) -> GeoBBox {
        self.bbox
    }

    pub fn projection(&self) -> LocalProjection {
        self.projection
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Region of each centroid, indexed by centroid id.
    pub fn site_index(&self) -> &[usize] {
        &self.site_index
    }

    /// Geohash level, for geohash tessellations.
    pub fn precision(&self) -> Option<usize> {
        match &self.locator {
            Locator::Geohash { precision, .. } => Some(*precision),
            Locator::Voronoi(_) => None,
        }
    }

    pub fn region(&self, id: usize) -> Result<&Region> {
        self.regions.get(id).ok_or(Error::UnknownRegion(id))
    }

    /// First-order neighbors of a region (edge-sharing cells, or grid cells present in the set).
    pub fn neighbors(&self, id: usize) -> Result<BTreeSet<usize>> {
        Ok(self.region(id)?.neighbor_ids())
    }

    /// Region containing a point, or `None` when no region covers it.
    pub fn locate(&self, p: LatLon) -> Option<usize> {
        match &self.locator {
            Locator::Voronoi(d) => Some(d.locate(self.projection.project(p))),
            Locator::Geohash { precision, codes } => geohash::encode(p.lat, p.lon, *precision)
                .ok()
                .and_then(|c| codes.get(&c).copied()),
        }
    }

    pub fn diagram(&self) -> Option<&VoronoiDiagram> {
        match &self.locator {
            Locator::Voronoi(d) => Some(d),
            Locator::Geohash { .. } => None,
        }
    }
}

/// Cluster count for a box under the one-cluster-per-km² rule.
pub fn default_k(bbox: &GeoBBox) -> usize {
    (bbox.area_km2().round() as usize).max(1)
}

/// K-Means on geographic points in the box's local projection.
pub fn kmeans_centroids(points: &[LatLon], bbox: &GeoBBox, cfg: &KMeansConfig) -> Result<(Vec<Centroid>, KMeansResult)> {
    let proj = LocalProjection::about(bbox);
    let planar: Vec<Point> = points.iter().map(|p| proj.project(*p)).collect();
    let result = kmeans(&planar, cfg)?;
    let centroids = result
        .centers
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let ll = proj.unproject(*c);
            Centroid { id, lat: ll.lat, lon: ll.lon }
        })
        .collect();
    Ok((centroids, result))
}

fn check_centroid_ids(sites: &[Centroid]) -> Result<()> {
    for (i, c) in sites.iter().enumerate() {
        if c.id != i {
            return Err(Error::Argument(format!("centroid ids must be dense: slot {i} has id {}", c.id)));
        }
        if !c.position().is_valid() {
            return Err(Error::Argument(format!("centroid {i} has invalid coordinates")));
        }
    }
    Ok(())
}

/// Voronoi tessellation of the box with the centroids as sites; region id = centroid id.
pub fn voronoi_tessellate(sites: &[Centroid], bbox: &GeoBBox) -> Result<Tessellation> {
    bbox.validate()?;
    check_centroid_ids(sites)?;
    let projection = LocalProjection::about(bbox);
    let rect = projection.project_bbox(bbox);
    let planar: Vec<Point> = sites.iter().map(|c| projection.project(c.position())).collect();
    let diagram = voronoi::build(&planar, rect, DELAUNAY_SEED)?;
    let regions = diagram
        .cells
        .iter()
        .zip(sites)
        .enumerate()
        .map(|(i, (cell, site))| {
            let mut polygon: Vec<LatLon> = cell.ring.iter().map(|p| projection.unproject(*p)).collect();
            polygon.push(polygon[0]);
            Region::Voronoi(VoronoiCell {
                region_id: i,
                site: *site,
                polygon,
                neighbor_ids: cell.neighbors.clone(),
                area_km2: cell.area(),
            })
        })
        .collect();
    Ok(Tessellation {
        kind: TessellationKind::Voronoi,
        bbox: *bbox,
        projection,
        centroids: sites.to_vec(),
        regions,
        site_index: (0..sites.len()).collect(),
        locator: Locator::Voronoi(diagram),
    })
}

/// Geohash cells of the centroids, deduplicated in first-seen order.
pub fn geohash_tessellate(centroids: &[Centroid], bbox: &GeoBBox, precision: usize) -> Result<Tessellation> {
    bbox.validate()?;
    check_centroid_ids(centroids)?;
    let mut codes: HashMap<String, usize> = HashMap::new();
    let mut ordered: Vec<String> = Vec::new();
    let mut site_index = Vec::with_capacity(centroids.len());
    for c in centroids {
        let code = geohash::encode(c.lat, c.lon, precision)?;
        let id = *codes.entry(code.clone()).or_insert_with(|| {
            ordered.push(code);
            ordered.len() - 1
        });
        site_index.push(id);
    }
    let mut regions = Vec::with_capacity(ordered.len());
    for (region_id, code) in ordered.iter().enumerate() {
        let neighbor_codes = geohash::neighbors(code)?;
        let neighbor_regions = neighbor_codes.clone().map(|n| codes.get(&n).copied());
        regions.push(Region::Geohash(GeohashCell {
            region_id,
            code: code.clone(),
            bbox: geohash::decode(code)?,
            neighbor_codes,
            neighbor_regions,
        }));
    }
    Ok(Tessellation {
        kind: TessellationKind::Geohash,
        bbox: *bbox,
        projection: LocalProjection::about(bbox),
        centroids: centroids.to_vec(),
        regions,
        site_index,
        locator: Locator::Geohash { precision, codes },
    })
}

/// Neighbors of a Voronoi region; errors on other kinds or unknown ids.
pub fn voronoi_neighbors(tess: &Tessellation, region_id: usize) -> Result<BTreeSet<usize>> {
    if tess.kind() != TessellationKind::Voronoi {
        return Err(Error::Argument("voronoi_neighbors called on a geohash tessellation".into()));
    }
    tess.neighbors(region_id)
}

/// Builds either kind from the same centroids.
pub fn tessellate(kind: TessellationKind, centroids: &[Centroid], bbox: &GeoBBox, precision: usize) -> Result<Tessellation> {
    match kind {
        TessellationKind::Voronoi => voronoi_tessellate(centroids, bbox),
        TessellationKind::Geohash => geohash_tessellate(centroids, bbox, precision),
    }
}
