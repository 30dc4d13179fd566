//! Planar Voronoi diagrams clipped to a rectangle.
//!
//! Each cell starts as the clip rectangle and is cut by the bisector
//! half-planes of its Delaunay neighbors. Cut edges remember which neighbor
//! produced them, so edge adjacency falls out of the clipping.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geo::{convex_contains, signed_area, Point, Rect};

use super::delaunay::Triangulation;

/// Edges shorter than this fraction of the box diagonal are treated as vertices.
const EDGE_EPS_REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarCell {
    pub site: Point,
    /// Counter-clockwise, not closed.
    pub ring: Vec<Point>,
    pub neighbors: BTreeSet<usize>,
}

impl PlanarCell {
    pub fn area(&self) -> f64 {
        signed_area(&self.ring)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiDiagram {
    pub rect: Rect,
    pub cells: Vec<PlanarCell>,
    locator: SiteLocator,
}

/// Ring vertex plus the neighbor id that generated the edge leaving it
/// (`None` for the clip rectangle).
#[derive(Debug, Clone, Copy)]
struct Vertex {
    p: Point,
    label: Option<usize>,
}

fn clip(ring: &[Vertex], site: Point, other: Point, other_id: usize) -> Vec<Vertex> {
    let n = Point::new(other.x - site.x, other.y - site.y);
    let m = Point::new(0.5 * (site.x + other.x), 0.5 * (site.y + other.y));
    let side = |p: Point| n.x * (p.x - m.x) + n.y * (p.y - m.y);
    let mut out = Vec::with_capacity(ring.len() + 1);
    for k in 0..ring.len() {
        let a = ring[k];
        let b = ring[(k + 1) % ring.len()];
        let (da, db) = (side(a.p), side(b.p));
        let cross = |t: f64| Point::new(a.p.x + t * (b.p.x - a.p.x), a.p.y + t * (b.p.y - a.p.y));
        if da <= 0.0 {
            if db <= 0.0 {
                out.push(a);
            } else {
                out.push(a);
                out.push(Vertex {
                    p: cross(da / (da - db)),
                    label: Some(other_id),
                });
            }
        } else if db <= 0.0 {
            out.push(Vertex {
                p: cross(da / (da - db)),
                label: a.label,
            });
        }
    }
    out
}

fn drop_short_edges(ring: &mut Vec<Vertex>, eps: f64) {
    let eps2 = eps * eps;
    let mut k = 0;
    while ring.len() > 3 && k < ring.len() {
        let next = (k + 1) % ring.len();
        if ring[k].p.dist2(&ring[next].p) <= eps2 {
            ring[k].label = ring[next].label;
            ring.remove(next);
            if next < k {
                k -= 1;
            }
        } else {
            k += 1;
        }
    }
}

/// Builds the diagram of distinct sites inside `rect`, boundary included.
pub fn build(sites: &[Point], rect: Rect, seed: u64) -> Result<VoronoiDiagram> {
    if sites.is_empty() {
        return Err(Error::Argument("Voronoi diagram needs at least one site".into()));
    }
    if !(rect.width() > 0.0 && rect.height() > 0.0) {
        return Err(Error::Argument("degenerate clip rectangle".into()));
    }
    for (i, s) in sites.iter().enumerate() {
        if !rect.contains(*s) {
            return Err(Error::SiteOutsideBox { site: i });
        }
    }
    check_distinct(sites)?;

    let tri = Triangulation::build(sites, (rect.min, rect.max), seed);
    let adjacency = tri.adjacency();
    let eps = EDGE_EPS_REL * rect.diagonal();

    let mut rings = Vec::with_capacity(sites.len());
    for (i, site) in sites.iter().enumerate() {
        let mut ring: Vec<Vertex> = rect.ring().into_iter().map(|p| Vertex { p, label: None }).collect();
        for &j in &adjacency[i] {
            ring = clip(&ring, *site, sites[j], j);
        }
        drop_short_edges(&mut ring, eps);
        rings.push(ring);
    }

    // longest observed edge per unordered pair, from either side
    let mut shared: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, ring) in rings.iter().enumerate() {
        for k in 0..ring.len() {
            if let Some(j) = ring[k].label {
                let len = ring[k].p.dist2(&ring[(k + 1) % ring.len()].p).sqrt();
                let e = shared.entry((i.min(j), i.max(j))).or_insert(0.0);
                *e = e.max(len);
            }
        }
    }
    let mut cells: Vec<PlanarCell> = sites
        .iter()
        .zip(rings)
        .map(|(site, ring)| PlanarCell {
            site: *site,
            ring: ring.into_iter().map(|v| v.p).collect(),
            neighbors: BTreeSet::new(),
        })
        .collect();
    for (&(i, j), &len) in &shared {
        if len > eps {
            cells[i].neighbors.insert(j);
            cells[j].neighbors.insert(i);
        }
    }

    Ok(VoronoiDiagram {
        rect,
        cells,
        locator: SiteLocator::new(sites, rect),
    })
}

fn check_distinct(sites: &[Point]) -> Result<()> {
    let mut keyed: Vec<((u64, u64), usize)> = sites
        .iter()
        .enumerate()
        .map(|(i, p)| (((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits()), i))
        .collect();
    keyed.sort_unstable();
    let mut dup: Option<(usize, usize)> = None;
    for w in keyed.windows(2) {
        if w[0].0 == w[1].0 {
            let pair = (w[0].1, w[1].1);
            if dup.is_none_or(|d| pair < d) {
                dup = Some(pair);
            }
        }
    }
    match dup {
        Some((first, second)) => Err(Error::DuplicateSites { first, second }),
        None => Ok(()),
    }
}

impl VoronoiDiagram {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell containing `p`: its nearest site, ties to the lowest id.
    pub fn locate(&self, p: Point) -> usize {
        self.locator.nearest(p)
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(PlanarCell::area).sum()
    }

    /// Whether `p` lies in the polygon of cell `i` (boundary inclusive).
    pub fn cell_contains(&self, i: usize, p: Point) -> bool {
        let eps = 1e-12 * self.rect.diagonal() * self.rect.diagonal();
        convex_contains(&self.cells[i].ring, p, eps)
    }
}

/// Uniform bucket grid over the sites for nearest-site queries.
#[derive(Debug, Clone, PartialEq)]
struct SiteLocator {
    sites: Vec<Point>,
    origin: Point,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl SiteLocator {
    fn new(sites: &[Point], rect: Rect) -> Self {
        let n = sites.len().max(1) as f64;
        let cell = (rect.area() / n).sqrt().max(1e-12);
        let cols = ((rect.width() / cell).ceil() as usize).clamp(1, 4096);
        let rows = ((rect.height() / cell).ceil() as usize).clamp(1, 4096);
        let cell = (rect.width() / cols as f64).max(rect.height() / rows as f64);
        let mut loc = SiteLocator {
            sites: sites.to_vec(),
            origin: rect.min,
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        };
        for (i, s) in sites.iter().enumerate() {
            let (c, r) = loc.bucket_of(*s);
            loc.buckets[r * cols + c].push(i);
        }
        loc
    }

    fn bucket_of(&self, p: Point) -> (usize, usize) {
        let c = ((p.x - self.origin.x) / self.cell).floor().clamp(0.0, (self.cols - 1) as f64);
        let r = ((p.y - self.origin.y) / self.cell).floor().clamp(0.0, (self.rows - 1) as f64);
        (c as usize, r as usize)
    }

    fn brute(&self, p: Point) -> usize {
        super::kmeans::nearest(&self.sites, &p).0
    }

    fn nearest(&self, p: Point) -> usize {
        let width = self.cols as f64 * self.cell;
        let height = self.rows as f64 * self.cell;
        let inside = p.x >= self.origin.x
            && p.y >= self.origin.y
            && p.x <= self.origin.x + width
            && p.y <= self.origin.y + height;
        if !inside {
            return self.brute(p);
        }
        let (pc, pr) = self.bucket_of(p);
        let mut best: Option<(f64, usize)> = None;
        let max_ring = self.cols.max(self.rows);
        for ring in 0..=max_ring {
            let r = ring as isize;
            for dr in -r..=r {
                for dc in -r..=r {
                    if dr.abs() != r && dc.abs() != r {
                        continue;
                    }
                    let (c, rr) = (pc as isize + dc, pr as isize + dr);
                    if c < 0 || rr < 0 || c >= self.cols as isize || rr >= self.rows as isize {
                        continue;
                    }
                    for &i in &self.buckets[rr as usize * self.cols + c as usize] {
                        let d = self.sites[i].dist2(&p);
                        let better = match best {
                            None => true,
                            Some((bd, bi)) => d < bd || (d == bd && i < bi),
                        };
                        if better {
                            best = Some((d, i));
                        }
                    }
                }
            }
            // anything in rings beyond `ring` is at least ring·cell away
            if let Some((bd, _)) = best {
                let reach = ring as f64 * self.cell;
                if bd < reach * reach {
                    break;
                }
            }
        }
        best.map(|b| b.1).expect("at least one site")
    }
}
