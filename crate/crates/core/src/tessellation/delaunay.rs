//! Bowyer–Watson Delaunay triangulation with randomized insertion order.
//!
//! Orientation and in-circle tests use adaptive exact predicates, so the
//! cavity of every insertion is star-shaped even for cocircular inputs.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust::{incircle, orient2d, Coord};

use crate::geo::Point;

/// Super-triangle vertices sit this many extents away from the input, far enough
/// that none of them is ever the nearest vertex to a point of the input's box.
const SUPER_SCALE: f64 = 100.0;

fn coord(p: Point) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    /// Input points followed by the three super vertices.
    points: Vec<Point>,
    n_real: usize,
    /// Counter-clockwise vertex triples.
    triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    /// Triangulates distinct points; `extent` must cover every point.
    pub fn build(sites: &[Point], extent: (Point, Point), seed: u64) -> Self {
        let (lo, hi) = extent;
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
        let cx = 0.5 * (lo.x + hi.x);
        let cy = 0.5 * (lo.y + hi.y);
        let r = SUPER_SCALE * span;
        let mut points = sites.to_vec();
        let n_real = points.len();
        points.push(Point::new(cx - r, cy - r));
        points.push(Point::new(cx + r, cy - r));
        points.push(Point::new(cx, cy + r));
        let mut tri = Triangulation {
            points,
            n_real,
            triangles: vec![[n_real, n_real + 1, n_real + 2]],
        };

        let mut order: Vec<usize> = (0..n_real).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for i in order {
            tri.insert(i);
        }
        tri
    }

    fn insert(&mut self, idx: usize) {
        let p = coord(self.points[idx]);
        let mut bad = Vec::new();
        let mut keep = Vec::with_capacity(self.triangles.len() + 2);
        for t in self.triangles.drain(..) {
            let [a, b, c] = t.map(|v| coord(self.points[v]));
            if incircle(a, b, c, p) > 0.0 {
                bad.push(t);
            } else {
                keep.push(t);
            }
        }
        // cavity boundary = directed edges of bad triangles whose reverse is not also bad
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &bad {
            for k in 0..3 {
                let (u, v) = (t[k], t[(k + 1) % 3]);
                *edge_count.entry((u.min(v), u.max(v))).or_default() += 1;
            }
        }
        for t in &bad {
            for k in 0..3 {
                let (u, v) = (t[k], t[(k + 1) % 3]);
                if edge_count[&(u.min(v), u.max(v))] == 1 {
                    debug_assert!(
                        orient2d(coord(self.points[u]), coord(self.points[v]), p) > 0.0,
                        "cavity not star-shaped"
                    );
                    keep.push([u, v, idx]);
                }
            }
        }
        self.triangles = keep;
    }

    /// Triangles with only real vertices.
    pub fn triangles(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.triangles
            .iter()
            .copied()
            .filter(|t| t.iter().all(|&v| v < self.n_real))
    }

    /// Undirected edges between real vertices, as `(low, high)` pairs.
    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (u, v) = (t[k], t[(k + 1) % 3]);
                if u < self.n_real && v < self.n_real {
                    out.insert((u.min(v), u.max(v)));
                }
            }
        }
        out
    }

    /// Adjacency lists of real vertices.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_real];
        for (u, v) in self.edges() {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extent(pts: &[Point]) -> (Point, Point) {
        let mut lo = Point::new(f64::MAX, f64::MAX);
        let mut hi = Point::new(f64::MIN, f64::MIN);
        for p in pts {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    #[test]
    fn square_has_five_edges() {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let t = Triangulation::build(&pts, extent(&pts), 1);
        let e = t.edges();
        // 4 sides plus one of the two (cocircular) diagonals
        assert_eq!(e.len(), 5);
        assert_eq!(t.triangles().count(), 2);
    }

    #[test]
    fn empty_circumcircles() {
        let pts: Vec<Point> = (0..60)
            .map(|i| {
                let a = i as f64 * 2.399963;
                let r = (i as f64).sqrt();
                Point::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let t = Triangulation::build(&pts, extent(&pts), 9);
        for tri in t.triangles() {
            let [a, b, c] = tri.map(|v| coord(pts[v]));
            for (i, p) in pts.iter().enumerate() {
                if !tri.contains(&i) {
                    assert!(incircle(a, b, c, coord(*p)) <= 0.0);
                }
            }
        }
    }

    #[test]
    fn collinear_points_chain() {
        let pts: Vec<Point> = (0..5).map(|i| Point::new(i as f64, 0.0)).collect();
        let t = Triangulation::build(&pts, extent(&pts), 2);
        let e: Vec<_> = t.edges().into_iter().collect();
        assert_eq!(e, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    }
}
