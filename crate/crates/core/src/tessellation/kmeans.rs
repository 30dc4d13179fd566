//! Lloyd's K-Means in the planar projection with farthest-first seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    /// Stop once the relative decrease of the objective falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            tol: 1e-6,
            max_iter: 300,
        }
    }
}

/// An empty cluster that was moved onto a far point during iteration `iteration`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reseed {
    pub iteration: usize,
    pub cluster: usize,
    pub point: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centers: Vec<Point>,
    pub assignment: Vec<usize>,
    /// Objective after each assignment step; the last entry belongs to `centers`.
    pub objective_history: Vec<f64>,
    pub reseeds: Vec<Reseed>,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("at least one assignment step")
    }
}

/// Nearest center, ties going to the lowest index.
pub fn nearest(centers: &[Point], p: &Point) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = c.dist2(p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Σ over points of squared distance to the nearest center.
pub fn kmeans_objective(points: &[Point], centers: &[Point]) -> Result<f64> {
    if points.is_empty() || centers.is_empty() {
        return Err(Error::Argument("objective needs points and centers".into()));
    }
    Ok(points.iter().map(|p| nearest(centers, p).1).sum())
}

pub fn count_distinct(points: &[Point]) -> usize {
    let mut keys: Vec<(u64, u64)> = points
        .iter()
        .map(|p| ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn farthest_first(points: &[Point], k: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut centers = vec![points[first]];
    let mut min_d: Vec<f64> = points.iter().map(|p| p.dist2(&points[first])).collect();
    while centers.len() < k {
        let mut best = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[best] {
                best = i;
            }
        }
        let c = points[best];
        centers.push(c);
        min_d
            .par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(p.dist2(&c)));
    }
    centers
}

fn assign(points: &[Point], centers: &[Point]) -> (Vec<usize>, Vec<f64>) {
    points.par_iter().map(|p| nearest(centers, p)).unzip()
}

pub fn kmeans(points: &[Point], cfg: &KMeansConfig) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::Argument("k-means needs at least one point".into()));
    }
    if cfg.k == 0 {
        return Err(Error::Argument("k must be positive".into()));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::Argument("tolerance must be non-negative".into()));
    }
    let distinct = count_distinct(points);
    if cfg.k > distinct {
        return Err(Error::Argument(format!(
            "k = {} exceeds the {distinct} distinct points",
            cfg.k
        )));
    }

    let k = cfg.k;
    let mut centers = farthest_first(points, k, cfg.seed);
    let mut history = Vec::new();
    let mut reseeds = Vec::new();
    let mut prev_assignment: Option<Vec<usize>> = None;
    let max_iter = cfg.max_iter.max(1);

    for iteration in 0..max_iter {
        let (assignment, dists) = assign(points, &centers);
        let j: f64 = dists.iter().sum();
        if let Some(&prev_j) = history.last() {
            let stalled = prev_assignment.as_ref() == Some(&assignment);
            let rel = if prev_j > 0.0 { (prev_j - j) / prev_j } else { 0.0 };
            if stalled || rel < cfg.tol {
                history.push(j);
                return Ok(KMeansResult {
                    centers,
                    assignment,
                    objective_history: history,
                    reseeds,
                });
            }
        }
        history.push(j);

        let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
        for (p, &a) in points.iter().zip(&assignment) {
            let s = &mut sums[a];
            s.0 += p.x;
            s.1 += p.y;
            s.2 += 1;
        }
        let mut next: Vec<Option<Point>> = sums
            .iter()
            .map(|&(sx, sy, n)| (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64)))
            .collect();
        let empties: Vec<usize> = (0..k).filter(|&c| next[c].is_none()).collect();
        if !empties.is_empty() {
            // distance of each point to its own (updated) center
            let mut far: Vec<(f64, usize)> = points
                .iter()
                .zip(&assignment)
                .enumerate()
                .map(|(i, (p, &a))| (next[a].map_or(0.0, |c| c.dist2(p)), i))
                .collect();
            far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (slot, &cluster) in empties.iter().enumerate() {
                let point = far[slot].1;
                next[cluster] = Some(points[point]);
                reseeds.push(Reseed {
                    iteration,
                    cluster,
                    point,
                });
            }
        }
        centers = next.into_iter().map(|c| c.expect("filled")).collect();
        prev_assignment = Some(assignment);
    }

    let (assignment, dists) = assign(points, &centers);
    history.push(dists.iter().sum());
    Ok(KMeansResult {
        centers,
        assignment,
        objective_history: history,
        reseeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(2.0, 6.0),
            Point::new(2.0, 2.0),
        ];
        let r = kmeans(&pts, &KMeansConfig::new(1, 3)).unwrap();
        assert!((r.centers[0].x - 2.0).abs() < 1e-12);
        assert!((r.centers[0].y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_recovers_points() {
        let pts: Vec<Point> = (0..7).map(|i| Point::new(i as f64, (i * i) as f64)).collect();
        let r = kmeans(&pts, &KMeansConfig::new(7, 11)).unwrap();
        assert_eq!(r.objective(), 0.0);
        let mut got = r.centers.clone();
        got.sort_by(|a, b| a.x.total_cmp(&b.x));
        assert_eq!(got, pts);
    }

    #[test]
    fn too_many_clusters_is_fatal() {
        let pts = vec![Point::new(1.0, 1.0), Point::new(1.0, 1.0), Point::new(2.0, 1.0)];
        assert!(kmeans(&pts, &KMeansConfig::new(3, 0)).is_err());
        assert!(kmeans(&[], &KMeansConfig::new(1, 0)).is_err());
    }

    #[test]
    fn objective_single_term() {
        let j = kmeans_objective(&[Point::new(3.0, 0.0)], &[Point::new(0.0, 0.0), Point::new(10.0, 0.0)]).unwrap();
        assert_eq!(j, 9.0);
        let same = kmeans_objective(&[Point::new(1.0, 2.0)], &[Point::new(1.0, 2.0)]).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let pts: Vec<Point> = (0..200)
            .map(|i| Point::new(((i * 37) % 101) as f64 * 0.1, ((i * 53) % 97) as f64 * 0.1))
            .collect();
        let a = kmeans(&pts, &KMeansConfig::new(9, 42)).unwrap();
        let b = kmeans(&pts, &KMeansConfig::new(9, 42)).unwrap();
        assert_eq!(a, b);
    }
}
