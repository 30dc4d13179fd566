use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tesscast::features::*;
use tesscast::geo::GeoBBox;
use tesscast::ingest::{EventSet, GpsEvent, TimeWindow};
use tesscast::synthetic::{lead_lag_city, CityConfig};
use tesscast::tessellation::kmeans::KMeansConfig;
use tesscast::tessellation::{geohash, geohash_tessellate, kmeans_centroids, voronoi_tessellate, Centroid, Region};

fn t0() -> DateTime<Utc> {
    DateTime::from_timestamp(1_451_606_400, 0).unwrap()
}

fn sites() -> (Vec<Centroid>, GeoBBox) {
    let bbox = GeoBBox::new(12.90, 77.50, 13.00, 77.62).unwrap();
    let pts = [(12.91, 77.51), (12.95, 77.55), (12.99, 77.52), (12.93, 77.60), (12.98, 77.61)];
    let cs = pts.iter().enumerate().map(|(id, &(lat, lon))| Centroid { id, lat, lon }).collect();
    (cs, bbox)
}

fn naive_pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma).powi(2);
        vb += (b[i] - mb).powi(2);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

#[test]
fn aggregation_matches_per_event_oracle() {
    let (cs, bbox) = sites();
    let tess = voronoi_tessellate(&cs, &bbox).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let events: Vec<GpsEvent> = (0..1000)
        .map(|_| GpsEvent {
            lat: rng.random_range(bbox.min_lat..bbox.max_lat),
            lon: rng.random_range(bbox.min_lon..bbox.max_lon),
            timestamp: t0() + Duration::seconds(rng.random_range(0..6 * 3600)),
        })
        .collect();
    let set = EventSet::from_events(events.clone()).unwrap();
    let window = TimeWindow::new(t0(), t0() + Duration::hours(6)).unwrap();
    let agg = aggregate(&set, &tess, Duration::hours(1), window).unwrap();

    let proj = tess.projection();
    let planar: Vec<_> = cs.iter().map(|c| proj.project(c.position())).collect();
    let mut oracle = vec![vec![0u64; 6]; 5];
    for e in &events {
        let p = proj.project(e.position());
        let (mut best, mut bd) = (0, f64::INFINITY);
        for (i, s) in planar.iter().enumerate() {
            let d = s.dist2(&p);
            if d < bd {
                best = i;
                bd = d;
            }
        }
        oracle[best][((e.timestamp - t0()).num_seconds() / 3600) as usize] += 1;
    }
    for (r, row) in oracle.iter().enumerate() {
        assert_eq!(agg.series.row(r), row.as_slice());
    }
    assert_eq!(agg.series.total() as usize + agg.unassigned + agg.outside_window, set.len());
}

#[test]
fn bins_are_half_open() {
    let (cs, bbox) = sites();
    let tess = voronoi_tessellate(&cs, &bbox).unwrap();
    let e = GpsEvent {
        lat: 12.95,
        lon: 77.55,
        timestamp: t0() + Duration::minutes(60),
    };
    let set = EventSet::from_events(vec![e]).unwrap();
    let window = TimeWindow::new(t0(), t0() + Duration::hours(3)).unwrap();
    let agg = aggregate(&set, &tess, Duration::hours(1), window).unwrap();
    assert_eq!(agg.series.row(1), &[0, 1, 0]);
    let empty = aggregate(&EventSet::empty(), &tess, Duration::hours(1), window).unwrap();
    assert_eq!(empty.series.total(), 0);
}

#[test]
fn geohash_neighbors_share_an_edge() {
    let (cs, bbox) = sites();
    let city = lead_lag_city(&CityConfig {
        days: 1,
        ..CityConfig::default()
    })
    .unwrap();
    let hot: Vec<Centroid> = city
        .hotspots
        .iter()
        .enumerate()
        .map(|(id, h)| Centroid { id, lat: h.lat, lon: h.lon })
        .collect();
    for tess in [geohash_tessellate(&cs, &bbox, 6).unwrap(), geohash_tessellate(&hot, &city.bbox, 6).unwrap()] {
        for region in tess.regions() {
            let Region::Geohash(cell) = region else { unreachable!() };
            for j in region.neighbor_ids() {
                let Region::Geohash(other) = &tess.regions()[j] else { unreachable!() };
                let (a, b) = (cell.bbox, geohash::decode(&other.code).unwrap());
                let touch_lat = (a.max_lat - b.min_lat).abs() < 1e-12 || (b.max_lat - a.min_lat).abs() < 1e-12;
                let touch_lon = (a.max_lon - b.min_lon).abs() < 1e-12 || (b.max_lon - a.min_lon).abs() < 1e-12;
                let overlap_lat = a.min_lat < b.max_lat && b.min_lat < a.max_lat;
                let overlap_lon = a.min_lon < b.max_lon && b.min_lon < a.max_lon;
                // edge-sharing, or corner-sharing for the diagonal directions
                assert!((touch_lat && (overlap_lon || touch_lon)) || (touch_lon && overlap_lat));
            }
        }
    }
}

fn twenty_region_city() -> (SeriesMatrix, tesscast::Tessellation, SplitSpec) {
    let city = lead_lag_city(&CityConfig {
        cols: 5,
        rows: 4,
        days: 5,
        seed: 3,
        ..CityConfig::default()
    })
    .unwrap();
    let (cs, _) = kmeans_centroids(&city.events.positions(), &city.bbox, &KMeansConfig::new(20, 1)).unwrap();
    let tess = voronoi_tessellate(&cs, &city.bbox).unwrap();
    let agg = aggregate(&city.events, &tess, Duration::hours(1), city.window).unwrap();
    let split = SplitSpec::daily(agg.series.n_bins()).unwrap();
    (agg.series, tess, split)
}

#[test]
fn ranking_matches_exhaustive_sort() {
    let (series, tess, split) = twenty_region_city();
    let map = rank_all(&series, &tess, 8, &split).unwrap();
    let fit = split.training_bins();
    for r in 0..series.n_regions() {
        let own = &series.row_f64(r)[fit.clone()];
        let mut scored: Vec<(f64, usize)> = (0..series.n_regions())
            .filter(|&j| j != r && tess.neighbors(r).unwrap().contains(&j))
            .filter_map(|j| naive_pearson(own, &series.row_f64(j)[fit.clone()]).map(|c| (c, j)))
            .filter(|(c, _)| *c > 0.0)
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut expected: Vec<Option<usize>> = scored.iter().take(8).map(|s| Some(s.1)).collect();
        expected.resize(8, None);
        assert_eq!(map.rows[r].neighbors, expected, "region {r}");
        for (c, (want, _)) in map.rows[r].correlations.iter().zip(&scored) {
            assert!((c.unwrap() - want).abs() < 1e-9);
        }
    }
}

#[test]
fn test_day_cannot_leak() {
    let (series, tess, split) = twenty_region_city();
    let mut rows: Vec<Vec<u64>> = (0..series.n_regions()).map(|r| series.row(r).to_vec()).collect();
    for row in &mut rows {
        for v in &mut row[split.val_end..] {
            *v = *v * 7 + 3;
        }
    }
    let altered = SeriesMatrix::new(series.region_ids.clone(), series.t0, series.bin_width(), rows).unwrap();
    let a = rank_all(&series, &tess, 8, &split).unwrap();
    let b = rank_all(&altered, &tess, 8, &split).unwrap();
    assert_eq!(a, b);
    let ta = build_tensor(&series.rows_f64(), &a, 8, &split).unwrap();
    let tb = build_tensor(&altered.rows_f64(), &b, 8, &split).unwrap();
    assert_eq!(ta.norms, tb.norms);
}

fn handmade_map(n: usize, neighbors: &[Vec<Option<usize>>]) -> NeighborMap {
    NeighborMap {
        k: 2,
        rows: (0..n)
            .map(|r| NeighborRow {
                neighbors: neighbors[r].clone(),
                correlations: neighbors[r].iter().map(|x| x.map(|_| 0.5)).collect(),
            })
            .collect(),
    }
}

#[test]
fn tensor_permutes_with_regions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..60).map(|_| rng.random_range(0.0..50.0)).collect()).collect();
    let nb = vec![vec![Some(1), Some(2)], vec![Some(0), None], vec![None, None]];
    let split = SplitSpec::daily(60).unwrap();
    let t = build_tensor(&rows, &handmade_map(3, &nb), 2, &split).unwrap();
    // new order: old 2, old 0, old 1
    let perm = [2usize, 0, 1];
    let inv = |old: usize| perm.iter().position(|&p| p == old).unwrap();
    let prow: Vec<Vec<f64>> = perm.iter().map(|&o| rows[o].clone()).collect();
    let pnb: Vec<Vec<Option<usize>>> = perm.iter().map(|&o| nb[o].iter().map(|x| x.map(inv)).collect()).collect();
    let tp = build_tensor(&prow, &handmade_map(3, &pnb), 2, &split).unwrap();
    for (new, &old) in perm.iter().enumerate() {
        assert_eq!(tp.window(new, 60, 60), t.window(old, 60, 60));
        assert_eq!(tp.pad_mask[new], t.pad_mask[old]);
    }
    assert!(t.window(2, 60, 60).chunks(3).all(|c| c[1] == 0.0 && c[2] == 0.0));
    let k0 = build_tensor(&rows, &handmade_map(3, &nb), 0, &split).unwrap();
    assert_eq!(k0.n_features, 1);
    assert_eq!(k0.label(1, 10), k0.norms[1].normalize(rows[1][10]));
}

#[test]
fn normalization_round_trip_and_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let xs: Vec<f64> = (0..100).map(|_| rng.random_range(-1e3..1e3)).collect();
        let n = Normalization::fit(&xs);
        for &x in &xs {
            let v = n.normalize(x);
            assert!((0.0..=1.0).contains(&v));
            assert!((n.denormalize(v) - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn window_counts_closed_form() {
    let n = 740;
    let rows = vec![vec![0.0; 1440]; n];
    let split = SplitSpec::daily(1440).unwrap();
    assert_eq!((split.train_end, split.val_end), (1274, 1416));
    let map = NeighborMap {
        k: 0,
        rows: vec![NeighborRow::default(); n],
    };
    let t = build_tensor(&rows, &map, 0, &split).unwrap();
    let w = make_windows(&t, &split, 24).unwrap();
    assert_eq!(w.train.len(), n * (1274 - 24));
    assert_eq!(w.validation.len(), n * 142);
    assert_eq!(w.test.len(), n * 24);

    let small = build_tensor(&[vec![1.0; 10]], &NeighborMap { k: 0, rows: vec![NeighborRow::default()] }, 0, &SplitSpec { total_bins: 10, train_end: 10, val_end: 10 }).unwrap();
    let ws = make_windows(&small, &SplitSpec { total_bins: 10, train_end: 10, val_end: 10 }, 3).unwrap();
    assert_eq!(ws.train.iter().map(|s| s.target).collect::<Vec<_>>(), (3..10).collect::<Vec<_>>());
}

#[test]
fn series_csv_round_trip() {
    let (series, _, _) = twenty_region_city();
    let mut buf = Vec::new();
    series.write_csv(&mut buf).unwrap();
    let back = SeriesMatrix::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, series);
}
