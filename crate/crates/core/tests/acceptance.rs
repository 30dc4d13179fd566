//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration as Elapsed, Instant};

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tesscast::experiment::{run_experiment, write_artifacts};
use tesscast::features::*;
use tesscast::forecaster::*;
use tesscast::geo::{haversine_km, LatLon, Point, Rect};
use tesscast::hyperopt::*;
use tesscast::metrics::*;
use tesscast::synthetic::*;
use tesscast::tessellation::geohash::{decode, encode};
use tesscast::tessellation::kmeans::{kmeans, KMeansConfig};
use tesscast::tessellation::{kmeans_centroids, tessellate, voronoi};
use tesscast::{ExperimentConfig, Schema, TessellationKind};

enum Verdict {
    Pass(String),
    Fail(String),
    Skipped(String),
}

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn metric_fidelity() -> Verdict {
    let forty = smape(&[3.0], &[1.0]).unwrap();
    let ok = forty == 40.0
        && close(smape(&[2.0, 5.0], &[2.0, 5.0]).unwrap(), 0.0)
        && close(smape(&[0.0, 10.0], &[2.0, 6.0]).unwrap(), 50.0 * (2.0 / 3.0 + 4.0 / 17.0))
        && close(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt())
        && close(rmse(&[1.0, 2.0, 3.0], &[3.5, 4.5, 5.5]).unwrap(), 2.5)
        && mase(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0, 3.0, 4.0], 2).unwrap() == Some(0.0)
        && close(mase(&[10.0, 11.0], &[7.0, 14.0], &[0.0, 1.0, 3.0, 4.0, 6.0, 7.0], 2).unwrap().unwrap(), 1.0)
        && mase(&[1.0], &[2.0], &[5.0, 5.0, 5.0], 1).unwrap().is_none();
    check(ok, format!("smape([3],[1]) = {forty}"))
}

fn geohash_codec() -> Verdict {
    let code = encode(57.64911, 10.40744, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut misses = 0;
    for i in 0..10_000 {
        let (lat, lon) = (rng.random_range(-90.0..=90.0), rng.random_range(-180.0..=180.0));
        let b = decode(&encode(lat, lon, 1 + i % 12).unwrap()).unwrap();
        if !(b.min_lat <= lat && lat <= b.max_lat && b.min_lon <= lon && lon <= b.max_lon) {
            misses += 1;
        }
    }
    let cell = decode(&encode(12.97, 77.59, 6).unwrap()).unwrap();
    let mid = (cell.min_lat + cell.max_lat) / 2.0;
    let width = haversine_km(LatLon::new(mid, cell.min_lon), LatLon::new(mid, cell.max_lon));
    let height = haversine_km(LatLon::new(cell.min_lat, cell.min_lon), LatLon::new(cell.max_lat, cell.min_lon));
    let ok = code == "u4pruy" && misses == 0 && (width / 1.2 - 1.0).abs() < 0.05 && (height / 0.6 - 1.0).abs() < 0.05;
    check(ok, format!("{code}, {misses} misses, level-6 cell {width:.3} x {height:.3} km"))
}

fn voronoi_correctness() -> Verdict {
    let rect = Rect::new(0.0, 0.0, 100.0, 60.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut agree, mut total, mut worst_area, mut asymmetric) = (0usize, 0usize, 0.0f64, 0usize);
    for d in 0..20 {
        let n = rng.random_range(1..=100);
        let sites: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..60.0)))
            .collect();
        let diagram = voronoi::build(&sites, rect, d).unwrap();
        for _ in 0..10_000 {
            let p = Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..60.0));
            let want = (0..n).min_by(|&a, &b| sites[a].dist2(&p).total_cmp(&sites[b].dist2(&p))).unwrap();
            total += 1;
            if diagram.locate(p) == want && diagram.cell_contains(want, p) {
                agree += 1;
            }
        }
        worst_area = worst_area.max((diagram.total_area() - rect.area()).abs() / rect.area());
        for (i, c) in diagram.cells.iter().enumerate() {
            asymmetric += c.neighbors.iter().filter(|&&j| !diagram.cells[j].neighbors.contains(&i)).count();
        }
    }
    check(
        agree == total && worst_area < 1e-9 && asymmetric == 0,
        format!("{agree}/{total} agree, area rel err {worst_area:.1e}, {asymmetric} one-way edges"),
    )
}

fn kmeans_behaviour() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut increases = 0;
    for seed in 0..50 {
        let pts: Vec<Point> = (0..300)
            .map(|_| Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
            .collect();
        let r = kmeans(&pts, &KMeansConfig::new(1 + seed as usize % 12, seed)).unwrap();
        increases += r.objective_history.windows(2).filter(|w| w[1] > w[0]).count();
    }
    let offsets = [(0.0, 0.0), (0.1, 0.0), (0.0, 0.1), (0.1, 0.1)];
    let mut blobs: Vec<Point> = offsets.iter().map(|&(dx, dy)| Point::new(dx, dy)).collect();
    blobs.extend(offsets.iter().map(|&(dx, dy)| Point::new(50.0 + dx, 20.0 + dy)));
    let r = kmeans(&blobs, &KMeansConfig::new(2, 7)).unwrap();
    let mut centers = r.centers.clone();
    centers.sort_by(|a, b| a.x.total_cmp(&b.x));
    let blob_ok = (centers[0].x - 0.05).abs() < 1e-12
        && (centers[0].y - 0.05).abs() < 1e-12
        && (centers[1].x - 50.05).abs() < 1e-12
        && (centers[1].y - 20.05).abs() < 1e-12
        && r.assignment[..4].iter().all(|&a| a == r.assignment[0])
        && r.assignment[4..].iter().all(|&a| a == r.assignment[4])
        && r.assignment[0] != r.assignment[4];
    check(increases == 0 && blob_ok, format!("{increases} objective increases over 50 runs, two-blob recovered: {blob_ok}"))
}

fn gradient_check() -> Verdict {
    let (s, n, layers, w) = (2, 2, 2, 3);
    let mut worst = 0.0f64;
    for act in Activation::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = LstmParams::init(s, n, layers, &mut rng);
        for b in p.blocks_mut() {
            for v in b.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let windows: Vec<Vec<f64>> = (0..3).map(|_| (0..s * w).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let batch: Vec<(&[f64], f64)> = windows.iter().map(|v| (v.as_slice(), rng.random_range(0.0..1.0))).collect();
        let (_, g) = batch_gradient(&p, act, &batch, None).unwrap();
        let eps = 1e-5;
        for b in 0..p.blocks().len() {
            let mut diff = 0.0;
            let mut scale = 0.0f64;
            for i in 0..p.blocks()[b].len() {
                let mut plus = p.clone();
                plus.blocks_mut()[b][i] += eps;
                let mut minus = p.clone();
                minus.blocks_mut()[b][i] -= eps;
                let num = (batch_loss(&plus, act, &batch, None).unwrap() - batch_loss(&minus, act, &batch, None).unwrap()) / (2.0 * eps);
                let ana = g.blocks()[b][i];
                diff += (ana - num).powi(2);
                scale = scale.max(ana.abs()).max(num.abs());
            }
            worst = worst.max(if scale < 1e-12 { diff.sqrt() } else { diff.sqrt() / scale });
        }
    }
    check(worst < 1e-4, format!("worst block relative error {worst:.2e}"))
}

fn single_region(series: &[f64]) -> (tesscast::FeatureTensor, SplitSpec) {
    let split = SplitSpec::daily(series.len()).unwrap();
    let map = NeighborMap {
        k: 0,
        rows: vec![NeighborRow::default()],
    };
    (build_tensor(&[series.to_vec()], &map, 0, &split).unwrap(), split)
}

fn forecast_sanity() -> Verdict {
    let mut wins = 0;
    let mut scores = Vec::new();
    for seed in 0..10 {
        let series = noisy_sinusoid(24 * 14, 24, 50.0, 40.0, 0.05, seed);
        let (tensor, split) = single_region(&series);
        let hp = HyperParams {
            neurons: 20,
            dropout: 0.0,
            learning_rate: 1e-2,
            batch_size: 32,
            ..HyperParams::default()
        };
        let cfg = TrainConfig {
            max_epochs: 150,
            patience: 20,
            ..TrainConfig::new(hp, seed)
        };
        let model = train(&tensor, &split, &cfg).unwrap();
        let forecast = predict_day(&model, &tensor, &split).unwrap();
        let test = split.range(Segment::Test);
        let m = mase(&series[test], &forecast[0], &series[split.training_bins()], SEASONAL_PERIOD)
            .unwrap()
            .unwrap();
        scores.push(format!("{m:.2}"));
        wins += usize::from(m < 1.0);
    }
    check(wins >= 9, format!("MASE < 1 on {wins}/10 seeds [{}]", scores.join(" ")))
}

fn lead_lag_claim() -> Verdict {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10 {
        let city = lead_lag_city(&CityConfig { seed, ..CityConfig::default() }).unwrap();
        let (centroids, _) = kmeans_centroids(&city.events.positions(), &city.bbox, &KMeansConfig::new(30, seed)).unwrap();
        let mut both = true;
        for kind in [TessellationKind::Voronoi, TessellationKind::Geohash] {
            let tess = tessellate(kind, &centroids, &city.bbox, CITY_PRECISION).unwrap();
            let agg = aggregate(&city.events, &tess, Duration::hours(1), city.window).unwrap();
            let split = SplitSpec::daily(agg.series.n_bins()).unwrap();
            let neighbors = rank_all(&agg.series, &tess, 8, &split).unwrap();
            let rows = agg.series.rows_f64();
            let actual: Vec<Vec<f64>> = rows.iter().map(|r| r[split.range(Segment::Test)].to_vec()).collect();
            let insample: Vec<Vec<f64>> = rows.iter().map(|r| r[split.training_bins()].to_vec()).collect();
            let mut mase_at = Vec::new();
            for k in [0, 8] {
                let tensor = build_tensor(&rows, &neighbors, k, &split).unwrap();
                let hp = HyperParams {
                    neurons: 20,
                    dropout: 0.0,
                    ..HyperParams::default()
                };
                let cfg = TrainConfig {
                    max_epochs: 40,
                    patience: 10,
                    ..TrainConfig::new(hp, seed)
                };
                let model = train(&tensor, &split, &cfg).unwrap();
                let forecast = predict_day(&model, &tensor, &split).unwrap();
                mase_at.push(score_regions(&actual, &forecast, &insample, SEASONAL_PERIOD).unwrap().mase.unwrap());
            }
            both &= mase_at[1] < mase_at[0];
            lines.push(format!("{seed}/{kind}: {:.3}->{:.3}", mase_at[0], mase_at[1]));
        }
        wins += usize::from(both);
    }
    check(wins >= 8, format!("k=8 beats k=0 for both kinds on {wins}/10 seeds [{}]", lines.join(", ")))
}

fn tpe_vs_random() -> Verdict {
    let table = SearchSpace::default();
    let space = SearchSpace::dropout_only(&HyperParams::default());
    let surrogate = |hp: &HyperParams, _: u64| Ok((hp.dropout - 0.3).powi(2));
    let (mut tpe_best, mut rnd_best) = (Vec::new(), Vec::new());
    let (mut near, mut outside) = (0, 0);
    for seed in 0..10 {
        let tpe = run_search(surrogate, &space, &TpeConfig::default(), SearchStrategy::Tpe, 50, seed, None).unwrap();
        let rnd = run_search(surrogate, &space, &TpeConfig::default(), SearchStrategy::Random, 50, seed, None).unwrap();
        outside += tpe.history.iter().chain(&rnd.history).filter(|t| !table.contains(&t.params)).count();
        near += usize::from((tpe.best.params.dropout - 0.3).abs() <= 0.05);
        tpe_best.push(tpe.best.objective.unwrap());
        rnd_best.push(rnd.best.objective.unwrap());
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[4] + v[5]) / 2.0
    };
    let (t, r) = (median(&mut tpe_best), median(&mut rnd_best));
    check(
        t <= r && outside == 0 && near >= 9,
        format!("median best TPE {t:.2e} vs random {r:.2e}, {near}/10 within 0.05, {outside} out of range"),
    )
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn determinism() -> Verdict {
    let mut cfg = ExperimentConfig::load(&fixture("city3.json")).unwrap();
    cfg.input = Some(fixture("city3.csv"));
    let mut reports = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_experiment(&cfg).unwrap();
        write_artifacts(dir.path(), &outcome).unwrap();
        reports.push(std::fs::read(dir.path().join("report.json")).unwrap());
    }
    check(reports[0] == reports[1], format!("report.json {} bytes, identical: {}", reports[0].len(), reports[0] == reports[1]))
}

fn nyc_smoke() -> Verdict {
    let Ok(path) = std::env::var("TESSCAST_NYC_CSV") else {
        return Verdict::Skipped("set TESSCAST_NYC_CSV to one day of NYC January-2016 pickups".into());
    };
    let cfg = ExperimentConfig {
        dataset: "nyc".into(),
        input: Some(path.into()),
        schema: Schema {
            time_col: std::env::var("TESSCAST_NYC_TIME_COL").unwrap_or_else(|_| "tpep_pickup_datetime".into()),
            ..Schema::default()
        },
        bbox: Some(tesscast::GeoBBox::new(40.49, -74.27, 40.92, -73.68).unwrap()),
        bin_width_seconds: 600,
        lookback: 12,
        k_sweep: vec![0, 8],
        repeats: 2,
        trials: 2,
        max_epochs: 5,
        patience: 2,
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&cfg).unwrap();
    let written = write_artifacts(dir.path(), &outcome).unwrap();
    let all = written.iter().all(|p| p.metadata().map(|m| m.len() > 0).unwrap_or(false));
    check(all, format!("{} artifacts, {} runs, {} failed", written.len(), outcome.report.runs, outcome.report.failed))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("metric fidelity", metric_fidelity),
        ("geohash codec", geohash_codec),
        ("voronoi correctness", voronoi_correctness),
        ("k-means", kmeans_behaviour),
        ("gradient check", gradient_check),
        ("forecast sanity", forecast_sanity),
        ("spatial features help", lead_lag_claim),
        ("tpe vs random", tpe_vs_random),
        ("end-to-end determinism", determinism),
        ("nyc smoke", nyc_smoke),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|p| !name.contains(p)) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let secs = Elapsed::as_secs_f64(&start.elapsed());
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skipped(d) => ("SKIPPED", d),
        };
        println!("criterion {:>2} {name:<24} {tag} ({secs:.1}s) {detail}", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
