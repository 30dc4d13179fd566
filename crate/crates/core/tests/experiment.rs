use std::path::PathBuf;

use chrono::{DateTime, Duration};
use serde_json::Map;
use tesscast::experiment::*;
use tesscast::ingest::parse_events;
use tesscast::metrics::{GroupReport, Summary};
use tesscast::{ErrorCategory, EventSet, HyperParams, TessellationKind};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn events() -> EventSet {
    let f = std::fs::File::open(fixture("city3.csv")).unwrap();
    parse_events(std::io::BufReader::new(f), &Default::default()).unwrap().events
}

fn fast_config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: "city3".into(),
        clusters: Some(3),
        hyperparams: Some(HyperParams { neurons: 4, ..HyperParams::default() }),
        max_epochs: 3,
        patience: 2,
        seed: 5,
        ..ExperimentConfig::default()
    }
}

fn group(k: usize, smape: f64, mase: f64, rmse: f64) -> GroupReport {
    let s = |v: f64| Summary::of(&[Some(v)]);
    GroupReport {
        dataset: "d".into(),
        kind: "voronoi".into(),
        k,
        runs: 1,
        failed: 0,
        smape: s(smape),
        mase: s(mase),
        rmse: s(rmse),
    }
}

#[test]
fn band_edges() {
    assert_eq!(bucket(0), ("0-5000", false));
    assert_eq!(bucket(4_999), ("0-5000", false));
    assert_eq!(bucket(5_000), ("5000-10000", false));
    assert_eq!(bucket(7_000), ("5000-10000", false));
    assert_eq!(bucket(149_999), ("50000-150000", false));
    assert_eq!(bucket(150_000), ("50000-150000", true));
}

#[test]
fn smallest_pipeline_and_heatmap_conservation() {
    let cfg = ExperimentConfig {
        kinds: vec![TessellationKind::Voronoi],
        k_sweep: vec![0],
        repeats: 1,
        ..fast_config()
    };
    let ev = events();
    let out = run_on_events(&cfg, &ev).unwrap();
    assert_eq!(out.runs.len(), 1);
    assert_eq!(out.report.groups.len(), 1);
    assert_eq!(out.report.regions["voronoi"], 3);
    assert!(out.runs[0].metrics.is_some(), "{:?}", out.runs[0].error);

    let prep = &out.prepared[0];
    let heat = export_heatmap(&prep.tess, &prep.series, None, &Map::new()).unwrap();
    let total: u64 = heat["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["properties"]["volume"].as_u64().unwrap())
        .sum();
    assert_eq!(total + prep.unassigned as u64, ev.len() as u64);

    let zeros = tesscast::SeriesMatrix::new(
        (0..prep.tess.len()).collect(),
        DateTime::from_timestamp(0, 0).unwrap(),
        Duration::hours(1),
        vec![vec![0; 5]; prep.tess.len()],
    )
    .unwrap();
    let heat = export_heatmap(&prep.tess, &zeros, None, &Map::new()).unwrap();
    for f in heat["features"].as_array().unwrap() {
        assert_eq!(f["properties"]["bucket"], "0-5000");
    }

    let dir = tempfile::tempdir().unwrap();
    let written = write_artifacts(dir.path(), &out).unwrap();
    for name in ["report.json", "report.csv", "runs.jsonl", "trials.jsonl", "heatmap_voronoi.geojson"] {
        assert!(written.contains(&dir.path().join(name)), "{name}");
    }
    let back = Report::from_json(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, out.report);
}

#[test]
fn every_configured_run_is_accounted_for() {
    let cfg = ExperimentConfig {
        k_sweep: vec![0, 2],
        repeats: 2,
        ..fast_config()
    };
    let out = run_on_events(&cfg, &events()).unwrap();
    assert_eq!(out.runs.len(), 2 * 2 * 2);
    let counted: usize = out.report.groups.iter().map(|g| g.runs + g.failed).sum();
    assert_eq!(counted, 8);
    assert!(out.runs.iter().all(|r| r.config_hash == cfg.hash()));
}

#[test]
fn compare_contracts() {
    let a = vec![group(0, 24.9, 0.9, 3.0), group(2, 10.0, 1.0, 2.0)];
    let same = compare(&a, &a).unwrap();
    for row in &same {
        for m in &row.metrics {
            assert_eq!(m.delta, Some(0.0));
            assert_eq!(m.winner, Some(Winner::Tie));
        }
    }

    let b = vec![group(0, 22.8, 1.1, 3.0)];
    let ab = compare(&a, &b).unwrap();
    assert_eq!(ab.len(), 1);
    let s = &ab[0].metrics[0];
    assert!((s.improvement_pct.unwrap() - 8.433734939759).abs() < 1e-9);
    assert_eq!(s.winner, Some(Winner::B));
    let ba = compare(&b, &a).unwrap();
    for (x, y) in ab[0].metrics.iter().zip(&ba[0].metrics) {
        let flipped = match x.winner.unwrap() {
            Winner::A => Winner::B,
            Winner::B => Winner::A,
            Winner::Tie => Winner::Tie,
        };
        assert_eq!(y.winner, Some(flipped));
    }

    let err = compare(&a, &[group(5, 1.0, 1.0, 1.0)]).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Data);
    let mut dup = a.clone();
    dup[1].k = 0;
    assert_eq!(compare(&dup, &a).unwrap_err().category(), ErrorCategory::Config);
}

#[test]
fn config_validation_and_hash() {
    assert!(ExperimentConfig::from_json(r#"{"nonsense": 1}"#).is_err());
    let bad = [
        ExperimentConfig { k_sweep: vec![9], ..fast_config() },
        ExperimentConfig { repeats: 0, ..fast_config() },
        ExperimentConfig { kinds: vec![], ..fast_config() },
        ExperimentConfig { hyperparams: None, trials: 0, ..fast_config() },
    ];
    for c in bad {
        assert_eq!(c.validate().unwrap_err().category(), ErrorCategory::Config);
    }
    let cfg = fast_config();
    let moved = ExperimentConfig { out_dir: Some("/elsewhere".into()), ..fast_config() };
    assert_eq!(cfg.hash(), moved.hash());
    assert_ne!(cfg.hash(), ExperimentConfig { seed: 6, ..fast_config() }.hash());
    let fixture_cfg = ExperimentConfig::load(&fixture("city3.json")).unwrap();
    fixture_cfg.validate().unwrap();
}
