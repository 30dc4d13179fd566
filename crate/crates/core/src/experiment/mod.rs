//! End-to-end comparison pipeline and its artifacts.
//!
//! ingest → tessellate (per kind) → aggregate → tune once per kind at the
//! largest k → train `repeats` seeded runs per k → evaluate → aggregate.
//! Every stage draws its seed from the master seed, so `(config, input)`
//! fixes every byte of `report.json`.

mod heatmap;
mod report;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{aggregate, build_tensor, rank_all, FeatureTensor, NeighborMap, Segment, SeriesMatrix, SplitSpec};
use crate::forecaster::{predict_day, train, HyperParams, TrainConfig, TrainedModel};
use crate::geo::GeoBBox;
use crate::hyperopt::{run_search, SearchSpace, SearchStrategy, TpeConfig, Trial};
use crate::ingest::{filter_window, parse_events, parse_instant, EventSet, Schema, TimeWindow};
use crate::metrics::{aggregate_runs, score_regions, RunMetrics, RunRecord, REGION_REDUCTION};
use crate::seed::derive_seed;
use crate::tessellation::geojson::to_geojson;
use crate::tessellation::kmeans::{count_distinct, KMeansConfig};
use crate::tessellation::{default_k, kmeans_centroids, tessellate, Centroid, Tessellation, TessellationKind};

pub use heatmap::{bucket, export_heatmap, BANDS};
pub use report::{
    compare, select_kind, table_rows, write_compare_csv, DeltaRow, MetricDelta, MetricMeans, Report, TableRow, Winner,
};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SMAPE_FORM: &str = "100/N * sum |y - f| / (f + y + 1)";

/// JSON-configurable experiment; every CLI flag of `run` overrides one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub input: Option<PathBuf>,
    pub schema: Schema,
    /// Study box; the events' bounding box when absent.
    pub bbox: Option<GeoBBox>,
    /// Window start and end; the events' span rounded out to whole bins when absent.
    pub start: Option<String>,
    pub end: Option<String>,
    pub bin_width_seconds: i64,
    pub kinds: Vec<TessellationKind>,
    /// K-Means cluster count; one per km² of the box when absent.
    pub clusters: Option<usize>,
    pub precision: usize,
    pub k_sweep: Vec<usize>,
    pub repeats: usize,
    pub trials: usize,
    /// Fixed hyperparameters; tuning is skipped when present.
    pub hyperparams: Option<HyperParams>,
    pub lookback: usize,
    pub max_epochs: usize,
    /// Epoch cap for each tuning trial; `max_epochs` when absent.
    pub tune_max_epochs: Option<usize>,
    pub patience: usize,
    pub test_bins: usize,
    pub val_fraction: f64,
    pub seasonal_period: usize,
    pub seed: u64,
    /// Not part of the config hash.
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "dataset".into(),
            input: None,
            schema: Schema::default(),
            bbox: None,
            start: None,
            end: None,
            bin_width_seconds: 3600,
            kinds: vec![TessellationKind::Voronoi, TessellationKind::Geohash],
            clusters: None,
            precision: 6,
            k_sweep: vec![0, 2, 4, 6, 8],
            repeats: 10,
            trials: 20,
            hyperparams: None,
            lookback: 24,
            max_epochs: 500,
            tune_max_epochs: None,
            patience: 20,
            test_bins: 24,
            val_fraction: 0.1,
            seasonal_period: 24,
            seed: 0,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Argument("at least one tessellation kind is required".into()));
        }
        if self.k_sweep.is_empty() || self.k_sweep.iter().any(|&k| k > 8) {
            return Err(Error::Argument("k sweep must be non-empty with values ≤ 8".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Argument("repeats must be at least 1".into()));
        }
        if self.hyperparams.is_none() && self.trials == 0 {
            return Err(Error::Argument("trials must be at least 1 unless hyperparams are fixed".into()));
        }
        if let Some(hp) = &self.hyperparams {
            hp.validate()?;
        }
        if self.bin_width_seconds <= 0 || self.lookback == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Argument("bin width, lookback, epochs and patience must be positive".into()));
        }
        if self.clusters == Some(0) {
            return Err(Error::Argument("clusters must be positive".into()));
        }
        if let Some(b) = &self.bbox {
            b.validate()?;
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Schema(format!("experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// SHA-256 of the canonical JSON with the output directory removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn split(&self, total_bins: usize) -> Result<SplitSpec> {
        SplitSpec::new(total_bins, self.test_bins, self.val_fraction)
    }

    pub fn train_config(&self, hyper: HyperParams, seed: u64, repeat: usize, max_epochs: usize) -> TrainConfig {
        TrainConfig {
            max_epochs,
            patience: self.patience,
            repeat,
            lookback: self.lookback,
            ..TrainConfig::new(hyper, seed)
        }
    }
}

fn floor_to(t: DateTime<Utc>, width: i64) -> Result<DateTime<Utc>> {
    let s = t.timestamp();
    DateTime::from_timestamp(s.div_euclid(width) * width, 0).ok_or_else(|| Error::Data("timestamp out of range".into()))
}

/// Study box and whole-bin window for `events` under `cfg`.
pub fn study_area(events: &EventSet, cfg: &ExperimentConfig) -> Result<(GeoBBox, TimeWindow)> {
    let bbox = match cfg.bbox {
        Some(b) => b,
        None => {
            let evs = events.events();
            if evs.is_empty() {
                return Err(Error::Data("no events to derive a study box from".into()));
            }
            let (mut a, mut b, mut c, mut d) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for e in evs {
                a = a.min(e.lat);
                b = b.min(e.lon);
                c = c.max(e.lat);
                d = d.max(e.lon);
            }
            let pad = 1e-6;
            GeoBBox::new((a - pad).max(-90.0), (b - pad).max(-180.0), (c + pad).min(90.0), (d + pad).min(180.0))?
        }
    };
    let width = cfg.bin_width_seconds;
    let start = match &cfg.start {
        Some(s) => parse_instant(s)?,
        None => floor_to(
            events
                .events()
                .first()
                .ok_or_else(|| Error::Data("no events to derive a window from".into()))?
                .timestamp,
            width,
        )?,
    };
    let end = match &cfg.end {
        Some(s) => parse_instant(s)?,
        None => {
            let last = events.events().last().map(|e| e.timestamp).unwrap_or(start);
            floor_to(last, width)? + Duration::seconds(width)
        }
    };
    Ok((bbox, TimeWindow::new(start, end)?))
}

/// One tessellation with its aggregated series and neighbor ranking.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub kind: TessellationKind,
    pub tess: Tessellation,
    pub series: SeriesMatrix,
    pub unassigned: usize,
    pub neighbors: NeighborMap,
}

/// Per-region test actuals and in-sample series for scoring.
pub fn evaluate_model(model: &TrainedModel, tensor: &FeatureTensor, split: &SplitSpec, rows: &[Vec<f64>], m: usize) -> Result<RunMetrics> {
    let forecast = predict_day(model, tensor, split)?;
    let test = split.range(Segment::Test);
    let fit = split.training_bins();
    let actual: Vec<Vec<f64>> = rows.iter().map(|r| r[test.clone()].to_vec()).collect();
    let insample: Vec<Vec<f64>> = rows.iter().map(|r| r[fit.clone()].to_vec()).collect();
    score_regions(&actual, &forecast, &insample, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub dataset: String,
    pub kind: String,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
    pub metrics: Option<RunMetrics>,
    pub best_epoch: Option<usize>,
    pub epochs: Option<usize>,
    pub error: Option<String>,
    pub config_hash: String,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub kind: String,
    pub config_hash: String,
    pub code_version: String,
    #[serde(flatten)]
    pub trial: Trial,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub runs: Vec<RunRow>,
    pub trials: Vec<TrialRow>,
    pub prepared: Vec<Prepared>,
}

/// Reads `cfg.input` and runs the pipeline.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Argument("no input file configured".into()))?;
    let file = File::open(path).map_err(|e| Error::io(path, e).in_stage("ingest"))?;
    let parsed = parse_events(std::io::BufReader::new(file), &cfg.schema).map_err(|e| e.in_stage("ingest"))?;
    run_on_events(cfg, &parsed.events)
}

/// K-Means sites for `events`; K is capped at the number of distinct positions.
pub fn centroids_for(cfg: &ExperimentConfig, events: &EventSet, bbox: &GeoBBox) -> Result<Vec<Centroid>> {
    let positions = events.positions();
    let distinct = count_distinct(&positions.iter().map(|p| crate::geo::Point::new(p.lon, p.lat)).collect::<Vec<_>>());
    let k_clusters = cfg.clusters.unwrap_or_else(|| default_k(bbox)).min(distinct);
    let km = KMeansConfig::new(k_clusters, derive_seed(cfg.seed, "kmeans", &[]));
    Ok(kmeans_centroids(&positions, bbox, &km)?.0)
}

fn prepare(cfg: &ExperimentConfig, events: &EventSet, bbox: &GeoBBox, window: TimeWindow) -> Result<(Vec<Prepared>, usize)> {
    let centroids = centroids_for(cfg, events, bbox).map_err(|e| e.in_stage("tessellate"))?;
    let k_clusters = centroids.len();
    let k_max = *cfg.k_sweep.iter().max().expect("validated non-empty");
    let mut out = Vec::new();
    for &kind in &cfg.kinds {
        let tess = tessellate(kind, &centroids, bbox, cfg.precision).map_err(|e| e.in_stage("tessellate"))?;
        let agg = aggregate(events, &tess, Duration::seconds(cfg.bin_width_seconds), window)
            .map_err(|e| e.in_stage("aggregate"))?;
        let split = cfg.split(agg.series.n_bins()).map_err(|e| e.in_stage("aggregate"))?;
        let neighbors = rank_all(&agg.series, &tess, k_max, &split).map_err(|e| e.in_stage("aggregate"))?;
        out.push(Prepared {
            kind,
            tess,
            series: agg.series,
            unassigned: agg.unassigned,
            neighbors,
        });
    }
    Ok((out, k_clusters))
}

/// Validation loss of one training run, the tuning objective.
pub fn tune(
    tensor: &FeatureTensor,
    split: &SplitSpec,
    base: &TrainConfig,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    log: Option<&mut dyn Write>,
) -> Result<crate::hyperopt::SearchResult> {
    run_search(
        |hp, trial_seed| {
            let cfg = TrainConfig {
                hyper: *hp,
                seed: trial_seed,
                ..base.clone()
            };
            Ok(train(tensor, split, &cfg)?.best_val_loss)
        },
        space,
        &TpeConfig::default(),
        SearchStrategy::Tpe,
        n_trials,
        seed,
        log,
    )
}

/// Runs the pipeline on already-parsed events and writes artifacts when `out_dir` is set.
pub fn run_on_events(cfg: &ExperimentConfig, events: &EventSet) -> Result<Outcome> {
    cfg.validate()?;
    let config_hash = cfg.hash();
    let (bbox, window) = study_area(events, cfg).map_err(|e| e.in_stage("ingest"))?;
    let events = filter_window(events, bbox, window).map_err(|e| e.in_stage("ingest"))?;
    if events.is_empty() {
        return Err(Error::Data("no events inside the study box and window".into()).in_stage("ingest"));
    }
    let (prepared, _) = prepare(cfg, &events, &bbox, window)?;
    let k_max = *cfg.k_sweep.iter().max().expect("validated non-empty");
    let tune_epochs = cfg.tune_max_epochs.unwrap_or(cfg.max_epochs);

    let mut hyper: BTreeMap<String, HyperParams> = BTreeMap::new();
    let mut trials = Vec::new();
    let mut tensors: Vec<BTreeMap<usize, FeatureTensor>> = Vec::new();
    for (ki, p) in prepared.iter().enumerate() {
        let split = cfg.split(p.series.n_bins())?;
        let rows = p.series.rows_f64();
        let mut by_k = BTreeMap::new();
        for &k in &cfg.k_sweep {
            let t = build_tensor(&rows, &p.neighbors, k, &split).map_err(|e| e.in_stage("aggregate"))?;
            by_k.insert(k, t);
        }
        let hp = match cfg.hyperparams {
            Some(hp) => hp,
            None => {
                let base = cfg.train_config(HyperParams::default(), 0, 0, tune_epochs);
                let result = tune(
                    &by_k[&k_max],
                    &split,
                    &base,
                    &SearchSpace::default(),
                    cfg.trials,
                    derive_seed(cfg.seed, "tune", &[ki as u64]),
                    None,
                )
                .map_err(|e| e.in_stage("tune"))?;
                trials.extend(result.history.into_iter().map(|trial| TrialRow {
                    kind: p.kind.to_string(),
                    config_hash: config_hash.clone(),
                    code_version: CODE_VERSION.into(),
                    trial,
                }));
                result.best.params
            }
        };
        hyper.insert(p.kind.to_string(), hp);
        tensors.push(by_k);
    }

    let tasks: Vec<(usize, usize, usize)> = (0..prepared.len())
        .flat_map(|ki| cfg.k_sweep.iter().flat_map(move |&k| (0..cfg.repeats).map(move |r| (ki, k, r))))
        .collect();
    let results: Vec<RunRow> = tasks
        .par_iter()
        .map(|&(ki, k, repeat)| {
            let p = &prepared[ki];
            let kind = p.kind.to_string();
            let seed = derive_seed(cfg.seed, "train", &[ki as u64, k as u64, repeat as u64]);
            let split = cfg.split(p.series.n_bins())?;
            let tensor = &tensors[ki][&k];
            let tc = cfg.train_config(hyper[&kind], seed, repeat, cfg.max_epochs);
            let outcome = train(tensor, &split, &tc)
                .and_then(|m| evaluate_model(&m, tensor, &split, &p.series.rows_f64(), cfg.seasonal_period).map(|s| (m, s)));
            let (metrics, best_epoch, epochs, error) = match outcome {
                Ok((m, s)) => (Some(s), Some(m.best_epoch), Some(m.history.len()), None),
                Err(e) if e.category() == crate::error::ErrorCategory::Runtime => (None, None, None, Some(e.to_string())),
                Err(e) => return Err(e.in_stage("train")),
            };
            Ok(RunRow {
                dataset: cfg.dataset.clone(),
                kind,
                k,
                repeat,
                seed,
                metrics,
                best_epoch,
                epochs,
                error,
                config_hash: config_hash.clone(),
                code_version: CODE_VERSION.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut keyed: BTreeMap<(String, usize, usize), RunRow> = BTreeMap::new();
    for r in results {
        keyed.insert((r.kind.clone(), r.k, r.repeat), r);
    }
    let runs: Vec<RunRow> = keyed.into_values().collect();

    let records: Vec<RunRecord> = runs
        .iter()
        .map(|r| RunRecord {
            dataset: r.dataset.clone(),
            kind: r.kind.clone(),
            k: r.k,
            repeat: r.repeat,
            metrics: r.metrics,
        })
        .collect();
    let groups = aggregate_runs(&records).map_err(|e| e.in_stage("evaluate"))?;
    let labels: BTreeMap<String, String> = hyper.iter().map(|(k, h)| (k.clone(), h.label())).collect();
    let report = Report {
        dataset: cfg.dataset.clone(),
        config_hash: config_hash.clone(),
        code_version: CODE_VERSION.into(),
        horizon: cfg.test_bins,
        seasonal_period: cfg.seasonal_period,
        region_reduction: REGION_REDUCTION.into(),
        smape_form: SMAPE_FORM.into(),
        regions: prepared.iter().map(|p| (p.kind.to_string(), p.tess.len())).collect(),
        hyperparams: hyper,
        runs: runs.iter().filter(|r| r.metrics.is_some()).count(),
        failed: runs.iter().filter(|r| r.metrics.is_none()).count(),
        table: table_rows(&groups, &labels),
        groups,
    };
    let outcome = Outcome {
        report,
        runs,
        trials,
        prepared,
    };
    if let Some(dir) = &cfg.out_dir {
        write_artifacts(dir, &outcome).map_err(|e| e.in_stage("report"))?;
    }
    Ok(outcome)
}

fn provenance(report: &Report) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("config_hash".into(), json!(report.config_hash));
    m.insert("code_version".into(), json!(report.code_version));
    m
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// `report.{csv,json}`, `runs.jsonl`, `trials.jsonl` and per-kind GeoJSON.
pub fn write_artifacts(dir: &Path, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = &outcome.report;
    let mut written = Vec::new();
    let p = dir.join("report.json");
    std::fs::write(&p, report.to_json()?).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    let p = dir.join("report.csv");
    report.write_csv(create(&p)?)?;
    written.push(p);
    let p = dir.join("runs.jsonl");
    write_jsonl(&p, &outcome.runs)?;
    written.push(p);
    let p = dir.join("trials.jsonl");
    write_jsonl(&p, &outcome.trials)?;
    written.push(p);
    let extra = provenance(report);
    for prep in &outcome.prepared {
        let p = dir.join(format!("tessellation_{}.geojson", prep.kind));
        write_json(&p, &to_geojson(&prep.tess, &extra))?;
        written.push(p);
        let p = dir.join(format!("heatmap_{}.geojson", prep.kind));
        write_json(&p, &export_heatmap(&prep.tess, &prep.series, None, &extra)?)?;
        written.push(p);
    }
    Ok(written)
}
