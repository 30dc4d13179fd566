use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::Duration;
use serde_json::{json, Map, Value};
use tesscast::experiment::{
    self, centroids_for, compare as compare_reports, evaluate_model, export_heatmap as heatmap, run_experiment, select_kind,
    study_area, write_compare_csv, write_json, write_jsonl, CODE_VERSION,
};
use tesscast::features::{aggregate as bin_events, build_tensor, rank_all};
use tesscast::forecaster::train as fit;
use tesscast::hyperopt::SearchSpace;
use tesscast::ingest::{filter_window, parse_events, parse_instant};
use tesscast::metrics::Summary;
use tesscast::seed::derive_seed;
use tesscast::tessellation::geojson::{from_geojson, to_geojson};
use tesscast::tessellation::tessellate as build_tessellation;
use tesscast::{
    Error, EventSet, ExperimentConfig, FeatureTensor, HyperParams, Report, Result, SeriesMatrix, SplitSpec, Tessellation,
    TrainedModel,
};

use crate::args::*;

fn read_events(cfg: &ExperimentConfig) -> Result<EventSet> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Argument("no input file; pass --input or set \"input\" in the config".into()))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_events(BufReader::new(file), &cfg.schema)?;
    let r = &parsed.report;
    eprintln!("read {} rows, kept {}, dropped {}", r.total_rows, r.kept, r.dropped_total());
    Ok(parsed.events)
}

/// Events inside the configured study box and window.
fn study_events(cfg: &ExperimentConfig) -> Result<(EventSet, tesscast::GeoBBox, tesscast::TimeWindow)> {
    let events = read_events(cfg)?;
    let (bbox, window) = study_area(&events, cfg)?;
    let events = filter_window(&events, bbox, window)?;
    if events.is_empty() {
        return Err(Error::Data("no events inside the study box and window".into()));
    }
    Ok((events, bbox, window))
}

fn read_json(path: &Path) -> Result<Value> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

fn load_tessellation(path: &Path) -> Result<Tessellation> {
    from_geojson(&read_json(path)?)
}

fn load_series(path: &Path) -> Result<SeriesMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    SeriesMatrix::read_csv(BufReader::new(file))
}

fn load_hyperparams(path: &Path) -> Result<HyperParams> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let hp: HyperParams = serde_json::from_str(&s).map_err(|e| Error::Schema(format!("hyperparameters: {e}")))?;
    hp.validate()?;
    Ok(hp)
}

fn provenance(cfg: &ExperimentConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("config_hash".into(), json!(cfg.hash()));
    m.insert("code_version".into(), json!(CODE_VERSION));
    m
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn check_k(k: usize) -> Result<()> {
    if k > 8 {
        return Err(Error::Argument(format!("k = {k} exceeds the limit of 8 spatial features")));
    }
    Ok(())
}

/// Tessellation, series, split and the k-feature tensor they define.
struct Inputs {
    tess: Tessellation,
    series: SeriesMatrix,
    split: SplitSpec,
    rows: Vec<Vec<f64>>,
}

impl Inputs {
    fn load(tessellation: &Path, series: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let tess = load_tessellation(tessellation)?;
        let series = load_series(series)?;
        let split = cfg.split(series.n_bins())?;
        let rows = series.rows_f64();
        Ok(Self { tess, series, split, rows })
    }

    fn tensor(&self, k: usize) -> Result<FeatureTensor> {
        let neighbors = rank_all(&self.series, &self.tess, k, &self.split)?;
        build_tensor(&self.rows, &neighbors, k, &self.split)
    }
}

pub fn tessellate(a: TessellateArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.ingest.apply(&mut cfg)?;
    cfg.clusters = a.k.or(cfg.clusters);
    cfg.precision = a.precision.unwrap_or(cfg.precision);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let (events, bbox, _) = study_events(&cfg)?;
    let centroids = centroids_for(&cfg, &events, &bbox)?;
    let tess = build_tessellation(a.kind, &centroids, &bbox, cfg.precision)?;
    write_json(&a.out, &to_geojson(&tess, &provenance(&cfg)))?;
    eprintln!("{}: {} regions from {} centroids", a.kind, tess.len(), centroids.len());
    Ok(())
}

pub fn aggregate(a: AggregateArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.ingest.apply(&mut cfg)?;
    cfg.bin_width_seconds = a.bin_width.unwrap_or(cfg.bin_width_seconds);
    cfg.validate()?;
    let tess = load_tessellation(&a.tessellation)?;
    cfg.bbox = cfg.bbox.or(Some(tess.bbox()));
    let (events, _, window) = study_events(&cfg)?;
    let agg = bin_events(&events, &tess, Duration::seconds(cfg.bin_width_seconds), window)?;
    agg.series.write_csv(create(&a.out)?)?;
    eprintln!(
        "{} regions x {} bins, {} events unassigned",
        agg.series.n_regions(),
        agg.series.n_bins(),
        agg.unassigned
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.model.apply(&mut cfg);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.repeats = a.repeats.unwrap_or(cfg.repeats);
    if let Some(p) = &a.hyperparams {
        cfg.hyperparams = Some(load_hyperparams(p)?);
    }
    cfg.validate()?;
    check_k(a.k)?;
    let hyper = cfg.hyperparams.unwrap_or_default();
    let inputs = Inputs::load(&a.tessellation, &a.series, &cfg)?;
    let neighbors = rank_all(&inputs.series, &inputs.tess, a.k, &inputs.split)?;
    let tensor = build_tensor(&inputs.rows, &neighbors, a.k, &inputs.split)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_json(&a.out.join(format!("neighbors_k{}.json", a.k)), &neighbors.to_json())?;

    let hash = cfg.hash();
    let mut rows = Vec::new();
    let mut last_err = None;
    for repeat in 0..cfg.repeats {
        let seed = derive_seed(cfg.seed, "train", &[a.k as u64, repeat as u64]);
        let tc = cfg.train_config(hyper, seed, repeat, cfg.max_epochs);
        let mut row = json!({
            "k": a.k,
            "repeat": repeat,
            "seed": seed,
            "config_hash": hash,
            "code_version": CODE_VERSION,
        });
        match fit(&tensor, &inputs.split, &tc) {
            Ok(model) => {
                let path = a.out.join(format!("model_k{}_r{repeat}.json", a.k));
                model.save(&path)?;
                row["model"] = json!(path);
                row["best_epoch"] = json!(model.best_epoch);
                row["epochs"] = json!(model.history.len());
                row["best_val_loss"] = json!(model.best_val_loss);
                eprintln!("repeat {repeat}: best val loss {:.6} at epoch {}", model.best_val_loss, model.best_epoch);
            }
            Err(e) if e.category() == tesscast::ErrorCategory::Runtime => {
                eprintln!("repeat {repeat}: {e}");
                row["error"] = json!(e.to_string());
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    write_jsonl(&a.out.join("runs.jsonl"), &rows)?;
    match last_err {
        Some(e) if rows.iter().all(|r| r.get("error").is_some()) => Err(e),
        _ => Ok(()),
    }
}

pub fn tune(a: TuneArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.model.apply(&mut cfg);
    cfg.trials = a.trials.unwrap_or(cfg.trials);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.hyperparams = None;
    cfg.validate()?;
    let k = a.k.unwrap_or_else(|| cfg.k_sweep.iter().copied().max().unwrap_or(0));
    check_k(k)?;
    let space = match a.space {
        SpaceName::Default => SearchSpace::default(),
    };
    let inputs = Inputs::load(&a.tessellation, &a.series, &cfg)?;
    let tensor = inputs.tensor(k)?;
    let base = cfg.train_config(HyperParams::default(), 0, 0, cfg.tune_max_epochs.unwrap_or(cfg.max_epochs));
    let mut log = create(&a.out)?;
    let result = experiment::tune(
        &tensor,
        &inputs.split,
        &base,
        &space,
        cfg.trials,
        derive_seed(cfg.seed, "tune", &[k as u64]),
        Some(&mut log),
    )?;
    log.flush().map_err(|e| Error::io(&a.out, e))?;
    let best = serde_json::to_value(result.best.params)?;
    if let Some(p) = &a.best {
        write_json(p, &best)?;
    }
    println!("{}", serde_json::to_string_pretty(&best)?);
    eprintln!(
        "best trial {} of {}: validation MSE {:.6}",
        result.best.index,
        result.history.len(),
        result.best.objective.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.model.apply(&mut cfg);
    let inputs = Inputs::load(&a.tessellation, &a.series, &cfg)?;
    let mut tensors: BTreeMap<usize, FeatureTensor> = BTreeMap::new();
    let mut entries = Vec::new();
    let mut metrics = Vec::new();
    for path in &a.models {
        let model = TrainedModel::load(path)?;
        let k = model.n_features.checked_sub(1).ok_or_else(|| Error::Data("checkpoint has no input features".into()))?;
        check_k(k)?;
        if let Entry::Vacant(slot) = tensors.entry(k) {
            slot.insert(inputs.tensor(k)?);
        }
        let m = evaluate_model(&model, &tensors[&k], &inputs.split, &inputs.rows, cfg.seasonal_period)?;
        entries.push(json!({
            "model": path,
            "k": k,
            "repeat": model.config.repeat,
            "seed": model.config.seed,
            "metrics": m,
        }));
        metrics.push(m);
    }
    let summary = json!({
        "smape": Summary::of(&metrics.iter().map(|m| Some(m.smape)).collect::<Vec<_>>()),
        "mase": Summary::of(&metrics.iter().map(|m| m.mase).collect::<Vec<_>>()),
        "rmse": Summary::of(&metrics.iter().map(|m| Some(m.rmse)).collect::<Vec<_>>()),
    });
    let out = json!({
        "horizon": cfg.test_bins,
        "seasonal_period": cfg.seasonal_period,
        "code_version": CODE_VERSION,
        "models": entries,
        "summary": summary,
    });
    match &a.out {
        Some(p) => write_json(p, &out),
        None => {
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}

fn load_report(path: &Path) -> Result<Report> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Report::from_json(&s)
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let ra = load_report(&a.a)?;
    let rb = load_report(&a.b)?;
    let rows = compare_reports(&select_kind(&ra, a.kind_a.as_deref())?, &select_kind(&rb, a.kind_b.as_deref())?)?;
    match &a.out {
        Some(p) => write_compare_csv(&rows, create(p)?),
        None => write_compare_csv(&rows, std::io::stdout().lock()),
    }
}

pub fn run(a: RunArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.ingest.apply(&mut cfg)?;
    a.model.apply(&mut cfg);
    if let Some(v) = &a.dataset {
        cfg.dataset = v.clone();
    }
    if let Some(v) = &a.kinds {
        cfg.kinds = v.clone();
    }
    cfg.clusters = a.clusters.or(cfg.clusters);
    cfg.precision = a.precision.unwrap_or(cfg.precision);
    cfg.bin_width_seconds = a.bin_width.unwrap_or(cfg.bin_width_seconds);
    if let Some(v) = &a.k_sweep {
        cfg.k_sweep = v.clone();
    }
    cfg.repeats = a.repeats.unwrap_or(cfg.repeats);
    cfg.trials = a.trials.unwrap_or(cfg.trials);
    cfg.tune_max_epochs = a.tune_epochs.or(cfg.tune_max_epochs);
    if let Some(p) = &a.hyperparams {
        cfg.hyperparams = Some(load_hyperparams(p)?);
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.out_dir = a.out.clone().or(cfg.out_dir);
    cfg.validate()?;
    let dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::Argument("no output directory; pass --out or set \"out_dir\" in the config".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&dir.join("config.json"), &serde_json::to_value(&cfg)?)?;
    let outcome = run_experiment(&cfg)?;
    for row in &outcome.report.table {
        eprintln!("{} {:<8} {}", row.dataset, row.kind, row.configuration);
    }
    eprintln!(
        "{} runs, {} failed; artifacts in {}",
        outcome.report.runs,
        outcome.report.failed,
        dir.display()
    );
    Ok(())
}

fn bin_index(series: &SeriesMatrix, at: &str) -> Result<usize> {
    let t = parse_instant(at)?;
    let offset = (t - series.t0).num_seconds();
    let width = series.bin_width_seconds;
    if offset < 0 || offset % width != 0 || offset / width > series.n_bins() as i64 {
        return Err(Error::Argument(format!("{at} is not a bin boundary of the series")));
    }
    Ok((offset / width) as usize)
}

pub fn export_heatmap(a: HeatmapArgs) -> Result<()> {
    let tess = load_tessellation(&a.tessellation)?;
    let series = load_series(&a.series)?;
    let start = a.from.as_deref().map(|s| bin_index(&series, s)).transpose()?.unwrap_or(0);
    let end = a.to.as_deref().map(|s| bin_index(&series, s)).transpose()?.unwrap_or(series.n_bins());
    let mut extra = Map::new();
    extra.insert("code_version".into(), json!(CODE_VERSION));
    let v = heatmap(&tess, &series, Some(start..end), &extra)?;
    write_json(&a.out, &v)?;
    let overflow = v["features"]
        .as_array()
        .map_or(0, |fs| fs.iter().filter(|f| f["properties"]["overflow"] == true).count());
    eprintln!("{} regions, bins {start}..{end}, {overflow} above the top band", tess.len());
    Ok(())
}
