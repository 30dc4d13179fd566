use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tesscast::{Error, ExperimentConfig, GeoBBox, Result, TessellationKind};

#[derive(Debug, Parser)]
#[command(name = "tesscast", version, about = "Voronoi vs geohash tessellation for demand forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster the events and write the partition as GeoJSON.
    Tessellate(TessellateArgs),
    /// Bin events per region into a series CSV.
    Aggregate(AggregateArgs),
    /// Train seeded forecaster repeats and write checkpoints.
    Train(TrainArgs),
    /// Search hyperparameters and write the trial log.
    Tune(TuneArgs),
    /// Score checkpoints on the held-out day.
    Evaluate(EvaluateArgs),
    /// Per-metric deltas between two reports.
    Compare(CompareArgs),
    /// Full pipeline: every kind, every k, every repeat.
    Run(RunArgs),
    /// Per-region volume GeoJSON with legend bands.
    ExportHeatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Experiment config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ConfigArg {
    pub fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

fn parse_bbox(s: &str) -> std::result::Result<GeoBBox, String> {
    GeoBBox::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub lat_col: Option<String>,
    #[arg(long)]
    pub lon_col: Option<String>,
    #[arg(long)]
    pub time_col: Option<String>,
    /// Single-byte field delimiter.
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Offset of the input clock from UTC, in seconds.
    #[arg(long, allow_hyphen_values = true)]
    pub utc_offset: Option<i32>,
    /// minLat,minLon,maxLat,maxLon
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    pub bbox: Option<GeoBBox>,
    /// Window start, ISO 8601 or `YYYY-MM-DD HH:MM:SS` (UTC).
    #[arg(long)]
    pub from: Option<String>,
    /// Window end, exclusive.
    #[arg(long)]
    pub to: Option<String>,
}

impl IngestArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(v) = &self.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &self.lat_col {
            cfg.schema.lat_col = v.clone();
        }
        if let Some(v) = &self.lon_col {
            cfg.schema.lon_col = v.clone();
        }
        if let Some(v) = &self.time_col {
            cfg.schema.time_col = v.clone();
        }
        if let Some(c) = self.delimiter {
            if !c.is_ascii() {
                return Err(Error::Argument(format!("delimiter {c:?} is not a single byte")));
            }
            cfg.schema.delimiter = c as u8;
        }
        if let Some(v) = self.utc_offset {
            cfg.schema.utc_offset_seconds = v;
        }
        if let Some(v) = self.bbox {
            cfg.bbox = Some(v);
        }
        if let Some(v) = &self.from {
            cfg.start = Some(v.clone());
        }
        if let Some(v) = &self.to {
            cfg.end = Some(v.clone());
        }
        Ok(())
    }
}

/// Split and training-loop flags shared by `train`, `tune` and `evaluate`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Lookback window W in bins.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub test_bins: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub seasonal_period: Option<usize>,
}

impl ModelArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.window {
            cfg.lookback = v;
        }
        if let Some(v) = self.epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.test_bins {
            cfg.test_bins = v;
        }
        if let Some(v) = self.val_fraction {
            cfg.val_fraction = v;
        }
        if let Some(v) = self.seasonal_period {
            cfg.seasonal_period = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct TessellateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[arg(long, default_value = "voronoi")]
    pub kind: TessellationKind,
    /// K-Means cluster count; one per km² of the box by default.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub precision: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[arg(long)]
    pub tessellation: PathBuf,
    /// Bin width in seconds.
    #[arg(long)]
    pub bin_width: Option<i64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub tessellation: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
    /// Spatial feature count, 0 to 8.
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Hyperparameter JSON, e.g. the `--best` output of `tune`.
    #[arg(long)]
    pub hyperparams: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpaceName {
    Default,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub tessellation: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
    /// Spatial feature count; the largest value of the config sweep by default.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "default")]
    pub space: SpaceName,
    /// Trial log, one JSON object per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the best hyperparameters.
    #[arg(long)]
    pub best: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub tessellation: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
    /// Checkpoints written by `train`.
    #[arg(long = "model", required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// JSON output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Restrict report A to one tessellation kind.
    #[arg(long)]
    pub kind_a: Option<String>,
    /// Restrict report B to one tessellation kind.
    #[arg(long)]
    pub kind_b: Option<String>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub dataset: Option<String>,
    /// Comma-separated, e.g. `voronoi,geohash`.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<TessellationKind>>,
    /// K-Means cluster count.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub precision: Option<usize>,
    #[arg(long)]
    pub bin_width: Option<i64>,
    /// Comma-separated spatial feature counts, e.g. `0,2,4,6,8`.
    #[arg(long, value_delimiter = ',')]
    pub k_sweep: Option<Vec<usize>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Epoch cap for each tuning trial.
    #[arg(long)]
    pub tune_epochs: Option<usize>,
    /// Fixed hyperparameter JSON; skips tuning.
    #[arg(long)]
    pub hyperparams: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub tessellation: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
    /// First bin start to include (UTC); the series start by default.
    #[arg(long)]
    pub from: Option<String>,
    /// Exclusive end; the series end by default.
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}
