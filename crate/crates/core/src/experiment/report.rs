use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::HyperParams;
use crate::metrics::{GroupReport, Summary};

/// Mean of each metric for one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub smape: Option<f64>,
    pub mase: Option<f64>,
    pub rmse: Option<f64>,
}

impl MetricMeans {
    fn of(g: &GroupReport) -> Self {
        Self {
            smape: g.smape.mean,
            mase: g.mase.mean,
            rmse: g.rmse.mean,
        }
    }
}

/// One `(dataset, tessellation)` line: the k = 0 model against the best spatial k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub kind: String,
    pub configuration: String,
    pub plain: Option<MetricMeans>,
    pub spatial: Option<MetricMeans>,
    /// Spatial k with the lowest mean MASE.
    pub best_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub config_hash: String,
    pub code_version: String,
    /// Test-horizon length N in bins.
    pub horizon: usize,
    pub seasonal_period: usize,
    pub region_reduction: String,
    pub smape_form: String,
    pub regions: BTreeMap<String, usize>,
    pub hyperparams: BTreeMap<String, HyperParams>,
    pub runs: usize,
    pub failed: usize,
    pub groups: Vec<GroupReport>,
    pub table: Vec<TableRow>,
}

/// Table rows from aggregated groups; `labels` maps kind to its configuration label.
pub fn table_rows(groups: &[GroupReport], labels: &BTreeMap<String, String>) -> Vec<TableRow> {
    let mut by_key: BTreeMap<(String, String), Vec<&GroupReport>> = BTreeMap::new();
    for g in groups {
        by_key.entry((g.dataset.clone(), g.kind.clone())).or_default().push(g);
    }
    by_key
        .into_iter()
        .map(|((dataset, kind), gs)| {
            let plain = gs.iter().find(|g| g.k == 0).map(|g| MetricMeans::of(g));
            let best = gs
                .iter()
                .filter(|g| g.k > 0)
                .filter_map(|g| g.mase.mean.map(|m| (m, g.k, *g)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            TableRow {
                configuration: labels.get(&kind).cloned().unwrap_or_default(),
                dataset,
                kind,
                plain,
                spatial: best.map(|b| MetricMeans::of(b.2)),
                best_k: best.map(|b| b.1),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Table layout plus a per-k section with mean and standard deviation.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
        out.write_record([
            format!("# config_hash={}", self.config_hash),
            format!("code_version={}", self.code_version),
            format!("horizon={}", self.horizon),
            format!("seasonal_period={}", self.seasonal_period),
            format!("reduction={}", self.region_reduction),
        ])?;
        out.write_record([
            "dataset",
            "tessellation",
            "configuration",
            "lstm_smape",
            "lstm_mase",
            "lstm_rmse",
            "spatial_smape",
            "spatial_mase",
            "spatial_rmse",
            "best_k",
        ])?;
        for r in &self.table {
            let p = r.plain.unwrap_or(MetricMeans {
                smape: None,
                mase: None,
                rmse: None,
            });
            let s = r.spatial.unwrap_or(MetricMeans {
                smape: None,
                mase: None,
                rmse: None,
            });
            out.write_record([
                r.dataset.clone(),
                r.kind.clone(),
                r.configuration.clone(),
                cell(p.smape),
                cell(p.mase),
                cell(p.rmse),
                cell(s.smape),
                cell(s.mase),
                cell(s.rmse),
                r.best_k.map_or_else(String::new, |k| format!("[{k}]")),
            ])?;
        }
        out.write_record([
            "dataset",
            "tessellation",
            "k",
            "runs",
            "failed",
            "smape_mean",
            "smape_std",
            "mase_mean",
            "mase_std",
            "mase_undefined",
            "rmse_mean",
            "rmse_std",
        ])?;
        for g in &self.groups {
            out.write_record([
                g.dataset.clone(),
                g.kind.clone(),
                g.k.to_string(),
                g.runs.to_string(),
                g.failed.to_string(),
                cell(g.smape.mean),
                cell(g.smape.std),
                cell(g.mase.mean),
                cell(g.mase.std),
                g.mase.undefined.to_string(),
                cell(g.rmse.mean),
                cell(g.rmse.std),
            ])?;
        }
        out.flush().map_err(|e| Error::io("report.csv", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `b − a`.
    pub delta: Option<f64>,
    /// `(a − b)/a · 100`: positive when `b` has the lower error.
    pub improvement_pct: Option<f64>,
    /// `None` when either side is undefined.
    pub winner: Option<Winner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub dataset: String,
    pub k: usize,
    pub metrics: Vec<MetricDelta>,
}

fn metric_delta(metric: &str, a: &Summary, b: &Summary) -> MetricDelta {
    let (a, b) = (a.mean, b.mean);
    let (delta, improvement_pct, winner) = match (a, b) {
        (Some(x), Some(y)) => (
            Some(y - x),
            (x != 0.0).then(|| (x - y) / x * 100.0),
            Some(match y.total_cmp(&x) {
                std::cmp::Ordering::Less => Winner::B,
                std::cmp::Ordering::Greater => Winner::A,
                std::cmp::Ordering::Equal => Winner::Tie,
            }),
        ),
        _ => (None, None, None),
    };
    MetricDelta {
        metric: metric.to_string(),
        a,
        b,
        delta,
        improvement_pct,
        winner,
    }
}

fn keyed(groups: &[GroupReport], side: &str) -> Result<BTreeMap<(String, usize), GroupReport>> {
    let mut map = BTreeMap::new();
    for g in groups {
        if map.insert((g.dataset.clone(), g.k), g.clone()).is_some() {
            return Err(Error::Argument(format!(
                "report {side} has several rows for dataset {:?} k={}; select one tessellation",
                g.dataset, g.k
            )));
        }
    }
    Ok(map)
}

/// Matches rows on `(dataset, k)`; lower is better for every metric.
pub fn compare(a: &[GroupReport], b: &[GroupReport]) -> Result<Vec<DeltaRow>> {
    let a = keyed(a, "a")?;
    let b = keyed(b, "b")?;
    let rows: Vec<DeltaRow> = a
        .iter()
        .filter_map(|(key, ga)| {
            let gb = b.get(key)?;
            Some(DeltaRow {
                dataset: key.0.clone(),
                k: key.1,
                metrics: vec![
                    metric_delta("smape", &ga.smape, &gb.smape),
                    metric_delta("mase", &ga.mase, &gb.mase),
                    metric_delta("rmse", &ga.rmse, &gb.rmse),
                ],
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Data("reports share no (dataset, k) rows".into()));
    }
    Ok(rows)
}

/// Groups of one tessellation kind, or all groups when the report holds a single kind.
pub fn select_kind(report: &Report, kind: Option<&str>) -> Result<Vec<GroupReport>> {
    match kind {
        Some(k) => {
            let gs: Vec<GroupReport> = report.groups.iter().filter(|g| g.kind == k).cloned().collect();
            if gs.is_empty() {
                return Err(Error::Argument(format!("report has no rows for tessellation {k:?}")));
            }
            Ok(gs)
        }
        None => Ok(report.groups.clone()),
    }
}

pub fn write_compare_csv<W: Write>(rows: &[DeltaRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["dataset", "k", "metric", "a", "b", "delta", "improvement_pct", "winner"])?;
    for r in rows {
        for m in &r.metrics {
            out.write_record([
                r.dataset.clone(),
                r.k.to_string(),
                m.metric.clone(),
                cell(m.a),
                cell(m.b),
                cell(m.delta),
                cell(m.improvement_pct),
                m.winner.map_or("undefined", |w| match w {
                    Winner::A => "a",
                    Winner::B => "b",
                    Winner::Tie => "tie",
                })
                .to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io("compare output", e))?;
    Ok(())
}
