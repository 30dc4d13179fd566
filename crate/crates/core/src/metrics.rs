//! Forecast error metrics and their aggregation over repeated runs.
//!
//! SMAPE uses the `|y − ŷ| / (ŷ + y + 1)` form: no factor of two and a
//! unit guard in the denominator. A run's metric is the unweighted mean over
//! regions of the per-region value on the test day.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Daily seasonality at hourly bins.
pub const SEASONAL_PERIOD: usize = 24;

/// Recorded in every report.
pub const REGION_REDUCTION: &str = "unweighted mean over regions of per-region test-day metrics";

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Shape {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Argument("metrics need at least one value".into()));
    }
    Ok(())
}

/// Percentage, `(100/N)·Σ |y − ŷ| / (ŷ + y + 1)`.
pub fn smape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let sum: f64 = y.iter().zip(y_hat).map(|(a, f)| (a - f).abs() / (f + a + 1.0)).sum();
    Ok(100.0 * sum / y.len() as f64)
}

/// Test MAE over the in-sample MAE of the lag-`m` naive forecast; `None` when the latter is 0.
pub fn mase(y: &[f64], y_hat: &[f64], insample: &[f64], m: usize) -> Result<Option<f64>> {
    check_pair(y, y_hat)?;
    if m == 0 || insample.len() <= m {
        return Err(Error::Argument(format!(
            "in-sample series of length {} is too short for seasonal period {m}",
            insample.len()
        )));
    }
    let naive: f64 = insample.windows(m + 1).map(|w| (w[m] - w[0]).abs()).sum::<f64>() / (insample.len() - m) as f64;
    if naive == 0.0 {
        return Ok(None);
    }
    let mae: f64 = y.iter().zip(y_hat).map(|(a, f)| (a - f).abs()).sum::<f64>() / y.len() as f64;
    Ok(Some(mae / naive))
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let mse: f64 = y.iter().zip(y_hat).map(|(a, f)| (a - f).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

/// One run's metrics; `mase` is `None` when every region's MASE was undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub smape: f64,
    pub mase: Option<f64>,
    pub rmse: f64,
    /// Regions left out of the MASE mean.
    pub mase_undefined_regions: usize,
}

/// Scores per-region forecasts against actuals; `insample[r]` is region `r`'s training series.
pub fn score_regions(actual: &[Vec<f64>], forecast: &[Vec<f64>], insample: &[Vec<f64>], m: usize) -> Result<RunMetrics> {
    if actual.is_empty() || actual.len() != forecast.len() || actual.len() != insample.len() {
        return Err(Error::Shape {
            expected: actual.len(),
            got: forecast.len().min(insample.len()),
        });
    }
    let n = actual.len() as f64;
    let mut s = 0.0;
    let mut r = 0.0;
    let mut mases = Vec::new();
    for ((y, f), z) in actual.iter().zip(forecast).zip(insample) {
        s += smape(y, f)?;
        r += rmse(y, f)?;
        if let Some(v) = mase(y, f, z, m)? {
            mases.push(v);
        }
    }
    Ok(RunMetrics {
        smape: s / n,
        mase: (!mases.is_empty()).then(|| mases.iter().sum::<f64>() / mases.len() as f64),
        rmse: r / n,
        mase_undefined_regions: actual.len() - mases.len(),
    })
}

/// Sample mean and (n−1) standard deviation over defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
    pub undefined: usize,
}

impl Summary {
    pub fn of(values: &[Option<f64>]) -> Self {
        let mut defined: Vec<f64> = values.iter().flatten().copied().collect();
        // order-independent summation
        defined.sort_by(f64::total_cmp);
        let n = defined.len();
        let undefined = values.len() - n;
        if n == 0 {
            return Self {
                mean: None,
                std: None,
                n,
                undefined,
            };
        }
        let mean = defined.iter().sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            (defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            mean: Some(mean),
            std: Some(std),
            n,
            undefined,
        }
    }

    pub fn single_run(&self) -> bool {
        self.n == 1
    }
}

/// Aggregated metrics for one (data set, tessellation kind, k) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub dataset: String,
    pub kind: String,
    pub k: usize,
    pub runs: usize,
    pub failed: usize,
    pub smape: Summary,
    pub mase: Summary,
    pub rmse: Summary,
}

/// Group key plus one run's result; `None` marks a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub kind: String,
    pub k: usize,
    pub repeat: usize,
    pub metrics: Option<RunMetrics>,
}

/// Groups runs by `(dataset, kind, k)` in sorted key order.
pub fn aggregate_runs(runs: &[RunRecord]) -> Result<Vec<GroupReport>> {
    use std::collections::BTreeMap;
    if runs.is_empty() {
        return Err(Error::Argument("no runs to aggregate".into()));
    }
    let mut groups: BTreeMap<(String, String, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.dataset.clone(), r.kind.clone(), r.k)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((dataset, kind, k), rs)| {
            let ok: Vec<&RunMetrics> = rs.iter().filter_map(|r| r.metrics.as_ref()).collect();
            GroupReport {
                dataset,
                kind,
                k,
                runs: ok.len(),
                failed: rs.len() - ok.len(),
                smape: Summary::of(&ok.iter().map(|m| Some(m.smape)).collect::<Vec<_>>()),
                mase: Summary::of(&ok.iter().map(|m| m.mase).collect::<Vec<_>>()),
                rmse: Summary::of(&ok.iter().map(|m| Some(m.rmse)).collect::<Vec<_>>()),
            }
        })
        .collect())
}
