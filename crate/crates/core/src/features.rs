//! Per-region time series, correlation-ranked spatial neighbors, and the
//! supervised tensors fed to the forecaster.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EventSet, TimeWindow};
use crate::tessellation::Tessellation;

/// Event counts per region (rows) and uniform time bin (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMatrix {
    pub region_ids: Vec<usize>,
    pub t0: DateTime<Utc>,
    pub bin_width_seconds: i64,
    n_bins: usize,
    counts: Vec<u64>,
}

impl SeriesMatrix {
    pub fn new(region_ids: Vec<usize>, t0: DateTime<Utc>, bin_width: Duration, rows: Vec<Vec<u64>>) -> Result<Self> {
        if rows.len() != region_ids.len() {
            return Err(Error::Shape {
                expected: region_ids.len(),
                got: rows.len(),
            });
        }
        let n_bins = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_bins) {
            return Err(Error::Shape {
                expected: n_bins,
                got: bad.len(),
            });
        }
        if bin_width <= Duration::zero() {
            return Err(Error::Argument("bin width must be positive".into()));
        }
        Ok(Self {
            region_ids,
            t0,
            bin_width_seconds: bin_width.num_seconds(),
            n_bins,
            counts: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_width(&self) -> Duration {
        Duration::seconds(self.bin_width_seconds)
    }

    pub fn row(&self, region: usize) -> &[u64] {
        &self.counts[region * self.n_bins..(region + 1) * self.n_bins]
    }

    pub fn row_f64(&self, region: usize) -> Vec<f64> {
        self.row(region).iter().map(|&c| c as f64).collect()
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.n_regions()).map(|r| self.row_f64(r)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_total(&self, region: usize) -> u64 {
        self.row(region).iter().sum()
    }

    /// Text export: a `# t0=…;bin_width_seconds=…` line, a header, then one row per region.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<series sink>", e);
        let mut buf = String::new();
        writeln!(buf, "# t0={};bin_width_seconds={}", self.t0.to_rfc3339(), self.bin_width_seconds).unwrap();
        buf.push_str("region_id");
        for b in 0..self.n_bins {
            write!(buf, ",b{b}").unwrap();
        }
        buf.push('\n');
        w.write_all(buf.as_bytes()).map_err(io)?;
        for (r, id) in self.region_ids.iter().enumerate() {
            buf.clear();
            write!(buf, "{id}").unwrap();
            for c in self.row(r) {
                write!(buf, ",{c}").unwrap();
            }
            buf.push('\n');
            w.write_all(buf.as_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<Option<String>> {
            lines.next().transpose().map_err(|e| Error::io("<series source>", e))
        };
        let meta = next()?.ok_or_else(|| Error::Data("empty series file".into()))?;
        let meta = meta
            .strip_prefix("# ")
            .ok_or_else(|| Error::Data("series file must start with a '# t0=…' line".into()))?;
        let mut t0 = None;
        let mut width = None;
        for part in meta.split(';') {
            match part.split_once('=') {
                Some(("t0", v)) => {
                    t0 = Some(
                        DateTime::parse_from_rfc3339(v)
                            .map_err(|e| Error::Data(format!("bad t0 {v:?}: {e}")))?
                            .with_timezone(&Utc),
                    )
                }
                Some(("bin_width_seconds", v)) => {
                    width = Some(v.parse::<i64>().map_err(|e| Error::Data(format!("bad bin width {v:?}: {e}")))?)
                }
                _ => {}
            }
        }
        let (t0, width) = match (t0, width) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Data("series header needs t0 and bin_width_seconds".into())),
        };
        next()?.ok_or_else(|| Error::Data("series file lacks a column header".into()))?;
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        while let Some(line) = next()? {
            if line.trim().is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            let id = cells
                .next()
                .and_then(|c| c.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Data(format!("bad region id in {line:?}")))?;
            let row = cells
                .map(|c| c.trim().parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data(format!("bad count in region {id}: {e}")))?;
            ids.push(id);
            rows.push(row);
        }
        Self::new(ids, t0, Duration::seconds(width), rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub series: SeriesMatrix,
    /// Events inside the window that no region covers (geohash gaps).
    pub unassigned: usize,
    pub outside_window: usize,
}

/// Bins events per region over `[window.start, window.end)` with half-open bins.
pub fn aggregate(events: &EventSet, tess: &Tessellation, bin_width: Duration, window: TimeWindow) -> Result<Aggregation> {
    let width = bin_width.num_seconds();
    if width <= 0 {
        return Err(Error::Argument("bin width must be positive".into()));
    }
    let span = window.duration().num_seconds();
    if span <= 0 || span % width != 0 {
        return Err(Error::Argument(format!(
            "window of {span} s is not a whole number of {width} s bins"
        )));
    }
    let n_bins = (span / width) as usize;
    let n = tess.len();
    let located: Vec<Option<(usize, usize)>> = events
        .events()
        .par_iter()
        .map(|e| {
            if !window.contains(e.timestamp) {
                return None;
            }
            let bin = ((e.timestamp - window.start).num_seconds() / width) as usize;
            Some((tess.locate(e.position()).unwrap_or(usize::MAX), bin))
        })
        .collect();

    let mut counts = vec![0u64; n * n_bins];
    let (mut unassigned, mut outside) = (0, 0);
    for loc in located {
        match loc {
            None => outside += 1,
            Some((usize::MAX, _)) => unassigned += 1,
            Some((region, bin)) => counts[region * n_bins + bin] += 1,
        }
    }
    Ok(Aggregation {
        series: SeriesMatrix {
            region_ids: (0..n).collect(),
            t0: window.start,
            bin_width_seconds: width,
            n_bins,
            counts,
        },
        unassigned,
        outside_window: outside,
    })
}

/// Sample Pearson coefficient; `None` when either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Argument("pearson needs at least two observations".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

/// Train / validation / test partition of the bin axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub total_bins: usize,
    /// End of the fitting segment (exclusive); validation follows it.
    pub train_end: usize,
    /// End of validation = start of the test day.
    pub val_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Train,
    Validation,
    Test,
}

impl SplitSpec {
    /// Holds out the last `test_bins` for testing and the last `val_fraction`
    /// (rounded) of the remaining training bins for validation.
    pub fn new(total_bins: usize, test_bins: usize, val_fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::Argument(format!("validation fraction {val_fraction} not in [0,1)")));
        }
        if test_bins == 0 || test_bins >= total_bins {
            return Err(Error::Argument(format!(
                "{test_bins} test bins leave no training data out of {total_bins}"
            )));
        }
        let training = total_bins - test_bins;
        let val = (val_fraction * training as f64).round() as usize;
        if val == 0 || val >= training {
            return Err(Error::Argument(format!(
                "validation share of {training} training bins is empty or total"
            )));
        }
        Ok(Self {
            total_bins,
            train_end: training - val,
            val_end: training,
        })
    }

    /// One test day of 24 hourly bins and 10 % validation.
    pub fn daily(total_bins: usize) -> Result<Self> {
        Self::new(total_bins, 24, 0.1)
    }

    pub fn range(&self, seg: Segment) -> std::ops::Range<usize> {
        match seg {
            Segment::Train => 0..self.train_end,
            Segment::Validation => self.train_end..self.val_end,
            Segment::Test => self.val_end..self.total_bins,
        }
    }

    /// Bins used to fit correlations and normalization: everything before the test day.
    pub fn training_bins(&self) -> std::ops::Range<usize> {
        0..self.val_end
    }
}

/// Up to `k` ranked neighbors of one region; `None` slots are padding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NeighborRow {
    pub neighbors: Vec<Option<usize>>,
    pub correlations: Vec<Option<f64>>,
}

impl NeighborRow {
    pub fn pad_mask(&self) -> Vec<bool> {
        self.neighbors.iter().map(Option::is_none).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborMap {
    pub k: usize,
    pub rows: Vec<NeighborRow>,
}

#[derive(Serialize)]
struct NeighborExport {
    neighbors: Vec<usize>,
    mask: Vec<bool>,
}

impl NeighborMap {
    /// `{ "region_id": { "neighbors": [...], "mask": [...] } }`
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<usize, NeighborExport> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                (
                    i,
                    NeighborExport {
                        neighbors: r.neighbors.iter().flatten().copied().collect(),
                        mask: r.pad_mask(),
                    },
                )
            })
            .collect();
        serde_json::to_value(map).expect("plain data")
    }
}

fn check_alignment(series: &SeriesMatrix, tess: &Tessellation) -> Result<()> {
    if series.n_regions() != tess.len() || series.region_ids.iter().enumerate().any(|(i, &id)| i != id) {
        return Err(Error::Data(format!(
            "series regions ({}) do not match the tessellation's {} dense ids",
            series.n_regions(),
            tess.len()
        )));
    }
    Ok(())
}

/// First-order neighbors with positive training-period correlation, best first,
/// ties to the lower id, padded to `k` slots.
pub fn rank_neighbors(series: &SeriesMatrix, tess: &Tessellation, region_id: usize, k: usize, split: &SplitSpec) -> Result<NeighborRow> {
    check_alignment(series, tess)?;
    if split.total_bins != series.n_bins() {
        return Err(Error::Shape {
            expected: series.n_bins(),
            got: split.total_bins,
        });
    }
    let fit = split.training_bins();
    let own = &series.row_f64(region_id)[fit.clone()];
    let mut scored: Vec<(f64, usize)> = Vec::new();
    for j in tess.neighbors(region_id)? {
        if j == region_id {
            continue;
        }
        let other = &series.row_f64(j)[fit.clone()];
        if let Some(r) = pearson(own, other)? {
            if r > 0.0 {
                scored.push((r, j));
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    let mut row = NeighborRow {
        neighbors: scored.iter().map(|s| Some(s.1)).collect(),
        correlations: scored.iter().map(|s| Some(s.0)).collect(),
    };
    row.neighbors.resize(k, None);
    row.correlations.resize(k, None);
    Ok(row)
}

pub fn rank_all(series: &SeriesMatrix, tess: &Tessellation, k: usize, split: &SplitSpec) -> Result<NeighborMap> {
    let rows = (0..series.n_regions())
        .map(|r| rank_neighbors(series, tess, r, k, split))
        .collect::<Result<Vec<_>>>()?;
    Ok(NeighborMap { k, rows })
}

/// Min-max record fitted on the training bins of one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
    /// Training series was constant; normalized values are all zero.
    pub constant: bool,
}

impl Normalization {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            min,
            max,
            constant: !(max > min),
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if self.constant {
            self.min
        } else {
            v * (self.max - self.min) + self.min
        }
    }
}

/// Region-major `(regions, bins, features)` tensor; feature 0 is the region's own series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTensor {
    pub n_regions: usize,
    pub n_bins: usize,
    pub n_features: usize,
    values: Vec<f64>,
    pub norms: Vec<Normalization>,
    /// Per region, which of the `n_features − 1` neighbor slots are padding.
    pub pad_mask: Vec<Vec<bool>>,
}

impl FeatureTensor {
    pub fn get(&self, region: usize, bin: usize, feature: usize) -> f64 {
        self.values[(region * self.n_bins + bin) * self.n_features + feature]
    }

    /// Contiguous `W × s` slice covering bins `[t − w, t)` of one region.
    pub fn window(&self, region: usize, t: usize, w: usize) -> &[f64] {
        let s = self.n_features;
        let base = region * self.n_bins;
        &self.values[(base + t - w) * s..(base + t) * s]
    }

    /// Normalized own-series value, the regression label.
    pub fn label(&self, region: usize, t: usize) -> f64 {
        self.get(region, t, 0)
    }

    pub fn k(&self) -> usize {
        self.n_features - 1
    }

    /// Regions whose training series was constant.
    pub fn constant_regions(&self) -> Vec<usize> {
        self.norms
            .iter()
            .enumerate()
            .filter(|(_, n)| n.constant)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Self series plus the first `k` ranked neighbor series, each min-max
/// normalized with its own training-period record.
pub fn build_tensor(rows: &[Vec<f64>], neighbor_map: &NeighborMap, k: usize, split: &SplitSpec) -> Result<FeatureTensor> {
    if k > 8 {
        return Err(Error::Argument(format!("k = {k} exceeds 8 neighbor slots")));
    }
    if k > neighbor_map.k {
        return Err(Error::Argument(format!(
            "k = {k} exceeds the {} ranked slots",
            neighbor_map.k
        )));
    }
    let n = rows.len();
    if neighbor_map.rows.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: neighbor_map.rows.len(),
        });
    }
    let t = rows.first().map_or(0, Vec::len);
    if t != split.total_bins || rows.iter().any(|r| r.len() != t) {
        return Err(Error::Shape {
            expected: split.total_bins,
            got: t,
        });
    }
    let fit = split.training_bins();
    let norms: Vec<Normalization> = rows.iter().map(|r| Normalization::fit(&r[fit.clone()])).collect();
    let normalized: Vec<Vec<f64>> = rows
        .iter()
        .zip(&norms)
        .map(|(r, nm)| r.iter().map(|&x| nm.normalize(x)).collect())
        .collect();

    let s = 1 + k;
    let mut values = vec![0.0; n * t * s];
    let mut pad_mask = Vec::with_capacity(n);
    for region in 0..n {
        let slots = &neighbor_map.rows[region].neighbors[..k];
        for bin in 0..t {
            let base = (region * t + bin) * s;
            values[base] = normalized[region][bin];
            for (f, slot) in slots.iter().enumerate() {
                if let Some(j) = slot {
                    values[base + 1 + f] = normalized[*j][bin];
                }
            }
        }
        pad_mask.push(slots.iter().map(Option::is_none).collect());
    }
    Ok(FeatureTensor {
        n_regions: n,
        n_bins: t,
        n_features: s,
        values,
        norms,
        pad_mask,
    })
}

/// One supervised pair: inputs are bins `[target − W, target)` of `region`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub region: usize,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    pub lookback: usize,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Windows {
    pub fn segment(&self, seg: Segment) -> &[Sample] {
        match seg {
            Segment::Train => &self.train,
            Segment::Validation => &self.validation,
            Segment::Test => &self.test,
        }
    }
}

/// Targets in each segment for which the whole lookback lies inside `[0, t)`.
/// Lookbacks may reach back into earlier segments.
pub fn make_windows(tensor: &FeatureTensor, split: &SplitSpec, lookback: usize) -> Result<Windows> {
    if lookback == 0 {
        return Err(Error::Argument("lookback must be at least 1".into()));
    }
    if lookback >= split.train_end {
        return Err(Error::Argument(format!(
            "lookback {lookback} leaves no training targets in {} bins",
            split.train_end
        )));
    }
    if tensor.n_bins != split.total_bins {
        return Err(Error::Shape {
            expected: tensor.n_bins,
            got: split.total_bins,
        });
    }
    let collect = |seg: Segment| -> Vec<Sample> {
        let range = split.range(seg);
        (0..tensor.n_regions)
            .flat_map(|region| {
                range
                    .clone()
                    .filter(move |&t| t >= lookback)
                    .map(move |target| Sample { region, target })
            })
            .collect()
    };
    Ok(Windows {
        lookback,
        train: collect(Segment::Train),
        validation: collect(Segment::Validation),
        test: collect(Segment::Test),
    })
}
