//! Seeded synthetic data: a lead-lag grid city and a noisy sinusoid.
//!
//! City hotspots sit at the centers of a block of adjacent level-6 geohash
//! cells. Each hotspot's log-intensity deviation follows its four grid
//! neighbors' deviations one bin earlier, so neighbor series carry
//! information the region's own history lacks.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geo::{GeoBBox, LatLon};
use crate::ingest::{EventSet, GpsEvent, TimeWindow};
use crate::tessellation::geohash;

pub const CITY_PRECISION: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct CityConfig {
    pub cols: usize,
    pub rows: usize,
    /// Any point inside the south-west cell.
    pub anchor: LatLon,
    pub start: DateTime<Utc>,
    pub days: usize,
    /// Mean events per hotspot per hour.
    pub base_rate: f64,
    /// Weight on the mean neighbor deviation of the previous bin.
    pub coupling: f64,
    pub noise: f64,
    /// Relative amplitude of the daily cycle.
    pub seasonal_amplitude: f64,
    /// Event scatter as a fraction of the half cell size.
    pub spread: f64,
    pub seed: u64,
}

impl Default for CityConfig {
    fn default() -> Self {
        Self {
            cols: 6,
            rows: 5,
            anchor: LatLon::new(12.97, 77.59),
            start: Utc.with_ymd_and_hms(2016, 1, 4, 0, 0, 0).unwrap(),
            days: 8,
            base_rate: 40.0,
            coupling: 0.9,
            noise: 0.35,
            seasonal_amplitude: 0.5,
            spread: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCity {
    pub events: EventSet,
    /// Row-major, south to north then west to east.
    pub hotspots: Vec<LatLon>,
    /// Exactly the block of cells.
    pub bbox: GeoBBox,
    pub window: TimeWindow,
    /// Hourly counts per hotspot.
    pub counts: Vec<Vec<u64>>,
}

impl SyntheticCity {
    pub fn n_bins(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }
}

fn grid_neighbors(r: usize, c: usize, rows: usize, cols: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(4);
    if r > 0 {
        out.push((r - 1) * cols + c);
    }
    if r + 1 < rows {
        out.push((r + 1) * cols + c);
    }
    if c > 0 {
        out.push(r * cols + c - 1);
    }
    if c + 1 < cols {
        out.push(r * cols + c + 1);
    }
    out
}

pub fn lead_lag_city(cfg: &CityConfig) -> Result<SyntheticCity> {
    if cfg.cols == 0 || cfg.rows == 0 || cfg.days == 0 {
        return Err(Error::Argument("city needs at least one cell and one day".into()));
    }
    if !(cfg.spread > 0.0 && cfg.spread < 1.0) || !(cfg.base_rate > 0.0) || !(cfg.noise >= 0.0) {
        return Err(Error::Argument("spread must be in (0,1), base rate positive, noise non-negative".into()));
    }
    let cell = geohash::decode(&geohash::encode(cfg.anchor.lat, cfg.anchor.lon, CITY_PRECISION)?)?;
    let dlat = cell.max_lat - cell.min_lat;
    let dlon = cell.max_lon - cell.min_lon;
    let bbox = GeoBBox::new(
        cell.min_lat,
        cell.min_lon,
        cell.min_lat + dlat * cfg.rows as f64,
        cell.min_lon + dlon * cfg.cols as f64,
    )?;
    let n = cfg.rows * cfg.cols;
    let hotspots: Vec<LatLon> = (0..n)
        .map(|i| {
            let (r, c) = (i / cfg.cols, i % cfg.cols);
            LatLon::new(
                cell.min_lat + dlat * (r as f64 + 0.5),
                cell.min_lon + dlon * (c as f64 + 0.5),
            )
        })
        .collect();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| grid_neighbors(i / cfg.cols, i % cfg.cols, cfg.rows, cfg.cols)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eps = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("positive sd");
    let bins = cfg.days * 24;
    let burn_in = 48;
    let mut dev = vec![0.0; n];
    let mut counts = vec![Vec::with_capacity(bins); n];
    let mut events = Vec::new();
    let scale: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..1.4)).collect();
    for t in 0..bins + burn_in {
        let prev = dev.clone();
        for i in 0..n {
            let lead = if neighbors[i].is_empty() {
                0.0
            } else {
                neighbors[i].iter().map(|&j| prev[j]).sum::<f64>() / neighbors[i].len() as f64
            };
            dev[i] = cfg.coupling * lead + if cfg.noise > 0.0 { eps.sample(&mut rng) } else { 0.0 };
        }
        if t < burn_in {
            continue;
        }
        let bin = t - burn_in;
        let hour = (bin % 24) as f64;
        let season = 1.0 + cfg.seasonal_amplitude * (2.0 * std::f64::consts::PI * (hour - 6.0) / 24.0).sin();
        for i in 0..n {
            let lambda = cfg.base_rate * scale[i] * season * dev[i].exp();
            let k = Poisson::new(lambda).map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
            counts[i].push(k);
            let bin_start = cfg.start + Duration::hours(bin as i64);
            for _ in 0..k {
                let lat = hotspots[i].lat + rng.random_range(-1.0..1.0) * cfg.spread * dlat / 2.0;
                let lon = hotspots[i].lon + rng.random_range(-1.0..1.0) * cfg.spread * dlon / 2.0;
                let offset = rng.random_range(0..3600);
                events.push(GpsEvent {
                    lat,
                    lon,
                    timestamp: bin_start + Duration::seconds(offset),
                });
            }
        }
    }
    let window = TimeWindow::new(cfg.start, cfg.start + Duration::hours(bins as i64))?;
    Ok(SyntheticCity {
        events: EventSet::from_events(events)?,
        hotspots,
        bbox,
        window,
        counts,
    })
}

/// `offset + amplitude·sin(2πt/period)` plus Gaussian noise with sd `noise_frac·amplitude`.
pub fn noisy_sinusoid(n_bins: usize, period: usize, offset: f64, amplitude: f64, noise_frac: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, (noise_frac * amplitude).abs().max(f64::MIN_POSITIVE)).expect("positive sd");
    (0..n_bins)
        .map(|t| {
            let clean = offset + amplitude * (2.0 * std::f64::consts::PI * t as f64 / period as f64).sin();
            clean + if noise_frac > 0.0 { noise.sample(&mut rng) } else { 0.0 }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hotspots_fill_distinct_cells() {
        let cfg = CityConfig {
            days: 1,
            base_rate: 5.0,
            ..CityConfig::default()
        };
        let city = lead_lag_city(&cfg).unwrap();
        let codes: std::collections::BTreeSet<String> = city
            .hotspots
            .iter()
            .map(|h| geohash::encode(h.lat, h.lon, CITY_PRECISION).unwrap())
            .collect();
        assert_eq!(codes.len(), 30);
        assert_eq!(city.n_bins(), 24);
        let total: u64 = city.counts.iter().flatten().sum();
        assert_eq!(total as usize, city.events.len());
        assert!(city.events.events().iter().all(|e| city.bbox.contains(e.position()) && city.window.contains(e.timestamp)));
    }

    #[test]
    fn seeded_replay() {
        let cfg = CityConfig {
            days: 1,
            ..CityConfig::default()
        };
        assert_eq!(lead_lag_city(&cfg).unwrap().counts, lead_lag_city(&cfg).unwrap().counts);
        assert_eq!(noisy_sinusoid(48, 24, 10.0, 5.0, 0.05, 3), noisy_sinusoid(48, 24, 10.0, 5.0, 0.05, 3));
    }
}
