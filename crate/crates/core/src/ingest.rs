//! Delimited-text GPS event ingestion and study-window filtering.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Duration, FixedOffset, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoBBox, LatLon};

pub const DEFAULT_TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// One demand (or supply) observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsEvent {
    pub lat: f64,
    pub lon: f64,
    pub timestamp: DateTime<Utc>,
}

impl GpsEvent {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if start >= end {
            return Err(Error::Argument(format!("empty or inverted window {start} .. {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t < self.end
    }

    pub fn duration(&self) -> Duration {
        self.end - self.start
    }
}

/// Accepts RFC 3339 or `YYYY-MM-DD[ T]HH:MM:SS` (taken as UTC) or a bare date.
pub fn parse_instant(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(Error::Argument(format!("unrecognised instant {s:?}")))
}

/// Column mapping and text conventions for an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub lat_col: String,
    pub lon_col: String,
    pub time_col: String,
    pub delimiter: u8,
    pub time_format: String,
    /// Fixed offset of the input clock from UTC, in seconds.
    pub utc_offset_seconds: i32,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            lat_col: "pickup_latitude".into(),
            lon_col: "pickup_longitude".into(),
            time_col: "pickup_datetime".into(),
            delimiter: b',',
            time_format: DEFAULT_TIME_FORMAT.into(),
            utc_offset_seconds: 0,
        }
    }
}

impl Schema {
    fn offset(&self) -> Result<FixedOffset> {
        FixedOffset::east_opt(self.utc_offset_seconds)
            .ok_or_else(|| Error::Argument(format!("bad utc offset {}", self.utc_offset_seconds)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Unreadable,
    MissingField,
    UnparseableCoordinate,
    CoordinateOutOfRange,
    NullIsland,
    UnparseableTimestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub total_rows: usize,
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl ParseReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

/// Validated events, sorted by timestamp, all inside `bbox` and `window`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    events: Vec<GpsEvent>,
    bbox: GeoBBox,
    window: Option<TimeWindow>,
}

impl EventSet {
    /// Sorts the events and derives the tightest enclosing window; the box is the whole globe.
    pub fn from_events(mut events: Vec<GpsEvent>) -> Result<Self> {
        if let Some(bad) = events.iter().find(|e| !e.position().is_valid()) {
            return Err(Error::Data(format!("invalid coordinate {},{}", bad.lat, bad.lon)));
        }
        events.sort_by_key(|e| e.timestamp);
        let window = match (events.first(), events.last()) {
            (Some(a), Some(b)) => Some(TimeWindow {
                start: a.timestamp,
                end: b.timestamp + Duration::seconds(1),
            }),
            _ => None,
        };
        Ok(Self {
            events,
            bbox: GeoBBox::WORLD,
            window,
        })
    }

    pub fn empty() -> Self {
        Self {
            events: Vec::new(),
            bbox: GeoBBox::WORLD,
            window: None,
        }
    }

    pub fn events(&self) -> &[GpsEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn bbox(&self) -> GeoBBox {
        self.bbox
    }

    /// `None` for an empty set built from a file.
    pub fn window(&self) -> Option<TimeWindow> {
        self.window
    }

    pub fn positions(&self) -> Vec<LatLon> {
        self.events.iter().map(GpsEvent::position).collect()
    }
}

/// Result of [`parse_events`].
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub events: EventSet,
    pub report: ParseReport,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header")))
}

/// Parses delimiter-separated text with a header row. Bad rows are counted, never fatal.
pub fn parse_events<R: Read>(source: R, schema: &Schema) -> Result<Parsed> {
    let offset = schema.offset()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let lat_i = column_index(&headers, &schema.lat_col)?;
    let lon_i = column_index(&headers, &schema.lon_col)?;
    let time_i = column_index(&headers, &schema.time_col)?;

    let mut report = ParseReport::default();
    let mut events = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                report.total_rows += 1;
                match parse_row(&record, lat_i, lon_i, time_i, schema, &offset) {
                    Ok(ev) => events.push(ev),
                    Err(reason) => *report.dropped.entry(reason).or_default() += 1,
                }
            }
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                report.total_rows += 1;
                *report.dropped.entry(DropReason::Unreadable).or_default() += 1;
            }
        }
    }
    report.kept = events.len();
    Ok(Parsed {
        events: EventSet::from_events(events)?,
        report,
    })
}

fn parse_row(
    record: &csv::StringRecord,
    lat_i: usize,
    lon_i: usize,
    time_i: usize,
    schema: &Schema,
    offset: &FixedOffset,
) -> std::result::Result<GpsEvent, DropReason> {
    let field = |i: usize| record.get(i).map(str::trim).filter(|s| !s.is_empty());
    let (lat_s, lon_s, time_s) = match (field(lat_i), field(lon_i), field(time_i)) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(DropReason::MissingField),
    };
    let lat: f64 = lat_s.parse().map_err(|_| DropReason::UnparseableCoordinate)?;
    let lon: f64 = lon_s.parse().map_err(|_| DropReason::UnparseableCoordinate)?;
    if !LatLon::new(lat, lon).is_valid() {
        return Err(DropReason::CoordinateOutOfRange);
    }
    if lat == 0.0 && lon == 0.0 {
        return Err(DropReason::NullIsland);
    }
    let naive = NaiveDateTime::parse_from_str(time_s, &schema.time_format)
        .map_err(|_| DropReason::UnparseableTimestamp)?;
    let timestamp = offset
        .from_local_datetime(&naive)
        .single()
        .ok_or(DropReason::UnparseableTimestamp)?
        .with_timezone(&Utc);
    Ok(GpsEvent { lat, lon, timestamp })
}

/// Writes events in the input format of `schema` (inverse of [`parse_events`]).
pub fn write_events<W: Write>(events: &EventSet, schema: &Schema, sink: W) -> Result<()> {
    let offset = schema.offset()?;
    let mut w = csv::WriterBuilder::new()
        .delimiter(schema.delimiter)
        .from_writer(sink);
    w.write_record([&schema.time_col, &schema.lat_col, &schema.lon_col])?;
    for e in events.events() {
        let local = e.timestamp.with_timezone(&offset).naive_local();
        w.write_record([
            local.format(&schema.time_format).to_string(),
            e.lat.to_string(),
            e.lon.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<event sink>", e))?;
    Ok(())
}

/// Keeps exactly the events inside both `bbox` and `window`, preserving order.
pub fn filter_window(events: &EventSet, bbox: GeoBBox, window: TimeWindow) -> Result<EventSet> {
    bbox.validate()?;
    if window.start >= window.end {
        return Err(Error::Argument("inverted time window".into()));
    }
    let kept = events
        .events
        .iter()
        .filter(|e| bbox.contains(e.position()) && window.contains(e.timestamp))
        .copied()
        .collect();
    Ok(EventSet {
        events: kept,
        bbox,
        window: Some(window),
    })
}
