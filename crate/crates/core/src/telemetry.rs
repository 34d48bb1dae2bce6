//! MWD telemetry data model.
//!
//! A [`TelemetrySeries`] is a multichannel signal on a uniform 10-second tick
//! grid. Every channel carries an explicit missing mask next to its values; a
//! masked sample has no meaning and is never read by the statistics code.
//!
//! CSV ingestion snaps raw rows to the nearest tick relative to the first
//! timestamp (last write wins within a tick) and leaves unsampled ticks
//! missing. The writer emits one row per tick with integer epoch seconds, so
//! `parse_csv(write_csv(s))` reproduces `s` exactly.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per grid tick.
pub const TICK_SECONDS: u32 = 10;

/// Ticks in one canonical detection interval (2 hours).
pub const INTERVAL_TICKS: usize = 720;

/// MWD channels. The first nine are the canonical measurement set;
/// `TankVolume` is an extension written by the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelId {
    /// m
    BitDepth,
    /// kN·m
    RotorTorque,
    /// t
    HookWeight,
    /// MPa
    InputPressure,
    /// rpm
    RotationSpeed,
    /// L/s
    InputFlow,
    /// m
    BottomholeDepth,
    /// %
    GasContent,
    /// t
    WeightOnBit,
    /// m³, extension channel
    TankVolume,
}

impl ChannelId {
    pub const CANONICAL: [ChannelId; 9] = [
        ChannelId::BitDepth,
        ChannelId::RotorTorque,
        ChannelId::HookWeight,
        ChannelId::InputPressure,
        ChannelId::RotationSpeed,
        ChannelId::InputFlow,
        ChannelId::BottomholeDepth,
        ChannelId::GasContent,
        ChannelId::WeightOnBit,
    ];

    pub const ALL: [ChannelId; 10] = [
        ChannelId::BitDepth,
        ChannelId::RotorTorque,
        ChannelId::HookWeight,
        ChannelId::InputPressure,
        ChannelId::RotationSpeed,
        ChannelId::InputFlow,
        ChannelId::BottomholeDepth,
        ChannelId::GasContent,
        ChannelId::WeightOnBit,
        ChannelId::TankVolume,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::BitDepth => "bit_depth",
            ChannelId::RotorTorque => "rotor_torque",
            ChannelId::HookWeight => "hook_weight",
            ChannelId::InputPressure => "input_pressure",
            ChannelId::RotationSpeed => "rotation_speed",
            ChannelId::InputFlow => "input_flow",
            ChannelId::BottomholeDepth => "bottomhole_depth",
            ChannelId::GasContent => "gas_content",
            ChannelId::WeightOnBit => "weight_on_bit",
            ChannelId::TankVolume => "tank_volume",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }

    pub fn is_extension(self) -> bool {
        self == ChannelId::TankVolume
    }

    pub fn is_depth(self) -> bool {
        matches!(self, ChannelId::BitDepth | ChannelId::BottomholeDepth)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Values and missing mask of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl ChannelData {
    pub fn observed(values: Vec<f64>) -> Self {
        let missing = vec![false; values.len()];
        ChannelData { values, missing }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Read access to a block of ticks across channels.
///
/// Implemented by whole series and by interval views, so feature extraction
/// and distortion work on either.
pub trait ChannelView {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(values, missing)` for the channel, or `None` if the channel is absent.
    fn channel(&self, id: ChannelId) -> Option<(&[f64], &[bool])>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySeries {
    well_id: String,
    start_time: i64,
    length: usize,
    channels: BTreeMap<ChannelId, ChannelData>,
}

impl TelemetrySeries {
    /// Builds a series, checking that every channel has `length` samples.
    /// Values under a missing mask are zeroed.
    pub fn new(
        well_id: impl Into<String>,
        start_time: i64,
        length: usize,
        mut channels: BTreeMap<ChannelId, ChannelData>,
    ) -> Result<Self> {
        for (id, data) in channels.iter_mut() {
            if data.values.len() != length || data.missing.len() != length {
                return Err(Error::invalid(format!(
                    "channel {id} has {} values / {} mask entries, series length is {length}",
                    data.values.len(),
                    data.missing.len()
                )));
            }
            for (v, &m) in data.values.iter_mut().zip(&data.missing) {
                if m {
                    *v = 0.0;
                }
            }
        }
        Ok(TelemetrySeries {
            well_id: well_id.into(),
            start_time,
            length,
            channels,
        })
    }

    pub fn well_id(&self) -> &str {
        &self.well_id
    }

    /// UTC epoch seconds of tick 0.
    pub fn start_time(&self) -> i64 {
        self.start_time
    }

    pub fn tick_seconds(&self) -> u32 {
        TICK_SECONDS
    }

    pub fn time_of(&self, tick: usize) -> i64 {
        self.start_time + tick as i64 * TICK_SECONDS as i64
    }

    pub fn channel_ids(&self) -> impl Iterator<Item = ChannelId> + '_ {
        self.channels.keys().copied()
    }

    pub fn channel_data(&self, id: ChannelId) -> Option<&ChannelData> {
        self.channels.get(&id)
    }

    pub fn value(&self, id: ChannelId, tick: usize) -> Option<f64> {
        let data = self.channels.get(&id)?;
        match data.missing.get(tick) {
            Some(false) => Some(data.values[tick]),
            _ => None,
        }
    }

    /// Copy of `[start, end)` as a standalone series.
    pub fn materialize(&self, start: usize, end: usize) -> Result<TelemetrySeries> {
        let iv = slice_interval(self, start, end)?;
        Ok(iv.to_series())
    }

    /// Series truncated to its first `length` ticks.
    pub fn truncated(&self, length: usize) -> TelemetrySeries {
        let length = length.min(self.length);
        let channels = self
            .channels
            .iter()
            .map(|(&id, d)| {
                (
                    id,
                    ChannelData {
                        values: d.values[..length].to_vec(),
                        missing: d.missing[..length].to_vec(),
                    },
                )
            })
            .collect();
        TelemetrySeries {
            well_id: self.well_id.clone(),
            start_time: self.start_time,
            length,
            channels,
        }
    }

    pub(crate) fn into_channels(self) -> BTreeMap<ChannelId, ChannelData> {
        self.channels
    }
}

impl ChannelView for TelemetrySeries {
    fn len(&self) -> usize {
        self.length
    }

    fn channel(&self, id: ChannelId) -> Option<(&[f64], &[bool])> {
        self.channels
            .get(&id)
            .map(|d| (d.values.as_slice(), d.missing.as_slice()))
    }
}

/// Half-open tick range `[start_tick, end_tick)` borrowed from a series.
#[derive(Debug, Clone, Copy)]
pub struct Interval<'a> {
    series: &'a TelemetrySeries,
    start_tick: usize,
    end_tick: usize,
}

impl<'a> Interval<'a> {
    pub fn series(&self) -> &'a TelemetrySeries {
        self.series
    }

    pub fn start_tick(&self) -> usize {
        self.start_tick
    }

    pub fn end_tick(&self) -> usize {
        self.end_tick
    }

    pub fn to_series(&self) -> TelemetrySeries {
        let channels = self
            .series
            .channels
            .iter()
            .map(|(&id, d)| {
                (
                    id,
                    ChannelData {
                        values: d.values[self.start_tick..self.end_tick].to_vec(),
                        missing: d.missing[self.start_tick..self.end_tick].to_vec(),
                    },
                )
            })
            .collect();
        TelemetrySeries {
            well_id: self.series.well_id.clone(),
            start_time: self.series.time_of(self.start_tick),
            length: self.end_tick - self.start_tick,
            channels,
        }
    }
}

impl ChannelView for Interval<'_> {
    fn len(&self) -> usize {
        self.end_tick - self.start_tick
    }

    fn channel(&self, id: ChannelId) -> Option<(&[f64], &[bool])> {
        self.series.channels.get(&id).map(|d| {
            (
                &d.values[self.start_tick..self.end_tick],
                &d.missing[self.start_tick..self.end_tick],
            )
        })
    }
}

pub fn slice_interval(
    series: &TelemetrySeries,
    start_tick: usize,
    end_tick: usize,
) -> Result<Interval<'_>> {
    if start_tick >= end_tick || end_tick > series.length {
        return Err(Error::invalid(format!(
            "interval [{start_tick}, {end_tick}) out of range for series of {} ticks",
            series.length
        )));
    }
    Ok(Interval {
        series,
        start_tick,
        end_tick,
    })
}

/// Fraction of masked ticks of `channel` within the view.
pub fn missing_fraction<V: ChannelView + ?Sized>(view: &V, channel: ChannelId) -> Result<f64> {
    let (_, missing) = view
        .channel(channel)
        .ok_or_else(|| Error::invalid(format!("channel {channel} not present")))?;
    if missing.is_empty() {
        return Ok(0.0);
    }
    let n = missing.iter().filter(|&&m| m).count();
    Ok(n as f64 / missing.len() as f64)
}

/// Maps CSV header names onto channels.
#[derive(Debug, Clone)]
pub struct Schema {
    names: HashMap<String, ChannelId>,
}

impl Schema {
    /// Header names equal to the channel names (`bit_depth`, `rotor_torque`, ...).
    pub fn canonical() -> Self {
        Schema {
            names: ChannelId::ALL
                .iter()
                .map(|&c| (c.name().to_string(), c))
                .collect(),
        }
    }

    pub fn with_alias(mut self, header: impl Into<String>, channel: ChannelId) -> Self {
        self.names.insert(header.into(), channel);
        self
    }

    pub fn resolve(&self, header: &str) -> Option<ChannelId> {
        self.names.get(header.trim()).copied()
    }
}

impl Default for Schema {
    fn default() -> Self {
        Self::canonical()
    }
}

fn parse_timestamp(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs as f64);
    }
    if let Ok(secs) = raw.parse::<f64>() {
        if secs.is_finite() {
            return Some(secs);
        }
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            let utc = dt.and_utc();
            return Some(utc.timestamp() as f64 + utc.timestamp_subsec_nanos() as f64 * 1e-9);
        }
    }
    None
}

/// Reads a telemetry CSV (`time,<channel names...>`) onto the tick grid.
///
/// The well id is the file stem. Unknown columns are ignored with a warning.
pub fn parse_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<TelemetrySeries> {
    let path = path.as_ref();
    let well_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    parse_csv_reader(file, &well_id, schema, path)
}

fn parse_csv_reader<R: std::io::Read>(
    reader: R,
    well_id: &str,
    schema: &Schema,
    path: &Path,
) -> Result<TelemetrySeries> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.get(0).map(str::trim) != Some("time") {
        return Err(parse_err(1, "first column must be `time`".into()));
    }
    // (column index, channel)
    let mut columns = Vec::new();
    for (idx, name) in headers.iter().enumerate().skip(1) {
        match schema.resolve(name) {
            Some(ch) => {
                if columns.iter().any(|&(_, c)| c == ch) {
                    return Err(parse_err(1, format!("channel {ch} mapped twice")));
                }
                columns.push((idx, ch));
            }
            None => log::warn!("{}: unknown channel `{name}` ignored", path.display()),
        }
    }

    let mut rows: Vec<(f64, Vec<Option<f64>>)> = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let t = parse_timestamp(&record[0])
            .ok_or_else(|| parse_err(line, format!("bad timestamp `{}`", &record[0])))?;
        if t < last_time {
            return Err(parse_err(line, "timestamps are not monotone".into()));
        }
        last_time = t;
        let mut vals = Vec::with_capacity(columns.len());
        for &(idx, ch) in &columns {
            let cell = record.get(idx).unwrap_or("");
            if cell.is_empty() {
                vals.push(None);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad value `{cell}` for {ch}")))?;
                vals.push(v.is_finite().then_some(v));
            }
        }
        rows.push((t, vals));
    }

    let start_time = rows.first().map(|r| r.0.round() as i64).unwrap_or(0);
    let tick_of = |t: f64| ((t - start_time as f64) / TICK_SECONDS as f64).round().max(0.0) as usize;
    let length = rows.last().map(|r| tick_of(r.0) + 1).unwrap_or(0);

    let mut channels: BTreeMap<ChannelId, ChannelData> = columns
        .iter()
        .map(|&(_, ch)| {
            (
                ch,
                ChannelData {
                    values: vec![0.0; length],
                    missing: vec![true; length],
                },
            )
        })
        .collect();
    for (t, vals) in &rows {
        let tick = tick_of(*t);
        for (&(_, ch), v) in columns.iter().zip(vals) {
            let data = channels.get_mut(&ch).expect("column channel");
            // Last write wins, including an empty cell overwriting a value.
            match v {
                Some(v) => {
                    data.values[tick] = *v;
                    data.missing[tick] = false;
                }
                None => {
                    data.values[tick] = 0.0;
                    data.missing[tick] = true;
                }
            }
        }
    }
    TelemetrySeries::new(well_id, start_time, length, channels)
}

/// Writes the series in the telemetry CSV format: one row per tick, integer
/// epoch seconds, empty cells for missing samples.
pub fn write_csv(series: &TelemetrySeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_csv_to(series, &mut out).map_err(|e| Error::io(path, e))
}

pub fn write_csv_to<W: std::io::Write>(series: &TelemetrySeries, out: &mut W) -> std::io::Result<()> {
    let ids: Vec<ChannelId> = series.channel_ids().collect();
    let mut line = String::from("time");
    for id in &ids {
        line.push(',');
        line.push_str(id.name());
    }
    writeln!(out, "{line}")?;
    for tick in 0..series.length {
        line.clear();
        line.push_str(&series.time_of(tick).to_string());
        for &id in &ids {
            line.push(',');
            if let Some(v) = series.value(id, tick) {
                line.push_str(&v.to_string());
            }
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}
