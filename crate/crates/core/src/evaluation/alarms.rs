use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{Alarm, SimilarityTrace};
use crate::error::{Error, Result};
use crate::synthgen::{AccidentType, GeneratedWell, NORMAL_MODE};
use crate::telemetry::{ChannelView, TICK_SECONDS};

/// A correctly typed alarm up to 4 hours before an accident is a detection.
pub const TP_BEFORE_TICKS: usize = 1440;
/// ... or up to 2 hours after it.
pub const TP_AFTER_TICKS: usize = 720;
/// False alarms closer than 1 hour to the previous counted one are merged into it.
pub const DEDUP_TICKS: usize = 360;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueEvent {
    pub accident_type: AccidentType,
    pub anchor_tick: usize,
}

impl TrueEvent {
    fn covers(&self, alarm: &Alarm) -> bool {
        let lo = self.anchor_tick.saturating_sub(TP_BEFORE_TICKS);
        let hi = self.anchor_tick + TP_AFTER_TICKS;
        (lo..=hi).contains(&alarm.tick)
    }
}

/// Ground truth of one replayed well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellEvents {
    pub well_id: String,
    pub duration_ticks: usize,
    pub events: Vec<TrueEvent>,
}

impl WellEvents {
    /// Ground truth of a generated well.
    pub fn from_generated(well: &GeneratedWell) -> Self {
        WellEvents {
            well_id: well.series.well_id().to_string(),
            duration_ticks: well.series.len(),
            events: well
                .events
                .iter()
                .map(|e| TrueEvent {
                    accident_type: e.accident_type,
                    anchor_tick: e.anchor_tick,
                })
                .collect(),
        }
    }

    pub fn days(&self) -> f64 {
        self.duration_ticks as f64 * TICK_SECONDS as f64 / 86_400.0
    }
}

/// Column order of the per-type counts in reports.
const REPORT_ORDER: [AccidentType; 6] = [
    AccidentType::Stuck,
    AccidentType::Washout,
    AccidentType::ShaleCollar,
    AccidentType::MudLoss,
    AccidentType::DrillstringBreak,
    AccidentType::FluidShow,
];

fn slot(t: AccidentType) -> usize {
    AccidentType::ALL.iter().position(|&a| a == t).expect("listed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellAlarmRow {
    pub well_id: String,
    pub true_types: Vec<AccidentType>,
    pub days: f64,
    /// Indexed in [`AccidentType::ALL`] order.
    pub tp: [u32; 6],
    pub fp: [u32; 6],
    /// Ticks of the alarms counted as false.
    pub fp_ticks: Vec<usize>,
}

impl WellAlarmRow {
    pub fn tp_of(&self, t: AccidentType) -> u32 {
        self.tp[slot(t)]
    }

    pub fn fp_of(&self, t: AccidentType) -> u32 {
        self.fp[slot(t)]
    }

    pub fn total_tp(&self) -> u32 {
        self.tp.iter().sum()
    }

    pub fn total_fp(&self) -> u32 {
        self.fp.iter().sum()
    }

    /// `normal_mode`, or the accident types with multiplicities, e.g. `washout 2 cases`.
    pub fn label(&self) -> String {
        if self.true_types.is_empty() {
            return NORMAL_MODE.to_string();
        }
        let mut counts: Vec<(AccidentType, usize)> = Vec::new();
        for &t in &self.true_types {
            match counts.iter_mut().find(|c| c.0 == t) {
                Some(c) => c.1 += 1,
                None => counts.push((t, 1)),
            }
        }
        counts
            .iter()
            .map(|&(t, n)| if n > 1 { format!("{t} {n} cases") } else { t.to_string() })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmScoreReport {
    pub rows: Vec<WellAlarmRow>,
}

impl AlarmScoreReport {
    pub fn total_tp(&self) -> u64 {
        self.rows.iter().map(|r| r.total_tp() as u64).sum()
    }

    pub fn total_fp(&self) -> u64 {
        self.rows.iter().map(|r| r.total_fp() as u64).sum()
    }

    pub fn total_days(&self) -> f64 {
        self.rows.iter().map(|r| r.days).sum()
    }

    pub fn total_events(&self) -> usize {
        self.rows.iter().map(|r| r.true_types.len()).sum()
    }
}

/// Scores the alarms of one well.
///
/// An event is detected (TP = 1, once) if an alarm of its type falls inside
/// its TP interval. Every other alarm, including in-window alarms of the wrong
/// type, is a false-alarm candidate; candidates within an hour of the previous
/// counted false alarm are merged into it. False alarms are attributed to the
/// alarm's voted type.
pub fn score_well(alarms: &[Alarm], well: &WellEvents) -> WellAlarmRow {
    let mut row = WellAlarmRow {
        well_id: well.well_id.clone(),
        true_types: well.events.iter().map(|e| e.accident_type).collect(),
        days: well.days(),
        tp: [0; 6],
        fp: [0; 6],
        fp_ticks: Vec::new(),
    };
    for e in &well.events {
        if alarms.iter().any(|a| a.voted_type == e.accident_type && e.covers(a)) {
            row.tp[slot(e.accident_type)] += 1;
        }
    }
    let mut candidates: Vec<&Alarm> = alarms
        .iter()
        .filter(|a| !well.events.iter().any(|e| e.accident_type == a.voted_type && e.covers(a)))
        .collect();
    candidates.sort_by_key(|a| a.tick);
    let mut last: Option<usize> = None;
    for a in candidates {
        if last.is_none_or(|l| a.tick >= l + DEDUP_TICKS) {
            row.fp[slot(a.voted_type)] += 1;
            row.fp_ticks.push(a.tick);
            last = Some(a.tick);
        }
    }
    row
}

/// Scores alarms of several wells; every alarm must belong to a listed well.
pub fn score_alarms(alarms: &[Alarm], wells: &[WellEvents]) -> Result<AlarmScoreReport> {
    let mut by_well: BTreeMap<&str, Vec<Alarm>> = BTreeMap::new();
    for a in alarms {
        if !wells.iter().any(|w| w.well_id == a.well_id) {
            return Err(Error::invalid(format!("alarm for unknown well {}", a.well_id)));
        }
        by_well.entry(a.well_id.as_str()).or_default().push(a.clone());
    }
    let rows = wells
        .iter()
        .map(|w| score_well(by_well.get(w.well_id.as_str()).map_or(&[], Vec::as_slice), w))
        .collect();
    Ok(AlarmScoreReport { rows })
}

/// ΣFP / Σdays.
pub fn false_alarms_per_day(report: &AlarmScoreReport) -> Result<f64> {
    let days = report.total_days();
    if !(days > 0.0) {
        return Err(Error::invalid("total signal duration is zero"));
    }
    Ok(report.total_fp() as f64 / days)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub total_tp: u64,
    pub total_fp: u64,
    pub tp_per_well: f64,
    pub fp_per_well: f64,
}

/// Alarm totals at each threshold, re-filtering stored similarity traces.
pub fn threshold_sweep(
    traces: &[SimilarityTrace],
    wells: &[WellEvents],
    thresholds: &[f64],
) -> Result<Vec<SweepRow>> {
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("thresholds must be strictly ascending"));
    }
    let n_wells = wells.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| {
            let alarms: Vec<Alarm> = traces.iter().flat_map(|tr| tr.alarms(t)).collect();
            let report = score_alarms(&alarms, wells)?;
            Ok(SweepRow {
                threshold: t,
                total_tp: report.total_tp(),
                total_fp: report.total_fp(),
                tp_per_well: report.total_tp() as f64 / n_wells,
                fp_per_well: report.total_fp() as f64 / n_wells,
            })
        })
        .collect()
}

/// Per-well report in the layout of the per-well alarm table: well, true
/// accident type, duration in days, then TP/FP per accident type.
pub fn write_report_csv<W: Write>(report: &AlarmScoreReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(format!("report csv: {e}"));
    let mut header = vec!["well_id".to_string(), "true_accident_type".into(), "total_days".into()];
    for t in REPORT_ORDER {
        header.push(format!("{t}_tp"));
        header.push(format!("{t}_fp"));
    }
    w.write_record(&header).map_err(err)?;
    let mut totals = ([0u64; 6], [0u64; 6]);
    for r in &report.rows {
        let mut rec = vec![r.well_id.clone(), r.label(), format!("{:.3}", r.days)];
        for t in REPORT_ORDER {
            rec.push(r.tp_of(t).to_string());
            rec.push(r.fp_of(t).to_string());
            totals.0[slot(t)] += r.tp_of(t) as u64;
            totals.1[slot(t)] += r.fp_of(t) as u64;
        }
        w.write_record(&rec).map_err(err)?;
    }
    let mut rec = vec!["total".to_string(), String::new(), format!("{:.3}", report.total_days())];
    for t in REPORT_ORDER {
        rec.push(totals.0[slot(t)].to_string());
        rec.push(totals.1[slot(t)].to_string());
    }
    w.write_record(&rec).map_err(err)?;
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(format!("sweep csv: {e}"));
    w.write_record(["threshold", "total_tp", "total_fp", "tp_per_well", "fp_per_well"])
        .map_err(err)?;
    for r in rows {
        w.write_record([
            r.threshold.to_string(),
            r.total_tp.to_string(),
            r.total_fp.to_string(),
            r.tp_per_well.to_string(),
            r.fp_per_well.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<WellEvents>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

pub fn write_events(events: &[WellEvents], path: impl AsRef<Path>) -> Result<()> {
    crate::lessons::write_json(path.as_ref(), events)
}
