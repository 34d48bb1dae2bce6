//! Seeded generator of synthetic MWD wells with injected accident signatures.
//!
//! A well is a schedule of drilling operations, each with its own baseline
//! regime, plus smooth correlated noise (moving-average-filtered white noise).
//! Each planned accident injects its signature into the 720 ticks before its
//! anchor and holds the final state until the end of the operation segment.
//!
//! Signatures, with amplitude `snr × noise_std(channel) × weight`:
//!
//! | accident           | signature                                                      |
//! |--------------------|----------------------------------------------------------------|
//! | stuck              | growing drags/slack-offs on hook weight, pack-off pressure surges, torque spikes, bit stops moving in the last 20 min |
//! | washout            | input pressure ramps down, flow unchanged                      |
//! | drillstring break  | sharp drop of pressure and hook weight in the last 10 min      |
//! | mud loss           | pressure steps down at mid-window, tank volume starts falling  |
//! | shale collar       | torque and pressure ramp up at constant flow                   |
//! | fluid show         | gas content rises (accelerating), tank volume rises, pressure eases |
//!
//! The shale-collar signature and every magnitude are generator choices.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{ChannelData, ChannelId, TelemetrySeries, INTERVAL_TICKS};

/// Default signature strength relative to baseline noise.
pub const DEFAULT_SNR: f64 = 3.0;

/// Width of the moving average that shapes baseline noise, in ticks.
pub const NOISE_SMOOTHING_TICKS: usize = 10;

/// Fixed epoch of synthetic wells (2020-01-01T00:00:00Z); well `i` starts `i` days later.
pub const SYNTHETIC_EPOCH: i64 = 1_577_836_800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationType {
    TrippingIn,
    TrippingOut,
    Drilling,
    Cleaning,
    Reaming,
}

impl OperationType {
    pub const ALL: [OperationType; 5] = [
        OperationType::TrippingIn,
        OperationType::TrippingOut,
        OperationType::Drilling,
        OperationType::Cleaning,
        OperationType::Reaming,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperationType::TrippingIn => "tripping_in",
            OperationType::TrippingOut => "tripping_out",
            OperationType::Drilling => "drilling",
            OperationType::Cleaning => "cleaning",
            OperationType::Reaming => "reaming",
        }
    }

    fn rotating(self) -> bool {
        !self.tripping()
    }

    fn tripping(self) -> bool {
        matches!(self, OperationType::TrippingIn | OperationType::TrippingOut)
    }
}

impl fmt::Display for OperationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccidentType {
    Stuck,
    Washout,
    DrillstringBreak,
    MudLoss,
    ShaleCollar,
    FluidShow,
}

impl AccidentType {
    pub const ALL: [AccidentType; 6] = [
        AccidentType::Stuck,
        AccidentType::Washout,
        AccidentType::DrillstringBreak,
        AccidentType::MudLoss,
        AccidentType::ShaleCollar,
        AccidentType::FluidShow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AccidentType::Stuck => "stuck",
            AccidentType::Washout => "washout",
            AccidentType::DrillstringBreak => "drillstring_break",
            AccidentType::MudLoss => "mud_loss",
            AccidentType::ShaleCollar => "shale_collar",
            AccidentType::FluidShow => "fluid_show",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.name() == name)
    }
}

impl fmt::Display for AccidentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Label used in reports for wells without accidents.
pub const NORMAL_MODE: &str = "normal_mode";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub operation: OperationType,
    pub start_tick: usize,
    pub end_tick: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedAccident {
    pub accident_type: AccidentType,
    pub anchor_tick: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellPlan {
    pub seed: u64,
    pub well_id: String,
    pub oilfield_id: u32,
    pub start_time: i64,
    pub duration_ticks: usize,
    pub schedule: Vec<Segment>,
    pub accidents: Vec<PlannedAccident>,
    pub snr: f64,
}

/// Accident actually present in a generated well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub accident_type: AccidentType,
    pub operation: OperationType,
    pub anchor_tick: usize,
}

impl WellPlan {
    pub fn validate(&self) -> Result<()> {
        if self.duration_ticks == 0 {
            return Err(Error::invalid("well duration must be positive"));
        }
        let mut cursor = 0;
        for seg in &self.schedule {
            if seg.start_tick != cursor || seg.end_tick <= seg.start_tick {
                return Err(Error::invalid(format!(
                    "schedule segment [{}, {}) does not continue from tick {cursor}",
                    seg.start_tick, seg.end_tick
                )));
            }
            cursor = seg.end_tick;
        }
        if cursor != self.duration_ticks {
            return Err(Error::invalid(format!(
                "schedule covers {cursor} ticks, duration is {}",
                self.duration_ticks
            )));
        }
        for acc in &self.accidents {
            if acc.anchor_tick < INTERVAL_TICKS {
                return Err(Error::invalid(format!(
                    "accident anchor {} leaves no full {INTERVAL_TICKS}-tick lesson window",
                    acc.anchor_tick
                )));
            }
            if acc.anchor_tick > self.duration_ticks {
                return Err(Error::invalid(format!(
                    "accident anchor {} beyond well end {}",
                    acc.anchor_tick, self.duration_ticks
                )));
            }
        }
        if !(self.snr >= 0.0) {
            return Err(Error::invalid("snr must be non-negative"));
        }
        Ok(())
    }

    /// Operation in effect at `tick` (the last tick if `tick` is the end).
    pub fn operation_at(&self, tick: usize) -> Option<OperationType> {
        let t = tick.min(self.duration_ticks.saturating_sub(1));
        self.schedule
            .iter()
            .find(|s| s.start_tick <= t && t < s.end_tick)
            .map(|s| s.operation)
    }

    fn segment_index_at(&self, tick: usize) -> usize {
        let t = tick.min(self.duration_ticks - 1);
        self.schedule
            .iter()
            .position(|s| s.start_tick <= t && t < s.end_tick)
            .expect("validated schedule covers every tick")
    }

    /// Random plan hosting the given accidents, each inside a segment of its
    /// operation, separated by accident-free stretches of at least 2160 ticks.
    pub fn random(
        seed: u64,
        well_id: impl Into<String>,
        oilfield_id: u32,
        accidents: &[(AccidentType, OperationType)],
        min_duration: usize,
    ) -> WellPlan {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_9A7E);
        let mut schedule = Vec::new();
        let mut planned = Vec::new();
        let mut cursor = 0;
        let push_baseline = |rng: &mut ChaCha8Rng, schedule: &mut Vec<Segment>, cursor: &mut usize, span: usize| {
            let end = *cursor + span;
            while *cursor < end {
                let len = rng.random_range(360..=1080).min(end - *cursor);
                let len = if end - *cursor - len < 180 { end - *cursor } else { len };
                schedule.push(Segment {
                    operation: random_operation(rng),
                    start_tick: *cursor,
                    end_tick: *cursor + len,
                });
                *cursor += len;
            }
        };
        let lead = rng.random_range(2880..=4320);
        push_baseline(&mut rng, &mut schedule, &mut cursor, lead);
        for &(accident_type, operation) in accidents {
            let pre = rng.random_range(120..=480);
            let post = rng.random_range(360..=720);
            let start = cursor;
            cursor += pre + INTERVAL_TICKS + post;
            schedule.push(Segment {
                operation,
                start_tick: start,
                end_tick: cursor,
            });
            planned.push(PlannedAccident {
                accident_type,
                anchor_tick: start + pre + INTERVAL_TICKS,
            });
            let gap = rng.random_range(2160..=2880);
            push_baseline(&mut rng, &mut schedule, &mut cursor, gap);
        }
        if cursor < min_duration {
            let extra = min_duration - cursor;
            push_baseline(&mut rng, &mut schedule, &mut cursor, extra);
        }
        merge_adjacent(&mut schedule);
        WellPlan {
            seed,
            well_id: well_id.into(),
            oilfield_id,
            start_time: SYNTHETIC_EPOCH,
            duration_ticks: cursor,
            schedule,
            accidents: planned,
            snr: DEFAULT_SNR,
        }
    }
}

fn merge_adjacent(schedule: &mut Vec<Segment>) {
    let mut out: Vec<Segment> = Vec::with_capacity(schedule.len());
    for seg in schedule.drain(..) {
        match out.last_mut() {
            Some(prev) if prev.operation == seg.operation => prev.end_tick = seg.end_tick,
            _ => out.push(seg),
        }
    }
    *schedule = out;
}

fn random_operation(rng: &mut ChaCha8Rng) -> OperationType {
    // Drilling dominates rig time; the rest share the remainder.
    match rng.random_range(0..10) {
        0..=3 => OperationType::Drilling,
        4 | 5 => OperationType::TrippingIn,
        6 | 7 => OperationType::TrippingOut,
        8 => OperationType::Cleaning,
        _ => OperationType::Reaming,
    }
}

/// Standard deviation of the baseline noise per channel.
pub fn noise_std(channel: ChannelId) -> f64 {
    match channel {
        ChannelId::BitDepth => 0.02,
        ChannelId::RotorTorque => 0.4,
        ChannelId::HookWeight => 0.8,
        ChannelId::InputPressure => 0.12,
        ChannelId::RotationSpeed => 1.5,
        ChannelId::InputFlow => 0.3,
        ChannelId::BottomholeDepth => 0.0,
        ChannelId::GasContent => 0.01,
        ChannelId::WeightOnBit => 0.3,
        ChannelId::TankVolume => 0.1,
    }
}

/// Per-well operating parameters.
#[derive(Debug, Clone)]
struct Regime {
    hole_depth: f64,
    rop: f64,
    rpm: f64,
    torque: f64,
    wob: f64,
    flow: f64,
    pressure: f64,
    trip_flow: f64,
    trip_pressure: f64,
    gas: f64,
    tank: f64,
    /// Hook load of the hanging string per metre of bit depth (t/m).
    string_weight_per_m: f64,
}

const BLOCK_WEIGHT: f64 = 15.0;
const TRIP_CYCLE: usize = 60;
const TRIP_MOVING: usize = 24;
const STAND_LENGTH: f64 = 25.0;

impl Regime {
    fn draw(rng: &mut ChaCha8Rng, oilfield_id: u32) -> Regime {
        // Oilfield sets the broad character; each well varies around it.
        let field = ChaCha8Rng::seed_from_u64(0xF1E1D ^ oilfield_id as u64).random_range(0.0..1.0);
        let pressure = 8.0 + 8.0 * field + rng.random_range(-1.5..1.5);
        Regime {
            hole_depth: rng.random_range(1500.0..3000.0),
            rop: rng.random_range(0.03..0.07),
            rpm: rng.random_range(60.0..110.0),
            torque: rng.random_range(6.0..14.0),
            wob: rng.random_range(6.0..14.0),
            flow: rng.random_range(28.0..40.0),
            pressure,
            trip_flow: rng.random_range(6.0..9.0),
            trip_pressure: rng.random_range(1.5..3.0),
            gas: rng.random_range(0.05..0.3),
            tank: rng.random_range(40.0..80.0),
            string_weight_per_m: 0.03 + 0.01 * field + rng.random_range(0.0..0.005),
        }
    }

    fn string_weight(&self, bit: f64) -> f64 {
        20.0 + self.string_weight_per_m * bit
    }
}

/// Unit-variance noise smoothed by a centered moving average.
fn smooth_noise(rng: &mut ChaCha8Rng, len: usize, width: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len + width).map(|_| rng.sample(StandardNormal)).collect();
    let scale = (width as f64).sqrt();
    let mut out = Vec::with_capacity(len);
    let mut acc: f64 = raw[..width].iter().sum();
    for t in 0..len {
        out.push(acc / width as f64 * scale);
        acc += raw[t + width] - raw[t];
    }
    out
}

/// Baseline channel values of the whole well before noise.
struct Baseline {
    values: BTreeMap<ChannelId, Vec<f64>>,
    /// Channels forced to exactly zero (no rotation or load while tripping).
    silent: BTreeMap<ChannelId, Vec<bool>>,
}

fn baseline(plan: &WellPlan, regime: &Regime, rng: &mut ChaCha8Rng) -> Baseline {
    let n = plan.duration_ticks;
    let mut values: BTreeMap<ChannelId, Vec<f64>> =
        ChannelId::ALL.iter().map(|&c| (c, vec![0.0; n])).collect();
    let mut silent: BTreeMap<ChannelId, Vec<bool>> = [
        ChannelId::RotationSpeed,
        ChannelId::RotorTorque,
        ChannelId::WeightOnBit,
    ]
    .iter()
    .map(|&c| (c, vec![false; n]))
    .collect();

    let mut hole = regime.hole_depth;
    let mut bit = hole;
    for seg in &plan.schedule {
        let len = seg.end_tick - seg.start_tick;
        let jitter = |rng: &mut ChaCha8Rng| rng.random_range(0.9..1.1);
        let (rop, rpm, torque, wob, flow) = (
            regime.rop * jitter(rng),
            regime.rpm * jitter(rng),
            regime.torque * jitter(rng),
            regime.wob * jitter(rng),
            regime.flow * jitter(rng),
        );
        let pressure = regime.pressure * flow / regime.flow;
        let phase = rng.random_range(0.0..2.0 * PI);
        let travel = STAND_LENGTH * (len as f64 / TRIP_CYCLE as f64).ceil();
        match seg.operation {
            OperationType::TrippingIn => {
                bit = bit.min(hole - travel - 10.0).max(30.0);
            }
            OperationType::TrippingOut => {
                bit = bit.max(travel + 30.0).min(hole);
            }
            OperationType::Reaming => {
                bit = (hole - 0.05 * len as f64 - 10.0).max(30.0);
            }
            OperationType::Cleaning | OperationType::Drilling => bit = hole,
        }
        for k in 0..len {
            let t = seg.start_tick + k;
            let slow = (2.0 * PI * k as f64 / 900.0 + phase).sin();
            let mut set = |c: ChannelId, v: f64| values.get_mut(&c).unwrap()[t] = v;
            match seg.operation {
                OperationType::Drilling => {
                    hole += rop * (1.0 + 0.2 * slow);
                    bit = hole;
                    set(ChannelId::RotationSpeed, rpm);
                    set(ChannelId::RotorTorque, torque);
                    set(ChannelId::WeightOnBit, wob);
                    set(ChannelId::HookWeight, regime.string_weight(bit) - wob);
                    set(ChannelId::InputFlow, flow);
                    set(ChannelId::InputPressure, pressure);
                }
                OperationType::Cleaning => {
                    bit = hole - 8.0 + 4.0 * (2.0 * PI * k as f64 / 120.0 + phase).sin();
                    set(ChannelId::RotationSpeed, 0.7 * rpm);
                    set(ChannelId::RotorTorque, 0.6 * torque);
                    set(ChannelId::WeightOnBit, 0.0);
                    set(ChannelId::HookWeight, regime.string_weight(bit));
                    set(ChannelId::InputFlow, flow);
                    set(ChannelId::InputPressure, 0.95 * pressure);
                }
                OperationType::Reaming => {
                    bit += 0.05;
                    set(ChannelId::RotationSpeed, 0.8 * rpm);
                    set(ChannelId::RotorTorque, 0.8 * torque);
                    set(ChannelId::WeightOnBit, 1.5);
                    set(ChannelId::HookWeight, regime.string_weight(bit) - 1.5);
                    set(ChannelId::InputFlow, flow);
                    set(ChannelId::InputPressure, pressure);
                }
                OperationType::TrippingIn | OperationType::TrippingOut => {
                    let moving = k % TRIP_CYCLE < TRIP_MOVING;
                    let dir = if seg.operation == OperationType::TrippingIn { 1.0 } else { -1.0 };
                    if moving {
                        bit += dir * STAND_LENGTH / TRIP_MOVING as f64;
                    }
                    // Running in drags the string light, pulling out heavy.
                    let drag = if dir > 0.0 { -2.0 } else { 3.0 };
                    let hook = if moving { regime.string_weight(bit) + drag } else { BLOCK_WEIGHT };
                    set(ChannelId::HookWeight, hook);
                    set(ChannelId::InputFlow, regime.trip_flow);
                    set(ChannelId::InputPressure, regime.trip_pressure);
                    for c in [ChannelId::RotationSpeed, ChannelId::RotorTorque, ChannelId::WeightOnBit] {
                        silent.get_mut(&c).unwrap()[t] = true;
                    }
                }
            }
            let mut set = |c: ChannelId, v: f64| values.get_mut(&c).unwrap()[t] = v;
            set(ChannelId::BitDepth, bit);
            set(ChannelId::BottomholeDepth, hole);
            set(ChannelId::GasContent, regime.gas * (1.0 + 0.1 * slow));
            set(ChannelId::TankVolume, regime.tank);
        }
    }
    Baseline { values, silent }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Adds the accident signature to `values` over `[anchor − 720, hold_end)`.
fn inject(
    values: &mut BTreeMap<ChannelId, Vec<f64>>,
    accident: AccidentType,
    operation: OperationType,
    anchor: usize,
    hold_end: usize,
    snr: f64,
) {
    let start = anchor - INTERVAL_TICKS;
    let amp = |c: ChannelId, weight: f64| snr * noise_std(c) * weight;
    let w = INTERVAL_TICKS as f64;
    let freeze_from = anchor.saturating_sub(120);
    let frozen_bit = values[&ChannelId::BitDepth][freeze_from];
    let frozen_hole = values[&ChannelId::BottomholeDepth][freeze_from];
    for t in start..hold_end {
        // Progress through the lesson window in (0, 1]; held at 1 after the anchor.
        let k = (t - start) as f64;
        let u = ((k + 1.0) / w).min(1.0);
        let mut add = |c: ChannelId, dv: f64| values.get_mut(&c).unwrap()[t] += dv;
        match accident {
            AccidentType::Stuck => {
                let square = if (t - start) / 20 % 2 == 0 { 1.0 } else { -1.0 };
                add(ChannelId::HookWeight, amp(ChannelId::HookWeight, 3.0) * u * square);
                if operation.rotating() {
                    let spikes = (2.0 * PI * k / 30.0).sin().abs();
                    add(ChannelId::RotorTorque, amp(ChannelId::RotorTorque, 4.0) * u * spikes);
                }
                // pack-off: circulating pressure surges with each overpull
                add(ChannelId::InputPressure, amp(ChannelId::InputPressure, 3.0) * u * (1.0 + square) / 2.0);
                if t >= freeze_from {
                    values.get_mut(&ChannelId::BitDepth).unwrap()[t] = frozen_bit;
                    if operation == OperationType::Drilling {
                        values.get_mut(&ChannelId::BottomholeDepth).unwrap()[t] = frozen_hole;
                    }
                }
            }
            AccidentType::Washout => {
                add(ChannelId::InputPressure, -amp(ChannelId::InputPressure, 4.0) * u);
            }
            AccidentType::DrillstringBreak => {
                let s = smoothstep((k - (w - 60.0)) / 6.0);
                add(ChannelId::InputPressure, -amp(ChannelId::InputPressure, 6.0) * s);
                add(ChannelId::HookWeight, -amp(ChannelId::HookWeight, 8.0) * s);
                if operation.rotating() {
                    add(ChannelId::RotorTorque, -amp(ChannelId::RotorTorque, 4.0) * s);
                }
            }
            AccidentType::MudLoss => {
                let s = smoothstep((k - w / 2.0) / 20.0);
                let fall = ((k - w / 2.0) / (w / 2.0)).clamp(0.0, 1.0);
                add(ChannelId::InputPressure, -amp(ChannelId::InputPressure, 4.0) * s);
                add(ChannelId::TankVolume, -amp(ChannelId::TankVolume, 20.0) * fall);
            }
            AccidentType::ShaleCollar => {
                add(ChannelId::InputPressure, amp(ChannelId::InputPressure, 4.0) * u);
                if operation.rotating() {
                    add(ChannelId::RotorTorque, amp(ChannelId::RotorTorque, 4.0) * u);
                } else {
                    add(ChannelId::HookWeight, amp(ChannelId::HookWeight, 3.0) * u);
                }
            }
            AccidentType::FluidShow => {
                add(ChannelId::GasContent, amp(ChannelId::GasContent, 8.0) * u * u);
                add(ChannelId::TankVolume, amp(ChannelId::TankVolume, 10.0) * u);
                add(ChannelId::InputPressure, -amp(ChannelId::InputPressure, 2.0) * u);
            }
        }
    }
}

/// Generates the telemetry of one well and the events it contains.
pub fn generate_well(plan: &WellPlan) -> Result<(TelemetrySeries, Vec<GroundTruthEvent>)> {
    plan.validate()?;
    let n = plan.duration_ticks;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let regime = Regime::draw(&mut rng, plan.oilfield_id);
    let Baseline { mut values, silent } = baseline(plan, &regime, &mut rng);

    let mut events = Vec::with_capacity(plan.accidents.len());
    for acc in &plan.accidents {
        let seg = &plan.schedule[plan.segment_index_at(acc.anchor_tick.saturating_sub(1))];
        let hold_end = seg.end_tick.max(acc.anchor_tick).min(n);
        inject(&mut values, acc.accident_type, seg.operation, acc.anchor_tick, hold_end, plan.snr);
        events.push(GroundTruthEvent {
            accident_type: acc.accident_type,
            operation: seg.operation,
            anchor_tick: acc.anchor_tick,
        });
    }

    let mut channels = BTreeMap::new();
    for (&c, base) in &values {
        let noise = smooth_noise(&mut rng, n, NOISE_SMOOTHING_TICKS);
        let sd = noise_std(c);
        let quiet = silent.get(&c);
        let vals: Vec<f64> = (0..n)
            .map(|t| {
                if quiet.is_some_and(|q| q[t]) {
                    return 0.0;
                }
                let v = base[t] + sd * noise[t];
                // Sensor resolution.
                (v * 1e4).round() / 1e4
            })
            .collect();
        let mut missing = vec![false; n];
        if rng.random_bool(0.3) {
            for _ in 0..rng.random_range(1..=3) {
                let len = rng.random_range(10..=120).min(n);
                let at = rng.random_range(0..=n - len);
                missing[at..at + len].iter_mut().for_each(|m| *m = true);
            }
        }
        channels.insert(c, ChannelData { values: vals, missing });
    }
    // Occasionally a well has no weight-on-bit sensor at all.
    if rng.random_bool(0.08) {
        let d = channels.get_mut(&ChannelId::WeightOnBit).unwrap();
        d.missing.iter_mut().for_each(|m| *m = true);
    }
    let series = TelemetrySeries::new(plan.well_id.clone(), plan.start_time, n, channels)?;
    Ok((series, events))
}

/// Requested lesson counts per (accident, operation) cell.
pub type Composition = BTreeMap<(AccidentType, OperationType), usize>;

/// Breakdown of the reference accident database: 94 lessons.
pub fn table1_composition() -> Composition {
    use AccidentType::*;
    use OperationType::*;
    let rows: [(AccidentType, [usize; 5]); 6] = [
        (Stuck, [18, 11, 10, 0, 1]),
        (Washout, [1, 1, 10, 1, 0]),
        (DrillstringBreak, [1, 2, 4, 6, 0]),
        (MudLoss, [2, 2, 6, 0, 1]),
        (ShaleCollar, [0, 0, 9, 0, 0]),
        (FluidShow, [0, 3, 5, 0, 0]),
    ];
    let ops = [TrippingIn, TrippingOut, Drilling, Cleaning, Reaming];
    let mut c = Composition::new();
    for (acc, counts) in rows {
        for (op, n) in ops.iter().zip(counts) {
            if n > 0 {
                c.insert((acc, *op), n);
            }
        }
    }
    c
}

/// Composition file entry; counts are signed so negative input can be reported.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositionEntry {
    pub accident_type: AccidentType,
    pub operation: OperationType,
    pub count: i64,
}

pub fn composition_from_entries(entries: &[CompositionEntry]) -> Result<Composition> {
    let mut c = Composition::new();
    for e in entries {
        if e.count < 0 {
            return Err(Error::invalid(format!(
                "negative count {} for ({}, {})",
                e.count, e.accident_type, e.operation
            )));
        }
        if e.count > 0 {
            *c.entry((e.accident_type, e.operation)).or_default() += e.count as usize;
        }
    }
    Ok(c)
}

/// One generated lesson, before it is tied to files on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LessonSpec {
    pub lesson_id: String,
    pub well_id: String,
    pub oilfield_id: u32,
    pub accident_type: AccidentType,
    pub operation: OperationType,
    pub anchor_tick: usize,
}

#[derive(Debug, Clone)]
pub struct GeneratedWell {
    pub plan: WellPlan,
    pub series: TelemetrySeries,
    pub events: Vec<GroundTruthEvent>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub wells: Vec<GeneratedWell>,
    pub lessons: Vec<LessonSpec>,
}

pub const N_OILFIELDS: u32 = 19;

pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Wells hosting the requested lessons: roughly 80 wells per 94 lessons, so
/// some wells carry two accidents, spread over 19 oilfields.
pub fn generate_corpus(seed: u64, composition: &Composition) -> Result<Corpus> {
    generate_corpus_with(seed, composition, "well", DEFAULT_SNR)
}

pub fn generate_corpus_with(
    seed: u64,
    composition: &Composition,
    well_prefix: &str,
    snr: f64,
) -> Result<Corpus> {
    let mut cells: Vec<(AccidentType, OperationType)> = composition
        .iter()
        .flat_map(|(&cell, &n)| std::iter::repeat_n(cell, n))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    cells.shuffle(&mut rng);
    let n_lessons = cells.len();
    if n_lessons == 0 {
        return Ok(Corpus {
            wells: Vec::new(),
            lessons: Vec::new(),
        });
    }
    let n_wells = ((n_lessons as f64 * 80.0 / 94.0).round() as usize).clamp(1, n_lessons);
    let doubles = n_lessons - n_wells;

    let mut assignments: Vec<Vec<(AccidentType, OperationType)>> = Vec::with_capacity(n_wells);
    let mut it = cells.into_iter();
    for w in 0..n_wells {
        let take = if w < doubles { 2 } else { 1 };
        assignments.push(it.by_ref().take(take).collect());
    }

    let plans: Vec<WellPlan> = assignments
        .iter()
        .enumerate()
        .map(|(w, acc)| {
            let mut plan = WellPlan::random(
                derive_seed(seed, 1 + w as u64),
                format!("{well_prefix}-{w:03}"),
                w as u32 % N_OILFIELDS,
                acc,
                0,
            );
            plan.start_time = SYNTHETIC_EPOCH + w as i64 * 86_400;
            plan.snr = snr;
            plan
        })
        .collect();

    use rayon::prelude::*;
    let generated: Vec<Result<(TelemetrySeries, Vec<GroundTruthEvent>)>> =
        plans.par_iter().map(generate_well).collect();

    let mut wells = Vec::with_capacity(n_wells);
    let mut lessons = Vec::with_capacity(n_lessons);
    for (plan, result) in plans.into_iter().zip(generated) {
        let (series, events) = result?;
        for ev in &events {
            lessons.push(LessonSpec {
                lesson_id: format!("lesson-{:03}", lessons.len()),
                well_id: plan.well_id.clone(),
                oilfield_id: plan.oilfield_id,
                accident_type: ev.accident_type,
                operation: ev.operation,
                anchor_tick: ev.anchor_tick,
            });
        }
        wells.push(GeneratedWell {
            plan,
            series,
            events,
        });
    }
    Ok(Corpus { wells, lessons })
}

/// Accident-free well of the given length.
pub fn generate_normal_well(seed: u64, well_id: &str, oilfield_id: u32, duration_ticks: usize) -> Result<GeneratedWell> {
    let plan = WellPlan::random(seed, well_id, oilfield_id, &[], duration_ticks);
    let (series, events) = generate_well(&plan)?;
    Ok(GeneratedWell {
        plan,
        series,
        events,
    })
}

/// Hold-out wells for streaming replay: `n_accident` wells with one accident
/// each (cells drawn in proportion to `composition`) and `n_normal`
/// accident-free wells.
pub fn generate_holdout(
    seed: u64,
    composition: &Composition,
    n_accident: usize,
    n_normal: usize,
) -> Result<Vec<GeneratedWell>> {
    let cells: Vec<(AccidentType, OperationType)> = composition
        .iter()
        .flat_map(|(&cell, &n)| std::iter::repeat_n(cell, n))
        .collect();
    if cells.is_empty() && n_accident > 0 {
        return Err(Error::invalid("hold-out accident wells need a non-empty composition"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let mut wells = Vec::with_capacity(n_accident + n_normal);
    for i in 0..n_accident + n_normal {
        let id = format!("holdout-{i:03}");
        let oilfield = rng.random_range(0..N_OILFIELDS);
        let well_seed = derive_seed(seed, 10_000 + i as u64);
        let accidents = if i < n_accident {
            vec![cells[rng.random_range(0..cells.len())]]
        } else {
            Vec::new()
        };
        let mut plan = WellPlan::random(well_seed, &id, oilfield, &accidents, 8640);
        plan.start_time = SYNTHETIC_EPOCH + i as i64 * 86_400;
        let (series, events) = generate_well(&plan)?;
        wells.push(GeneratedWell { plan, series, events });
    }
    Ok(wells)
}
