//! Robustness of the similarity model to distorted inputs.
//!
//! Lesson intervals are distorted by smooth multiplicative noise, by shifting
//! the window in time, or by smoothing. Every member of a test set is scored
//! by its maximum similarity over the lesson database, and each set is compared
//! with random accident-free windows through the quantile gap
//! `R = q10(target) − q90(random)`.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::SimilarityModel;
use crate::error::{Error, Result};
use crate::features::{interval_features, FeatureVector};
use crate::lessons::LessonDatabase;
use crate::synthgen::derive_seed;
use crate::telemetry::{slice_interval, ChannelView, Interval, TelemetrySeries, INTERVAL_TICKS};

/// Width of the moving average that smooths the noise curves.
pub const NOISE_SMOOTHING_WIDTH: usize = 60;

/// Minimum distance between a random normal window and any accident anchor.
pub const NORMAL_CLEARANCE_TICKS: usize = 1440;

pub const DEFAULT_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    /// Multiply each channel by a smooth curve with mean 1 and std `magnitude`.
    Noise,
    /// Move the window by `magnitude` ticks within its parent series.
    Shift,
    /// Centered moving average of half-width `magnitude` ticks.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub magnitude: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn noise(sigma: f64, seed: u64) -> Self {
        DistortionSpec { kind: DistortionKind::Noise, magnitude: sigma, seed }
    }

    pub fn shift(ticks: i64) -> Self {
        DistortionSpec { kind: DistortionKind::Shift, magnitude: ticks as f64, seed: 0 }
    }

    pub fn smooth(half_width: usize) -> Self {
        DistortionSpec { kind: DistortionKind::Smooth, magnitude: half_width as f64, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.magnitude;
        let ok = match self.kind {
            DistortionKind::Noise => m.is_finite() && m >= 0.0,
            DistortionKind::Shift => m.fract() == 0.0 && m.abs() < INTERVAL_TICKS as f64,
            DistortionKind::Smooth => m.fract() == 0.0 && m >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid {:?} magnitude {m}", self.kind)))
        }
    }
}

fn moving_average(values: &[f64], observed: impl Fn(usize) -> bool, lo: usize, hi: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|t| {
            let (mut sum, mut k) = (0.0, 0usize);
            for u in t.saturating_sub(lo)..(t + hi + 1).min(n) {
                if observed(u) {
                    sum += values[u];
                    k += 1;
                }
            }
            if k == 0 {
                values[t]
            } else {
                sum / k as f64
            }
        })
        .collect()
}

/// Smooth random curve with sample mean exactly 1 and sample standard
/// deviation exactly `sigma`.
///
/// White noise is smoothed by a centered moving average of width 60 ticks
/// (clamped to `length`) and rescaled. Curves shorter than two samples are all
/// ones.
pub fn smooth_noise_curve(length: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma {sigma} must be finite and non-negative")));
    }
    if sigma == 0.0 || length < 2 {
        return Ok(vec![1.0; length]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..length).map(|_| rng.sample(StandardNormal)).collect();
    let w = NOISE_SMOOTHING_WIDTH.min(length);
    let smooth = moving_average(&white, |_| true, w / 2, w - 1 - w / 2);
    let mean = smooth.iter().sum::<f64>() / length as f64;
    let sd = (smooth.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (length - 1) as f64).sqrt();
    if sd == 0.0 {
        return Ok(vec![1.0; length]);
    }
    Ok(smooth.iter().map(|x| 1.0 + sigma * (x - mean) / sd).collect())
}

/// Materialized distorted copy of `interval`. Missing masks are preserved
/// except under a shift, which takes the parent's masks at the new position.
pub fn distort(interval: &Interval<'_>, spec: &DistortionSpec) -> Result<TelemetrySeries> {
    spec.validate()?;
    match spec.kind {
        DistortionKind::Shift => {
            let m = spec.magnitude as i64;
            let start = interval.start_tick() as i64 + m;
            let end = interval.end_tick() as i64 + m;
            let parent = interval.series();
            if start < 0 || end > parent.len() as i64 {
                return Err(Error::invalid(format!(
                    "shift by {m} moves [{}, {}) outside the series of {} ticks",
                    interval.start_tick(),
                    interval.end_tick(),
                    parent.len()
                )));
            }
            parent.materialize(start as usize, end as usize)
        }
        DistortionKind::Noise | DistortionKind::Smooth => {
            let base = interval.to_series();
            let (well, start, len) = (base.well_id().to_string(), base.start_time(), base.len());
            let mut channels = base.into_channels();
            for (k, (_, data)) in channels.iter_mut().enumerate() {
                data.values = match spec.kind {
                    DistortionKind::Noise => {
                        let curve = smooth_noise_curve(len, spec.magnitude, derive_seed(spec.seed, k as u64))?;
                        data.values.iter().zip(&curve).map(|(v, c)| v * c).collect()
                    }
                    _ => {
                        let h = spec.magnitude as usize;
                        moving_average(&data.values, |t| !data.missing[t], h, h)
                    }
                };
            }
            TelemetrySeries::new(well, start, len, channels)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", content = "magnitude", rename_all = "snake_case")]
pub enum SetLabel {
    RandomNormal,
    Lessons,
    Shifted(i64),
    Noised(f64),
    Smoothed(usize),
}

impl fmt::Display for SetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetLabel::RandomNormal => f.write_str("random_normal"),
            SetLabel::Lessons => f.write_str("lessons"),
            SetLabel::Shifted(m) => write!(f, "shifted_{m}"),
            SetLabel::Noised(s) => write!(f, "noised_{s}"),
            SetLabel::Smoothed(h) => write!(f, "smoothed_{h}"),
        }
    }
}

/// Maximum similarity over the database for each member of a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityDistribution {
    pub label: SetLabel,
    pub samples: Vec<f64>,
}

/// A well that random normal windows may be drawn from, with the anchors of
/// every accident on it.
#[derive(Debug, Clone, Copy)]
pub struct PoolWell<'a> {
    pub series: &'a TelemetrySeries,
    pub anchors: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    pub n_random: usize,
    pub shifts: Vec<i64>,
    pub noise_sigmas: Vec<f64>,
    pub smooth_half_widths: Vec<usize>,
    pub seed: u64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            n_random: 200,
            shifts: vec![20, 40],
            noise_sigmas: vec![0.01, 0.03, 0.1],
            smooth_half_widths: Vec::new(),
            seed: 0,
        }
    }
}

fn max_similarity(model: &SimilarityModel, q: &FeatureVector, db: &LessonDatabase) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for i in 0..db.len() {
        best = best.max(model.score_features(q, db.features(i))?);
    }
    Ok(best)
}

fn score_views<V: ChannelView + Sync>(model: &SimilarityModel, db: &LessonDatabase, views: &[V]) -> Result<Vec<f64>> {
    views
        .par_iter()
        .map(|v| max_similarity(model, &interval_features(v, model.layout())?, db))
        .collect()
}

/// Window start ranges `[lo, hi]` on one well that keep the window at least
/// 1440 ticks from every anchor.
fn clear_ranges(len: usize, anchors: &[usize]) -> Vec<(usize, usize)> {
    if len < INTERVAL_TICKS {
        return Vec::new();
    }
    let mut ranges = vec![(0usize, len - INTERVAL_TICKS)];
    for &a in anchors {
        // forbidden starts: (a − 1440 − 720, a + 1440)
        let lo_bad = (a + 1).saturating_sub(NORMAL_CLEARANCE_TICKS + INTERVAL_TICKS);
        let hi_bad = a + NORMAL_CLEARANCE_TICKS;
        let mut next = Vec::new();
        for (lo, hi) in ranges {
            let (forbid_lo, forbid_hi) = if a + 1 >= NORMAL_CLEARANCE_TICKS + INTERVAL_TICKS {
                (lo_bad, hi_bad - 1)
            } else {
                (0, hi_bad - 1)
            };
            if forbid_hi < lo || forbid_lo > hi {
                next.push((lo, hi));
                continue;
            }
            if forbid_lo > lo {
                next.push((lo, forbid_lo - 1));
            }
            if forbid_hi < hi {
                next.push((forbid_hi + 1, hi));
            }
        }
        ranges = next;
    }
    ranges
}

/// Samples `n` accident-free 720-tick windows uniformly over all admissible
/// starts in the pool. Returns `(pool index, start tick)`.
pub fn sample_normal_windows(pool: &[PoolWell<'_>], n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let ranges: Vec<(usize, usize, usize)> = pool
        .iter()
        .enumerate()
        .flat_map(|(w, p)| clear_ranges(p.series.len(), p.anchors).into_iter().map(move |(lo, hi)| (w, lo, hi)))
        .collect();
    let total: usize = ranges.iter().map(|&(_, lo, hi)| hi - lo + 1).sum();
    if total == 0 {
        return Err(Error::invalid("no accident-free window available in the pool"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let mut k = rng.random_range(0..total);
            for &(w, lo, hi) in &ranges {
                let span = hi - lo + 1;
                if k < span {
                    return (w, lo + k);
                }
                k -= span;
            }
            unreachable!("offset within total")
        })
        .collect())
}

/// Anchors of every lesson, grouped as a pool over the database wells.
pub fn pool_from_db(db: &LessonDatabase) -> Vec<(String, Vec<usize>)> {
    db.wells()
        .map(|(w, _)| {
            let anchors = db.lessons_of_well(w).iter().map(|&i| db.lesson(i).anchor_tick).collect();
            (w.to_string(), anchors)
        })
        .collect()
}

/// Test-set similarity distributions in the order: random normal windows,
/// lessons, shifted lessons, noised lessons, smoothed lessons.
pub fn similarity_distributions(
    model: &SimilarityModel,
    db: &LessonDatabase,
    pool: &[PoolWell<'_>],
    cfg: &RobustnessConfig,
) -> Result<Vec<SimilarityDistribution>> {
    let mut out = Vec::new();
    let windows = sample_normal_windows(pool, cfg.n_random, derive_seed(cfg.seed, 0))?;
    let views = windows
        .iter()
        .map(|&(w, s)| slice_interval(pool[w].series, s, s + INTERVAL_TICKS))
        .collect::<Result<Vec<_>>>()?;
    out.push(SimilarityDistribution {
        label: SetLabel::RandomNormal,
        samples: score_views(model, db, &views)?,
    });
    let lessons: Vec<Interval<'_>> = (0..db.len()).map(|i| db.interval(i)).collect();
    out.push(SimilarityDistribution {
        label: SetLabel::Lessons,
        samples: score_views(model, db, &lessons)?,
    });
    let mut distorted = |label: SetLabel, spec: &(dyn Fn(usize) -> DistortionSpec + Sync)| -> Result<()> {
        let copies = lessons
            .par_iter()
            .enumerate()
            .map(|(i, iv)| distort(iv, &spec(i)))
            .collect::<Result<Vec<_>>>()?;
        out.push(SimilarityDistribution {
            label,
            samples: score_views(model, db, &copies)?,
        });
        Ok(())
    };
    for &m in &cfg.shifts {
        distorted(SetLabel::Shifted(m), &|_| DistortionSpec::shift(m))?;
    }
    for (k, &s) in cfg.noise_sigmas.iter().enumerate() {
        let base = derive_seed(cfg.seed, 1 + k as u64);
        distorted(SetLabel::Noised(s), &|i| DistortionSpec::noise(s, derive_seed(base, i as u64)))?;
    }
    for &h in &cfg.smooth_half_widths {
        distorted(SetLabel::Smoothed(h), &|_| DistortionSpec::smooth(h))?;
    }
    Ok(out)
}

/// Quantile by linear interpolation between order statistics at `(n − 1)·q`.
pub fn quantile(sample: &[f64], q: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&s, q))
}

fn sorted_quantile(s: &[f64], q: f64) -> f64 {
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// `q10(target) − q90(random)`.
pub fn r_metric(target: &[f64], random: &[f64]) -> Result<f64> {
    Ok(quantile(target, 0.10)? - quantile(random, 0.90)?)
}

fn r_of_resample(target: &[f64], random: &[f64], ti: &[usize], ri: &[usize]) -> f64 {
    let mut t: Vec<f64> = ti.iter().map(|&i| target[i]).collect();
    let mut r: Vec<f64> = ri.iter().map(|&i| random[i]).collect();
    t.sort_by(f64::total_cmp);
    r.sort_by(f64::total_cmp);
    sorted_quantile(&t, 0.10) - sorted_quantile(&r, 0.90)
}

fn population_std(values: &[f64]) -> f64 {
    if values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Standard deviation of `R` over `n_resamples` paired bootstrap resamples;
/// each resample redraws both samples with replacement at their own sizes.
pub fn bootstrap_std(target: &[f64], random: &[f64], n_resamples: usize, seed: u64) -> Result<f64> {
    if target.is_empty() || random.is_empty() {
        return Err(Error::invalid("bootstrap of an empty sample"));
    }
    if n_resamples == 0 {
        return Err(Error::invalid("n_resamples must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rs: Vec<f64> = (0..n_resamples)
        .map(|_| {
            let ti: Vec<usize> = (0..target.len()).map(|_| rng.random_range(0..target.len())).collect();
            let ri: Vec<usize> = (0..random.len()).map(|_| rng.random_range(0..random.len())).collect();
            r_of_resample(target, random, &ti, &ri)
        })
        .collect();
    Ok(population_std(&rs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RRow {
    pub label: SetLabel,
    pub r: f64,
    pub r_std: f64,
}

/// `R` and its bootstrap std for every set against the random normal set.
pub fn r_table(dists: &[SimilarityDistribution], n_resamples: usize, seed: u64) -> Result<Vec<RRow>> {
    let random = dists
        .iter()
        .find(|d| d.label == SetLabel::RandomNormal)
        .ok_or_else(|| Error::invalid("no random_normal set"))?;
    dists
        .iter()
        .filter(|d| d.label != SetLabel::RandomNormal)
        .enumerate()
        .map(|(k, d)| {
            Ok(RRow {
                label: d.label,
                r: r_metric(&d.samples, &random.samples)?,
                r_std: bootstrap_std(&d.samples, &random.samples, n_resamples, derive_seed(seed, k as u64))?,
            })
        })
        .collect()
}

pub fn write_distributions_csv<W: Write>(dists: &[SimilarityDistribution], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(format!("distribution csv: {e}"));
    w.write_record(["set_label", "sample_value"]).map_err(err)?;
    for d in dists {
        for s in &d.samples {
            w.write_record([d.label.to_string(), s.to_string()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_r_table_csv<W: Write>(rows: &[RRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(format!("R table csv: {e}"));
    w.write_record(["set_label", "R", "R_std"]).map_err(err)?;
    for r in rows {
        w.write_record([r.label.to_string(), r.r.to_string(), r.r_std.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}
