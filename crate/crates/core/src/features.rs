//! Aggregated-statistics features for 2-hour intervals and interval pairs.
//!
//! Each channel is summarised on several trailing sub-windows of the interval
//! by five statistics (mean, population variance, slope angle, mean absolute
//! deviation, coefficient of variation). Missing entries are stored as NaN
//! inside [`FeatureVector`]; the boosting code routes them along each split's
//! default direction.
//!
//! Layout (channel-major, then window, then statistic) is described by a JSON
//! descriptor whose SHA-256 prefix is the [`LayoutHash`]. Pair vectors have
//! three blocks (`abs_diff`, `min`, `max`) over the interval layout and carry
//! a hash derived from the interval hash.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::telemetry::{ChannelId, ChannelView, INTERVAL_TICKS};

/// Threshold below which the mean is considered zero for the relative coefficient.
pub const REL_COEFF_EPS: f64 = 1e-9;

pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Variance,
    SlopeAngle,
    MeanAbsDev,
    RelCoeff,
}

impl Statistic {
    pub const ALL: [Statistic; 5] = [
        Statistic::Mean,
        Statistic::Variance,
        Statistic::SlopeAngle,
        Statistic::MeanAbsDev,
        Statistic::RelCoeff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Variance => "variance",
            Statistic::SlopeAngle => "slope_angle",
            Statistic::MeanAbsDev => "mean_abs_dev",
            Statistic::RelCoeff => "rel_coeff",
        }
    }
}

/// Trailing sub-window sizes in ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    sizes: Vec<usize>,
}

impl WindowConfig {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::invalid("window config needs at least one size"));
        }
        if sizes[0] != INTERVAL_TICKS {
            return Err(Error::invalid(format!(
                "largest window must be {INTERVAL_TICKS} ticks, got {}",
                sizes[0]
            )));
        }
        if sizes.windows(2).any(|w| w[1] >= w[0]) || sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("window sizes must be positive and strictly decreasing"));
        }
        Ok(WindowConfig { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

impl Default for WindowConfig {
    /// 2 h, 1 h, 30 min, 10 min.
    fn default() -> Self {
        WindowConfig {
            sizes: vec![720, 360, 180, 60],
        }
    }
}

/// Truncated SHA-256 of a layout descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayoutHash(pub u64);

impl LayoutHash {
    fn of_bytes(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        LayoutHash(u64::from_be_bytes(head))
    }

    /// Hash of the pair layout built over an interval layout with this hash.
    pub fn pair(self) -> LayoutHash {
        let mut bytes = b"pair/abs_diff,min,max/".to_vec();
        bytes.extend_from_slice(&self.0.to_be_bytes());
        LayoutHash::of_bytes(&bytes)
    }
}

impl fmt::Display for LayoutHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// One coordinate of the interval layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub channel: ChannelId,
    pub window: usize,
    pub statistic: Statistic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutDescriptor {
    pub version: u32,
    pub entries: Vec<LayoutEntry>,
}

/// Channel set plus window sizes; fixes the feature layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    channels: Vec<ChannelId>,
    windows: WindowConfig,
    hash: LayoutHash,
}

impl FeatureLayout {
    /// The nine canonical MWD channels with the given windows.
    pub fn new(windows: WindowConfig) -> Self {
        Self::with_channels(ChannelId::CANONICAL.to_vec(), windows)
    }

    pub fn with_channels(channels: Vec<ChannelId>, windows: WindowConfig) -> Self {
        let mut layout = FeatureLayout {
            channels,
            windows,
            hash: LayoutHash(0),
        };
        let json = serde_json::to_vec(&layout.descriptor()).expect("descriptor serializes");
        layout.hash = LayoutHash::of_bytes(&json);
        layout
    }

    pub fn channels(&self) -> &[ChannelId] {
        &self.channels
    }

    pub fn windows(&self) -> &WindowConfig {
        &self.windows
    }

    pub fn hash(&self) -> LayoutHash {
        self.hash
    }

    pub fn pair_hash(&self) -> LayoutHash {
        self.hash.pair()
    }

    pub fn len(&self) -> usize {
        self.channels.len() * self.windows.sizes().len() * Statistic::ALL.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn descriptor(&self) -> LayoutDescriptor {
        let mut entries = Vec::with_capacity(self.len());
        for &channel in &self.channels {
            for &window in self.windows.sizes() {
                for statistic in Statistic::ALL {
                    entries.push(LayoutEntry {
                        channel,
                        window,
                        statistic,
                    });
                }
            }
        }
        LayoutDescriptor {
            version: LAYOUT_VERSION,
            entries,
        }
    }

    /// Names of the pair-vector coordinates, e.g. `abs_diff:input_pressure:720:slope_angle`.
    pub fn pair_names(&self) -> Vec<String> {
        let base = self.descriptor().entries;
        ["abs_diff", "min", "max"]
            .iter()
            .flat_map(|block| {
                base.iter().map(move |e| {
                    format!("{block}:{}:{}:{}", e.channel, e.window, e.statistic.name())
                })
            })
            .collect()
    }
}

impl Default for FeatureLayout {
    fn default() -> Self {
        FeatureLayout::new(WindowConfig::default())
    }
}

/// Flat feature array tagged with its layout. NaN marks a missing entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub layout: LayoutHash,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.values.get(i).copied().filter(|v| !v.is_nan())
    }
}

/// Statistics of one window; `None` where the value is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowStats {
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub slope_angle: Option<f64>,
    pub mean_abs_dev: Option<f64>,
    pub rel_coeff: Option<f64>,
}

impl WindowStats {
    pub fn as_array(&self) -> [Option<f64>; 5] {
        [
            self.mean,
            self.variance,
            self.slope_angle,
            self.mean_abs_dev,
            self.rel_coeff,
        ]
    }
}

/// Statistics over the observed samples of a window.
///
/// The slope is the least-squares fit of value against tick index (value
/// units per tick), reported as its arctangent.
pub fn window_stats(values: &[f64], missing: &[bool]) -> WindowStats {
    debug_assert_eq!(values.len(), missing.len());
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut tick_sum = 0.0;
    for (t, (&v, &m)) in values.iter().zip(missing).enumerate() {
        if !m {
            n += 1;
            sum += v;
            tick_sum += t as f64;
        }
    }
    if n == 0 {
        return WindowStats::default();
    }
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return WindowStats {
            mean: Some(mean),
            ..WindowStats::default()
        };
    }
    let tick_mean = tick_sum / nf;
    let (mut ss, mut abs_dev, mut sxy, mut sxx) = (0.0, 0.0, 0.0, 0.0);
    for (t, (&v, &m)) in values.iter().zip(missing).enumerate() {
        if !m {
            let dv = v - mean;
            let dt = t as f64 - tick_mean;
            ss += dv * dv;
            abs_dev += dv.abs();
            sxy += dt * dv;
            sxx += dt * dt;
        }
    }
    let variance = ss / nf;
    let slope = sxy / sxx;
    let rel_coeff = (mean.abs() > REL_COEFF_EPS).then(|| variance.sqrt() / mean);
    WindowStats {
        mean: Some(mean),
        variance: Some(variance),
        slope_angle: Some(slope.atan()),
        mean_abs_dev: Some(abs_dev / nf),
        rel_coeff,
    }
}

/// Features of one 720-tick interval under `layout`.
pub fn interval_features<V: ChannelView + ?Sized>(
    view: &V,
    layout: &FeatureLayout,
) -> Result<FeatureVector> {
    if view.len() != INTERVAL_TICKS {
        return Err(Error::invalid(format!(
            "interval has {} ticks, features need exactly {INTERVAL_TICKS}",
            view.len()
        )));
    }
    let mut values = Vec::with_capacity(layout.len());
    for &channel in layout.channels() {
        let data = view.channel(channel);
        for &w in layout.windows().sizes() {
            match data {
                Some((vals, miss)) => {
                    let from = vals.len() - w;
                    let stats = window_stats(&vals[from..], &miss[from..]);
                    values.extend(stats.as_array().iter().map(|s| s.unwrap_or(f64::NAN)));
                }
                None => values.extend(std::iter::repeat_n(f64::NAN, Statistic::ALL.len())),
            }
        }
    }
    Ok(FeatureVector {
        layout: layout.hash(),
        values,
    })
}

/// Appends the symmetric pair encoding of `a` and `b` to `out`.
pub(crate) fn pair_features_into(a: &[f64], b: &[f64], out: &mut Vec<f64>) {
    let n = a.len();
    out.reserve(3 * n);
    let start = out.len();
    out.resize(start + 3 * n, f64::NAN);
    let (diff, rest) = out[start..].split_at_mut(n);
    let (lo, hi) = rest.split_at_mut(n);
    for i in 0..n {
        let (x, y) = (a[i], b[i]);
        if x.is_nan() || y.is_nan() {
            continue;
        }
        diff[i] = (x - y).abs();
        lo[i] = x.min(y);
        hi[i] = x.max(y);
    }
}

/// `[|a−b|, min(a,b), max(a,b)]` blockwise; symmetric in its arguments.
pub fn pair_features(a: &FeatureVector, b: &FeatureVector) -> Result<FeatureVector> {
    if a.layout != b.layout || a.len() != b.len() {
        return Err(Error::LayoutMismatch {
            expected: a.layout,
            found: b.layout,
        });
    }
    let mut values = Vec::with_capacity(3 * a.len());
    pair_features_into(&a.values, &b.values, &mut values);
    Ok(FeatureVector {
        layout: a.layout.pair(),
        values,
    })
}
