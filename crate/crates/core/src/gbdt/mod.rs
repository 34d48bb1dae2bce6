//! Newton gradient boosting of depth-limited trees for binary labels.
//!
//! Each round fits a regression tree to the logistic-loss gradients
//! `g = p − y` and hessians `h = p(1 − p)`. Splits maximise
//!
//! ```text
//! gain = ½ [ G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ) ]
//! ```
//!
//! over midpoints between consecutive distinct feature values; rows with a
//! missing (NaN) feature are tried on both sides and the better side is stored
//! as the split's default direction. Leaves hold `−G/(H+λ)`.

mod io;
mod tree;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LayoutHash};

pub use io::{deserialize, serialize, FORMAT_NAME, FORMAT_VERSION};
pub use tree::{Node, Tree};

/// Leaf regularisation.
pub const LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub row_subsample: f64,
    pub feature_subsample: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            row_subsample: 0.8,
            feature_subsample: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate must be in (0, 1]"));
        }
        for (name, v) in [
            ("row_subsample", self.row_subsample),
            ("feature_subsample", self.feature_subsample),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1]")));
            }
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

/// Dense row-major matrix; NaN marks a missing entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    layout: LayoutHash,
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(layout: LayoutHash, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || data.len() % n_cols != 0 {
            return Err(Error::invalid(format!(
                "{} values do not form rows of {n_cols} columns",
                data.len()
            )));
        }
        Ok(FeatureMatrix {
            layout,
            n_cols,
            data,
        })
    }

    pub fn from_rows(layout: LayoutHash, rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::invalid("ragged feature rows"));
        }
        Self::new(layout, n_cols, rows.concat())
    }

    pub fn layout(&self) -> LayoutHash {
        self.layout
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub(crate) layout: LayoutHash,
    pub(crate) base_score: f64,
    pub(crate) learning_rate: f64,
    pub(crate) trees: Vec<Tree>,
}

impl GbdtModel {
    /// Model with no trees predicting `prevalence` everywhere.
    pub fn constant(layout: LayoutHash, prevalence: f64) -> Self {
        GbdtModel {
            layout,
            base_score: (prevalence / (1.0 - prevalence)).ln(),
            learning_rate: 0.1,
            trees: Vec::new(),
        }
    }

    pub fn layout(&self) -> LayoutHash {
        self.layout
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Copy keeping only the first `n` trees.
    pub fn truncated(&self, n: usize) -> GbdtModel {
        GbdtModel {
            trees: self.trees[..n.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.learning_rate * t.predict(x))
                .sum::<f64>()
    }

    /// Score of a raw row; the caller is responsible for the layout.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn predict_score(&self, x: &FeatureVector) -> Result<f64> {
        if x.layout != self.layout {
            return Err(Error::LayoutMismatch {
                expected: self.layout,
                found: x.layout,
            });
        }
        Ok(self.predict_row(&x.values))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean logistic loss of margins against labels.
pub fn log_loss(margins: &[f64], labels: &[bool]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| {
            // log(1 + e^{-m}) for y = 1, log(1 + e^{m}) for y = 0, computed stably.
            let z = if y { -m } else { m };
            z.max(0.0) + (-z.abs()).exp().ln_1p()
        })
        .sum();
    total / margins.len() as f64
}

pub fn fit(x: &FeatureMatrix, y: &[bool], config: &TrainConfig) -> Result<GbdtModel> {
    fit_traced(x, y, config).map(|(m, _)| m)
}

/// Fits and also returns the mean training loss after each round.
pub fn fit_traced(
    x: &FeatureMatrix,
    y: &[bool],
    config: &TrainConfig,
) -> Result<(GbdtModel, Vec<f64>)> {
    config.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::invalid("empty training matrix"));
    }
    if n != y.len() {
        return Err(Error::invalid(format!("{n} rows but {} labels", y.len())));
    }
    if n < 2 {
        return Err(Error::invalid("need at least two training rows"));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == n {
        return Err(Error::invalid("training labels contain a single class"));
    }

    let prevalence = positives as f64 / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();
    let presorted = tree::Presorted::new(x);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut margins = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut history = Vec::with_capacity(config.n_trees);
    let d = x.n_cols();

    for _ in 0..config.n_trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - if y[i] { 1.0 } else { 0.0 };
            hess[i] = p * (1.0 - p);
        }
        let rows: Vec<u32> = if config.row_subsample < 1.0 {
            let k = ((n as f64 * config.row_subsample).round() as usize).clamp(1, n);
            let mut r: Vec<u32> = sample(&mut rng, n, k).into_iter().map(|i| i as u32).collect();
            r.sort_unstable();
            r
        } else {
            (0..n as u32).collect()
        };
        let features: Vec<usize> = if config.feature_subsample < 1.0 {
            let k = ((d as f64 * config.feature_subsample).ceil() as usize).clamp(1, d);
            let mut f = sample(&mut rng, d, k).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..d).collect()
        };
        let params = tree::GrowParams {
            max_depth: config.max_depth,
            min_samples_leaf: config.min_samples_leaf,
            lambda: LAMBDA,
        };
        let t = tree::grow(x, &presorted, &grad, &hess, &rows, &features, &params);
        for (i, m) in margins.iter_mut().enumerate() {
            *m += config.learning_rate * t.predict(x.row(i));
        }
        trees.push(t);
        history.push(log_loss(&margins, y));
    }

    let model = GbdtModel {
        layout: x.layout(),
        base_score,
        learning_rate: config.learning_rate,
        trees,
    };
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: LayoutHash = LayoutHash(42);

    fn separable() -> (FeatureMatrix, Vec<bool>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..50 {
            rows.push(vec![-(i as f64) - 1.0]);
            y.push(false);
            rows.push(vec![i as f64 + 1.0]);
            y.push(true);
        }
        (FeatureMatrix::from_rows(H, &rows).unwrap(), y)
    }

    #[test]
    fn separable_is_fit() {
        let (x, y) = separable();
        let m = fit(&x, &y, &TrainConfig::default()).unwrap();
        for i in 0..x.n_rows() {
            let s = m.predict_row(x.row(i));
            assert_eq!(s > 0.5, y[i]);
            if y[i] {
                assert!(s > 0.9, "score {s}");
            }
        }
    }

    #[test]
    fn flipped_labels_complement_scores() {
        let (x, y) = separable();
        let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
        let cfg = TrainConfig::default();
        let a = fit(&x, &y, &cfg).unwrap();
        let b = fit(&x, &flipped, &cfg).unwrap();
        for i in 0..x.n_rows() {
            let (sa, sb) = (a.predict_row(x.row(i)), b.predict_row(x.row(i)));
            assert!((sa + sb - 1.0).abs() < 1e-6, "{sa} + {sb}");
        }
    }

    /// Exhaustive search over every split of four rows on one feature.
    #[test]
    fn depth_one_split_matches_brute_force() {
        let xs = [0.3, 1.7, 2.2, 5.0];
        let ys = [false, true, false, true];
        let x = FeatureMatrix::from_rows(H, &xs.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap();
        let cfg = TrainConfig {
            n_trees: 1,
            max_depth: 1,
            min_samples_leaf: 1,
            row_subsample: 1.0,
            feature_subsample: 1.0,
            ..TrainConfig::default()
        };
        let m = fit(&x, &ys, &cfg).unwrap();
        // base score is 0 (prevalence ½), so p = ½, g = ½ − y, h = ¼.
        let g: Vec<f64> = ys.iter().map(|&y| 0.5 - y as u8 as f64).collect();
        let h = 0.25;
        let score = |gs: f64, hs: f64| gs * gs / (hs + LAMBDA);
        let total: f64 = g.iter().sum();
        let (mut best, mut best_thr) = (f64::NEG_INFINITY, 0.0);
        for k in 1..4 {
            let gl: f64 = g[..k].iter().sum();
            let gain = 0.5 * (score(gl, h * k as f64) + score(total - gl, h * (4 - k) as f64) - score(total, 1.0));
            if gain > best {
                best = gain;
                best_thr = (xs[k - 1] + xs[k]) / 2.0;
            }
        }
        match &m.trees()[0].nodes()[0] {
            Node::Split { feature, threshold, gain, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, best_thr);
                assert!((gain - best).abs() < 1e-12);
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn zero_tree_model_is_prevalence() {
        let m = GbdtModel::constant(H, 0.5);
        let fv = FeatureVector { layout: H, values: vec![1.0, 2.0] };
        assert_eq!(m.predict_score(&fv).unwrap(), 0.5);
    }

    #[test]
    fn all_missing_row_is_finite() {
        let (x, y) = separable();
        let m = fit(&x, &y, &TrainConfig::default()).unwrap();
        let s = m.predict_row(&[f64::NAN]);
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn missing_values_routed_by_gain() {
        // Positives have the feature missing; negatives observed. The split
        // on feature 1 must send missing rows to the positive side.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let pos = i % 2 == 0;
            rows.push(vec![i as f64, if pos { f64::NAN } else { i as f64 * 0.5 }]);
            y.push(pos);
        }
        let x = FeatureMatrix::from_rows(H, &rows).unwrap();
        let m = fit(&x, &y, &TrainConfig { row_subsample: 1.0, feature_subsample: 1.0, ..Default::default() }).unwrap();
        assert!(m.predict_row(&[10.0, f64::NAN]) > 0.9);
        assert!(m.predict_row(&[10.0, 5.0]) < 0.1);
    }

    #[test]
    fn rejects_bad_input() {
        let x = FeatureMatrix::from_rows(H, &[vec![1.0], vec![2.0]]).unwrap();
        assert!(fit(&x, &[true, true], &TrainConfig::default()).is_err());
        assert!(fit(&x, &[true], &TrainConfig::default()).is_err());
        let empty = FeatureMatrix::new(H, 1, vec![]).unwrap();
        assert!(fit(&empty, &[], &TrainConfig::default()).is_err());
        let bad = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(fit(&x, &[true, false], &bad).is_err());
    }

    #[test]
    fn layout_checked_on_predict() {
        let m = GbdtModel::constant(H, 0.3);
        let fv = FeatureVector { layout: LayoutHash(1), values: vec![] };
        assert!(matches!(m.predict_score(&fv), Err(Error::LayoutMismatch { .. })));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = separable();
        let cfg = TrainConfig { n_trees: 20, seed: 9, ..Default::default() };
        assert_eq!(fit(&x, &y, &cfg).unwrap(), fit(&x, &y, &cfg).unwrap());
    }
}
