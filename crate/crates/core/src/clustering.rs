//! Dendrogram analysis of lesson similarity.
//!
//! Four similarity matrices over the lessons of a database are supported:
//! the 0/1 ground truth, an unsupervised weighted ℓ1 baseline on raw
//! telemetry, and the learned model scored either with a model trained on all
//! lessons or with models whose training wells exclude both lessons of a pair.
//! Matrices are clustered by average linkage on `1 − similarity`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::SimilarityModel;
use crate::error::{Error, Result};
use crate::lessons::{ground_truth_similar, LessonDatabase};
use crate::telemetry::{ChannelId, ChannelView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMode {
    GroundTruth,
    UnsupervisedL1,
    ModelTrain,
    ModelCv,
}

impl MatrixMode {
    pub fn name(self) -> &'static str {
        match self {
            MatrixMode::GroundTruth => "ground_truth",
            MatrixMode::UnsupervisedL1 => "unsupervised_l1",
            MatrixMode::ModelTrain => "model_train",
            MatrixMode::ModelCv => "model_cv",
        }
    }
}

/// Dense symmetric lesson-by-lesson similarity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub mode: MatrixMode,
    pub lesson_ids: Vec<String>,
    /// Row-major, `n × n`.
    pub values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds a matrix from its upper triangle; the diagonal is set to `diag`.
    fn from_upper(mode: MatrixMode, lesson_ids: Vec<String>, diag: f64, upper: impl Fn(usize, usize) -> f64) -> Self {
        let n = lesson_ids.len();
        let mut values = vec![diag; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let s = upper(i, j);
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
        SimilarityMatrix { mode, lesson_ids, values }
    }

    pub fn n(&self) -> usize {
        self.lesson_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|i| (i + 1..n).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Mean similarity over pairs in the same ground-truth group and over
    /// pairs in different groups.
    pub fn block_means(&self, db: &LessonDatabase) -> (f64, f64) {
        let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                if ground_truth_similar(db.lesson(i), db.lesson(j)) {
                    on += self.get(i, j);
                    n_on += 1;
                } else {
                    off += self.get(i, j);
                    n_off += 1;
                }
            }
        }
        (on / n_on as f64, off / n_off as f64)
    }
}

fn lesson_ids(db: &LessonDatabase) -> Result<Vec<String>> {
    if db.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 lessons, got {}", db.len())));
    }
    Ok(db.lessons().iter().map(|l| l.lesson_id.clone()).collect())
}

/// Entry `(i, j)` is 1 when the lessons share accident type and operation.
pub fn ground_truth_matrix(db: &LessonDatabase) -> Result<SimilarityMatrix> {
    let ids = lesson_ids(db)?;
    Ok(SimilarityMatrix::from_upper(MatrixMode::GroundTruth, ids, 1.0, |i, j| {
        if ground_truth_similar(db.lesson(i), db.lesson(j)) {
            1.0
        } else {
            0.0
        }
    }))
}

/// Channels entering the ℓ1 baseline: every canonical channel except the depths.
pub const L1_CHANNELS: [ChannelId; 7] = [
    ChannelId::RotorTorque,
    ChannelId::HookWeight,
    ChannelId::InputPressure,
    ChannelId::RotationSpeed,
    ChannelId::InputFlow,
    ChannelId::GasContent,
    ChannelId::WeightOnBit,
];

pub fn uniform_l1_weights() -> BTreeMap<ChannelId, f64> {
    L1_CHANNELS.iter().map(|&c| (c, 1.0)).collect()
}

/// Weighted ℓ1 similarity `1 / (1 + d)` of the raw lesson intervals.
///
/// Each channel is z-scored over all lesson intervals of the database; `d` sums
/// `w · mean |zᵢ − zⱼ|` over channels, the mean taken over ticks observed in
/// both intervals. Depth channels are ignored whatever their weight, and a
/// channel with zero variance in the database gets weight 0. A channel with no
/// co-observed tick contributes nothing.
pub fn unsupervised_l1_matrix(db: &LessonDatabase, weights: &BTreeMap<ChannelId, f64>) -> Result<SimilarityMatrix> {
    let ids = lesson_ids(db)?;
    if let Some((c, w)) = weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::invalid(format!("weight {w} for channel {c} must be finite and non-negative")));
    }
    let intervals: Vec<_> = (0..db.len()).map(|i| db.interval(i)).collect();
    // (weight, per-lesson z-scored values and masks)
    let mut channels: Vec<(f64, Vec<Option<(Vec<f64>, &[bool])>>)> = Vec::new();
    for (&c, &w) in weights {
        if c.is_depth() || w == 0.0 {
            continue;
        }
        let observed: Vec<f64> = intervals
            .iter()
            .filter_map(|iv| iv.channel(c))
            .flat_map(|(v, m)| v.iter().zip(m).filter(|(_, &m)| !m).map(|(&x, _)| x))
            .collect();
        if observed.is_empty() {
            continue;
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        let var = observed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / observed.len() as f64;
        if var <= 0.0 {
            log::debug!("channel {c} has zero variance over the lessons; weight forced to 0");
            continue;
        }
        let sd = var.sqrt();
        let z = intervals
            .iter()
            .map(|iv| iv.channel(c).map(|(v, m)| (v.iter().map(|x| (x - mean) / sd).collect(), m)))
            .collect();
        channels.push((w, z));
    }
    let n = ids.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let mut d = 0.0;
                    for (w, z) in &channels {
                        if let (Some((a, ma)), Some((b, mb))) = (&z[i], &z[j]) {
                            let (mut s, mut k) = (0.0, 0usize);
                            for t in 0..a.len() {
                                if !ma[t] && !mb[t] {
                                    s += (a[t] - b[t]).abs();
                                    k += 1;
                                }
                            }
                            if k > 0 {
                                d += w * s / k as f64;
                            }
                        }
                    }
                    1.0 / (1.0 + d)
                })
                .collect()
        })
        .collect();
    Ok(SimilarityMatrix::from_upper(MatrixMode::UnsupervisedL1, ids, 1.0, |i, j| {
        rows[i][j - i - 1]
    }))
}

fn score_block(db: &LessonDatabase, model: &SimilarityModel, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    pairs
        .par_iter()
        .map(|&(i, j)| model.score_features(db.features(i), db.features(j)))
        .collect()
}

/// Every pair scored by one model trained on all lessons.
pub fn model_matrix_train(db: &LessonDatabase, model: &SimilarityModel) -> Result<SimilarityMatrix> {
    let ids = lesson_ids(db)?;
    let n = ids.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let scores = score_block(db, model, &pairs)?;
    let lookup: HashMap<(usize, usize), f64> = pairs.into_iter().zip(scores).collect();
    Ok(SimilarityMatrix::from_upper(MatrixMode::ModelTrain, ids, 1.0, |i, j| lookup[&(i, j)]))
}

/// Every pair scored by a model whose training wells exclude both lessons' wells.
///
/// Lesson wells are shuffled into `folds` groups. For each unordered pair of
/// folds `(a, b)`, including `a = b`, a model is trained on the wells outside
/// `a ∪ b` and scores the lesson pairs spanning them.
pub fn model_matrix_cv<F>(db: &LessonDatabase, trainer: F, folds: usize, seed: u64) -> Result<SimilarityMatrix>
where
    F: Fn(&LessonDatabase) -> Result<SimilarityModel> + Sync,
{
    let ids = lesson_ids(db)?;
    let mut wells = db.lesson_wells();
    if folds < 3 || folds > wells.len() {
        return Err(Error::Split(format!(
            "{folds} folds over {} wells; need 3 ≤ folds ≤ wells",
            wells.len()
        )));
    }
    wells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: HashMap<&str, usize> = wells.iter().enumerate().map(|(k, &w)| (w, k % folds)).collect();
    let lesson_fold: Vec<usize> = db.lessons().iter().map(|l| fold_of[l.well_id.as_str()]).collect();
    let n = ids.len();
    let mut lookup: HashMap<(usize, usize), f64> = HashMap::new();
    for a in 0..folds {
        for b in a..folds {
            let train: BTreeSet<&str> = wells.iter().copied().filter(|w| fold_of[w] != a && fold_of[w] != b).collect();
            let train_db = db.subset_wells(&train);
            let groups = train_db.groups();
            if groups.len() < 2 || !groups.values().any(|g| g.len() >= 2) {
                return Err(Error::Split(format!("training wells outside folds {a} and {b} cannot form positive and negative pairs")));
            }
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| {
                    let (fi, fj) = (lesson_fold[i].min(lesson_fold[j]), lesson_fold[i].max(lesson_fold[j]));
                    (fi, fj) == (a, b)
                })
                .collect();
            if pairs.is_empty() {
                continue;
            }
            let model = trainer(&train_db)?;
            let scores = score_block(db, &model, &pairs)?;
            lookup.extend(pairs.into_iter().zip(scores));
        }
    }
    Ok(SimilarityMatrix::from_upper(MatrixMode::ModelCv, ids, 1.0, |i, j| lookup[&(i, j)]))
}

/// Distances closer than this count as tied.
const TIE_EPS: f64 = 1e-12;

/// One merge. Leaves are `0..n`; the cluster formed by merge `k` is `n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

/// Average-linkage clustering on `1 − similarity`.
///
/// The closest pair of active clusters merges first; ties (within 1e-12) go to
/// the pair with the smallest `(lower id, higher id)`.
pub fn agglomerate(matrix: &SimilarityMatrix) -> Dendrogram {
    let n = matrix.n();
    // active cluster ids and their distance rows keyed by id
    let mut active: Vec<usize> = (0..n).collect();
    let mut size: Vec<usize> = vec![1; n];
    let mut dist: HashMap<(usize, usize), f64> = HashMap::new();
    for i in 0..n {
        for j in i + 1..n {
            dist.insert((i, j), 1.0 - matrix.get(i, j));
        }
    }
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        let mut height = f64::INFINITY;
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                let d = dist[&key(a, b)];
                height = height.min(d);
                if best.is_none_or(|(bd, _, _)| d < bd - TIE_EPS) {
                    best = Some((d, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two active clusters");
        let id = n + merges.len();
        let (na, nb) = (size[a], size[b]);
        size.push(na + nb);
        active.retain(|&c| c != a && c != b);
        for &c in &active {
            let (da, db) = (dist[&key(a, c)], dist[&key(b, c)]);
            // weighted mean written so that it never drops below min(da, db)
            let (lo, hi, w_hi) = if da <= db {
                (da, db, nb as f64)
            } else {
                (db, da, na as f64)
            };
            dist.insert(key(c, id), lo + (hi - lo) * (w_hi / (na + nb) as f64));
        }
        active.push(id);
        merges.push(Merge {
            left: a,
            right: b,
            height,
            count: na + nb,
        });
    }
    Dendrogram { n, merges }
}

/// Cluster labels after stopping the merges at `k` clusters. Clusters are
/// numbered by their smallest member.
pub fn cut(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendrogram.n;
    if k < 1 || k > n {
        return Err(Error::invalid(format!("cannot cut {n} items into {k} clusters")));
    }
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut alive: BTreeSet<usize> = (0..n).collect();
    for m in &dendrogram.merges[..n - k] {
        let mut merged = std::mem::take(&mut members[m.left]);
        merged.append(&mut std::mem::take(&mut members[m.right]));
        members.push(merged);
        alive.remove(&m.left);
        alive.remove(&m.right);
        alive.insert(members.len() - 1);
    }
    let mut clusters: Vec<&Vec<usize>> = alive.iter().map(|&c| &members[c]).collect();
    clusters.sort_by_key(|c| c.iter().min().copied());
    let mut out = vec![0; n];
    for (label, c) in clusters.iter().enumerate() {
        for &i in c.iter() {
            out[i] = label;
        }
    }
    Ok(out)
}

/// Σ over clusters of the largest class count, divided by the number of items.
pub fn purity<T: Eq + Hash>(assignment: &[usize], truth: &[T]) -> Result<f64> {
    if assignment.len() != truth.len() || assignment.is_empty() {
        return Err(Error::invalid(format!(
            "{} assignments vs {} labels",
            assignment.len(),
            truth.len()
        )));
    }
    let mut counts: HashMap<(usize, &T), usize> = HashMap::new();
    for (&c, t) in assignment.iter().zip(truth) {
        *counts.entry((c, t)).or_default() += 1;
    }
    let mut best: HashMap<usize, usize> = HashMap::new();
    for ((c, _), k) in counts {
        let b = best.entry(c).or_default();
        *b = (*b).max(k);
    }
    Ok(best.values().sum::<usize>() as f64 / assignment.len() as f64)
}

/// Ground-truth group index of every lesson, and the number of groups.
pub fn truth_labels(db: &LessonDatabase) -> (Vec<usize>, usize) {
    let groups: BTreeMap<_, usize> = db.groups().keys().enumerate().map(|(k, &g)| (g, k)).collect();
    (db.lessons().iter().map(|l| groups[&l.group()]).collect(), groups.len())
}

/// Purity of the dendrogram cut at the number of populated ground-truth groups.
pub fn purity_at_truth_k(db: &LessonDatabase, matrix: &SimilarityMatrix) -> Result<f64> {
    let (labels, k) = truth_labels(db);
    purity(&cut(&agglomerate(matrix), k)?, &labels)
}

pub fn write_linkage_csv<W: Write>(dendrogram: &Dendrogram, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(format!("linkage csv: {e}"));
    w.write_record(["left", "right", "height", "count"]).map_err(err)?;
    for m in &dendrogram.merges {
        w.write_record([m.left.to_string(), m.right.to_string(), m.height.to_string(), m.count.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_assignments_csv<W: Write>(lesson_ids: &[String], assignment: &[usize], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(format!("assignment csv: {e}"));
    w.write_record(["lesson_id", "cluster"]).map_err(err)?;
    for (id, c) in lesson_ids.iter().zip(assignment) {
        w.write_record([id.clone(), c.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}
