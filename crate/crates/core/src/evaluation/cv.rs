use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::SimilarityModel;
use crate::error::{Error, Result};
use crate::lessons::{ground_truth_similar, LessonDatabase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    /// `k` random splits holding out a fraction of the wells.
    RandomWells,
    /// Each well with at least two lessons is the test set once.
    LeaveOneWellOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub mode: CvMode,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 20,
            test_fraction: 0.25,
            seed: 0,
            mode: CvMode::RandomWells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvIteration {
    pub train_wells: Vec<String>,
    pub test_wells: Vec<String>,
    pub n_train_lessons: usize,
    pub n_test_lessons: usize,
}

/// Pooled test-pair labels and scores over all iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub labels: Vec<bool>,
    pub scores: Vec<f64>,
    pub iterations: Vec<CvIteration>,
}

impl CvResult {
    pub fn prevalence(&self) -> f64 {
        self.labels.iter().filter(|&&y| y).count() as f64 / self.labels.len() as f64
    }
}

/// A training set needs a positive and a negative pair.
fn trainable(db: &LessonDatabase) -> bool {
    let groups = db.groups();
    groups.len() >= 2 && groups.values().any(|g| g.len() >= 2)
}

fn usable(db: &LessonDatabase, test: &BTreeSet<&str>) -> bool {
    let n_test: usize = test.iter().map(|w| db.lessons_of_well(w).len()).sum();
    if n_test < 2 {
        return false;
    }
    let train: BTreeSet<&str> = db.lesson_wells().into_iter().filter(|w| !test.contains(w)).collect();
    trainable(&db.subset_wells(&train))
}

fn draw_splits<'a>(db: &'a LessonDatabase, cfg: &CvConfig) -> Result<Vec<BTreeSet<&'a str>>> {
    let wells = db.lesson_wells();
    if wells.len() < 2 {
        return Err(Error::Split(format!(
            "lessons come from {} well(s); need at least 2",
            wells.len()
        )));
    }
    match cfg.mode {
        CvMode::RandomWells => {
            if cfg.k < 1 {
                return Err(Error::invalid("k must be at least 1"));
            }
            if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
                return Err(Error::invalid("test_fraction must be in (0, 1)"));
            }
            let n_test = ((wells.len() as f64 * cfg.test_fraction).round() as usize).clamp(1, wells.len() - 1);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut splits = Vec::with_capacity(cfg.k);
            for it in 0..cfg.k {
                let mut found = None;
                for _ in 0..100 {
                    let mut order = wells.clone();
                    order.shuffle(&mut rng);
                    let test: BTreeSet<&str> = order[..n_test].iter().copied().collect();
                    if usable(db, &test) {
                        found = Some(test);
                        break;
                    }
                }
                splits.push(found.ok_or_else(|| {
                    Error::Split(format!("no usable well split found for iteration {it} in 100 draws"))
                })?);
            }
            Ok(splits)
        }
        CvMode::LeaveOneWellOut => {
            let splits: Vec<BTreeSet<&str>> = wells
                .iter()
                .map(|&w| BTreeSet::from([w]))
                .filter(|test| usable(db, test))
                .collect();
            if splits.is_empty() {
                return Err(Error::Split("no well has two lessons and a trainable remainder".into()));
            }
            Ok(splits)
        }
    }
}

/// Well-disjoint cross-validation of a similarity-model trainer.
///
/// Each iteration trains on the lessons of the training wells and scores every
/// pair of test-well lessons.
pub fn cross_validate<F>(db: &LessonDatabase, trainer: F, cfg: &CvConfig) -> Result<CvResult>
where
    F: Fn(&LessonDatabase) -> Result<SimilarityModel> + Sync,
{
    let splits = draw_splits(db, cfg)?;
    let per_iteration = splits
        .par_iter()
        .map(|test| {
            let train_wells: BTreeSet<&str> =
                db.lesson_wells().into_iter().filter(|w| !test.contains(w)).collect();
            let train = db.subset_wells(&train_wells);
            let held = db.subset_wells(test);
            if train.lessons().iter().any(|l| test.contains(l.well_id.as_str())) {
                return Err(Error::Split("a test well leaked into training".into()));
            }
            let model = trainer(&train)?;
            let mut labels = Vec::new();
            let mut scores = Vec::new();
            for a in 0..held.len() {
                for b in a + 1..held.len() {
                    labels.push(ground_truth_similar(held.lesson(a), held.lesson(b)));
                    scores.push(model.score_features(held.features(a), held.features(b))?);
                }
            }
            let it = CvIteration {
                train_wells: train_wells.iter().map(|s| s.to_string()).collect(),
                test_wells: test.iter().map(|s| s.to_string()).collect(),
                n_train_lessons: train.len(),
                n_test_lessons: held.len(),
            };
            Ok((it, labels, scores))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = CvResult {
        labels: Vec::new(),
        scores: Vec::new(),
        iterations: Vec::new(),
    };
    for (it, l, s) in per_iteration {
        out.iterations.push(it);
        out.labels.extend(l);
        out.scores.extend(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureLayout;
    use crate::gbdt::{GbdtModel, TrainConfig};
    use crate::synthgen::{generate_corpus, AccidentType, Composition, OperationType};

    fn constant_trainer(db: &LessonDatabase) -> Result<SimilarityModel> {
        SimilarityModel::new(GbdtModel::constant(db.layout().pair_hash(), 0.5), db.layout().clone())
    }

    fn db() -> LessonDatabase {
        let mut comp = Composition::new();
        comp.insert((AccidentType::Stuck, OperationType::Drilling), 8);
        comp.insert((AccidentType::Washout, OperationType::Drilling), 6);
        comp.insert((AccidentType::MudLoss, OperationType::TrippingIn), 6);
        LessonDatabase::from_corpus(&generate_corpus(9, &comp).unwrap(), FeatureLayout::default()).unwrap()
    }

    #[test]
    fn splits_are_disjoint_and_pooled_counts_add_up() {
        let db = db();
        let cfg = CvConfig { k: 6, seed: 3, ..Default::default() };
        let r = cross_validate(&db, constant_trainer, &cfg).unwrap();
        assert_eq!(r.iterations.len(), 6);
        let expected: usize = r.iterations.iter().map(|i| i.n_test_lessons * (i.n_test_lessons - 1) / 2).sum();
        assert_eq!(r.labels.len(), expected);
        for it in &r.iterations {
            assert!(it.n_test_lessons >= 2);
            let train: BTreeSet<_> = it.train_wells.iter().collect();
            assert!(it.test_wells.iter().all(|w| !train.contains(w)));
        }
        let again = cross_validate(&db, constant_trainer, &cfg).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn single_well_cannot_split() {
        let db = db();
        let one = db.subset(db.lessons_of_well(db.lesson_wells()[0]));
        let cfg = CvConfig { k: 1, ..Default::default() };
        assert!(matches!(cross_validate(&one, constant_trainer, &cfg), Err(Error::Split(_))));
    }

    #[test]
    fn leave_one_well_out_uses_multi_lesson_wells() {
        let db = db();
        let cfg = CvConfig { mode: CvMode::LeaveOneWellOut, ..Default::default() };
        let r = cross_validate(&db, constant_trainer, &cfg).unwrap();
        let multi = db.lesson_wells().iter().filter(|w| db.lessons_of_well(w).len() >= 2).count();
        assert_eq!(r.iterations.len(), multi);
        assert!(r.iterations.iter().all(|i| i.test_wells.len() == 1));
    }

    #[test]
    fn trained_model_beats_chance() {
        let db = db();
        let cfg = CvConfig { k: 4, seed: 1, ..Default::default() };
        let tc = TrainConfig { n_trees: 50, ..Default::default() };
        let r = cross_validate(&db, |d| crate::detector::train_similarity_model(d, &tc), &cfg).unwrap();
        let auc = super::super::roc_auc(&r.labels, &r.scores).unwrap();
        assert!(auc > 0.6, "auc {auc}");
    }
}
