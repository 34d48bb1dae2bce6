//! The accident knowledge base: lessons, their 2-hour intervals, ground-truth
//! pair labels and the pair dataset the similarity model is trained on.
//!
//! A manifest is a JSON array of lesson records; telemetry files are referenced
//! relative to the manifest's directory and shared between lessons of one well.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{interval_features, pair_features_into, FeatureLayout, FeatureVector};
use crate::gbdt::FeatureMatrix;
use crate::synthgen::{AccidentType, Corpus, OperationType};
use crate::telemetry::{
    parse_csv, slice_interval, write_csv, ChannelId, ChannelView, Interval, Schema, TelemetrySeries,
    INTERVAL_TICKS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lesson {
    pub lesson_id: String,
    pub well_id: String,
    pub oilfield_id: Option<u32>,
    pub accident_type: AccidentType,
    pub operation: OperationType,
    /// Tick at which the accident occurred; the lesson interval ends here.
    pub anchor_tick: usize,
    /// Depth the anchor was originally given as, if any.
    pub anchor_depth: Option<f64>,
}

impl Lesson {
    /// `[anchor − 720, anchor)`.
    pub fn interval_range(&self) -> (usize, usize) {
        (self.anchor_tick - INTERVAL_TICKS, self.anchor_tick)
    }

    pub fn group(&self) -> (AccidentType, OperationType) {
        (self.accident_type, self.operation)
    }
}

/// The 720 ticks preceding `anchor_tick`.
pub fn extract_lesson_interval(series: &TelemetrySeries, anchor_tick: usize) -> Result<Interval<'_>> {
    if anchor_tick < INTERVAL_TICKS {
        return Err(Error::invalid(format!(
            "anchor tick {anchor_tick} is earlier than one {INTERVAL_TICKS}-tick interval"
        )));
    }
    slice_interval(series, anchor_tick - INTERVAL_TICKS, anchor_tick)
}

/// Two lessons are similar iff accident type and drilling operation coincide.
pub fn ground_truth_similar(a: &Lesson, b: &Lesson) -> bool {
    a.accident_type == b.accident_type && a.operation == b.operation
}

/// First tick at which the observed bit depth reaches `depth`.
pub fn depth_to_tick(series: &TelemetrySeries, depth: f64) -> Option<usize> {
    let (values, missing) = series.channel(ChannelId::BitDepth)?;
    (0..values.len()).find(|&t| !missing[t] && values[t] >= depth)
}

/// Lessons with their telemetry and cached interval features.
#[derive(Debug, Clone)]
pub struct LessonDatabase {
    layout: FeatureLayout,
    lessons: Vec<Lesson>,
    features: Vec<FeatureVector>,
    wells: BTreeMap<String, Arc<TelemetrySeries>>,
    /// Telemetry file of each well, relative to the manifest directory.
    sources: BTreeMap<String, String>,
    by_well: BTreeMap<String, Vec<usize>>,
    by_group: BTreeMap<(AccidentType, OperationType), Vec<usize>>,
}

impl LessonDatabase {
    pub fn new(
        lessons: Vec<Lesson>,
        wells: BTreeMap<String, Arc<TelemetrySeries>>,
        layout: FeatureLayout,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for l in &lessons {
            if !seen.insert(l.lesson_id.as_str()) {
                return Err(Error::invalid(format!("duplicate lesson id {}", l.lesson_id)));
            }
            if !wells.contains_key(&l.well_id) {
                return Err(Error::invalid(format!(
                    "lesson {} refers to well {} without telemetry",
                    l.lesson_id, l.well_id
                )));
            }
        }
        let features = lessons
            .par_iter()
            .map(|l| {
                let series = &wells[&l.well_id];
                let iv = extract_lesson_interval(series, l.anchor_tick)
                    .map_err(|e| Error::invalid(format!("lesson {}: {e}", l.lesson_id)))?;
                interval_features(&iv, &layout)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(layout, lessons, features, wells, BTreeMap::new()))
    }

    fn assemble(
        layout: FeatureLayout,
        lessons: Vec<Lesson>,
        features: Vec<FeatureVector>,
        wells: BTreeMap<String, Arc<TelemetrySeries>>,
        sources: BTreeMap<String, String>,
    ) -> Self {
        let mut by_well: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_group: BTreeMap<_, Vec<usize>> = BTreeMap::new();
        for (i, l) in lessons.iter().enumerate() {
            by_well.entry(l.well_id.clone()).or_default().push(i);
            by_group.entry(l.group()).or_default().push(i);
        }
        LessonDatabase {
            layout,
            lessons,
            features,
            wells,
            sources,
            by_well,
            by_group,
        }
    }

    /// Database over a generated corpus, keeping every well's telemetry.
    pub fn from_corpus(corpus: &Corpus, layout: FeatureLayout) -> Result<Self> {
        let wells = corpus
            .wells
            .iter()
            .map(|w| (w.plan.well_id.clone(), Arc::new(w.series.clone())))
            .collect();
        let lessons = corpus
            .lessons
            .iter()
            .map(|s| Lesson {
                lesson_id: s.lesson_id.clone(),
                well_id: s.well_id.clone(),
                oilfield_id: Some(s.oilfield_id),
                accident_type: s.accident_type,
                operation: s.operation,
                anchor_tick: s.anchor_tick,
                anchor_depth: None,
            })
            .collect();
        Self::new(lessons, wells, layout)
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.lessons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lessons.is_empty()
    }

    pub fn lessons(&self) -> &[Lesson] {
        &self.lessons
    }

    pub fn lesson(&self, i: usize) -> &Lesson {
        &self.lessons[i]
    }

    pub fn features(&self, i: usize) -> &FeatureVector {
        &self.features[i]
    }

    pub fn index_of(&self, lesson_id: &str) -> Option<usize> {
        self.lessons.iter().position(|l| l.lesson_id == lesson_id)
    }

    pub fn series(&self, well_id: &str) -> Option<&Arc<TelemetrySeries>> {
        self.wells.get(well_id)
    }

    pub fn wells(&self) -> impl Iterator<Item = (&str, &Arc<TelemetrySeries>)> {
        self.wells.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Wells that carry at least one lesson, in id order.
    pub fn lesson_wells(&self) -> Vec<&str> {
        self.by_well.keys().map(String::as_str).collect()
    }

    pub fn lessons_of_well(&self, well_id: &str) -> &[usize] {
        self.by_well.get(well_id).map_or(&[], Vec::as_slice)
    }

    pub fn groups(&self) -> &BTreeMap<(AccidentType, OperationType), Vec<usize>> {
        &self.by_group
    }

    /// The lesson's interval inside its well's telemetry.
    pub fn interval(&self, i: usize) -> Interval<'_> {
        let l = &self.lessons[i];
        let (s, e) = l.interval_range();
        slice_interval(&self.wells[&l.well_id], s, e).expect("validated at construction")
    }

    /// Telemetry file of a well, relative to the manifest directory.
    pub fn source_file(&self, well_id: &str) -> String {
        self.sources
            .get(well_id)
            .cloned()
            .unwrap_or_else(|| format!("wells/{well_id}.csv"))
    }

    /// Lessons at `indices` (in that order), reusing cached features.
    pub fn subset(&self, indices: &[usize]) -> LessonDatabase {
        let lessons: Vec<Lesson> = indices.iter().map(|&i| self.lessons[i].clone()).collect();
        let features = indices.iter().map(|&i| self.features[i].clone()).collect();
        let keep: BTreeSet<&str> = lessons.iter().map(|l| l.well_id.as_str()).collect();
        let wells = self
            .wells
            .iter()
            .filter(|(k, _)| keep.contains(k.as_str()))
            .map(|(k, v)| (k.clone(), Arc::clone(v)))
            .collect();
        let sources = self
            .sources
            .iter()
            .filter(|(k, _)| keep.contains(k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Self::assemble(self.layout.clone(), lessons, features, wells, sources)
    }

    /// Lessons whose well is in `wells`.
    pub fn subset_wells(&self, wells: &BTreeSet<&str>) -> LessonDatabase {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| wells.contains(self.lessons[i].well_id.as_str()))
            .collect();
        self.subset(&idx)
    }
}

/// Pair-feature matrix over lesson pairs with their labels.
#[derive(Debug, Clone)]
pub struct PairDataset {
    pub x: FeatureMatrix,
    pub y: Vec<bool>,
    /// Database indices `(a, b)` of each row.
    pub pairs: Vec<(usize, usize)>,
}

impl PairDataset {
    pub fn prevalence(&self) -> f64 {
        self.y.iter().filter(|&&y| y).count() as f64 / self.y.len() as f64
    }
}

/// Row-major pair features for the given index pairs.
pub(crate) fn pair_rows(db: &LessonDatabase, pairs: &[(usize, usize)]) -> Vec<f64> {
    let width = 3 * db.layout.len();
    let mut data = vec![0.0; pairs.len() * width];
    data.par_chunks_mut(width.max(1)).zip(pairs).for_each(|(row, &(a, b))| {
        let mut buf = Vec::with_capacity(width);
        pair_features_into(&db.features[a].values, &db.features[b].values, &mut buf);
        row.copy_from_slice(&buf);
    });
    data
}

/// One row per unordered pair `{a, b}`, `a < b`, labelled by [`ground_truth_similar`].
pub fn build_pair_dataset(db: &LessonDatabase) -> Result<PairDataset> {
    if db.len() < 2 {
        return Err(Error::invalid(format!(
            "pair dataset needs at least 2 lessons, got {}",
            db.len()
        )));
    }
    let n = db.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let y = pairs
        .iter()
        .map(|&(a, b)| ground_truth_similar(&db.lessons[a], &db.lessons[b]))
        .collect();
    let x = FeatureMatrix::new(db.layout.pair_hash(), 3 * db.layout.len(), pair_rows(db, &pairs))?;
    Ok(PairDataset { x, y, pairs })
}

/// Manifest entry; exactly one of `anchor_tick` and `anchor_depth` is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub lesson_id: String,
    pub well_id: String,
    pub accident_type: AccidentType,
    pub operation: OperationType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_tick: Option<usize>,
    pub telemetry_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oilfield_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_depth: Option<f64>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| {
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

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    read_json(path.as_ref())
}

/// Loads a manifest and the telemetry it references.
pub fn load_manifest(path: impl AsRef<Path>, layout: &FeatureLayout) -> Result<LessonDatabase> {
    let path = path.as_ref();
    let records = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();

    let mut sources: BTreeMap<String, String> = BTreeMap::new();
    for r in &records {
        match sources.get(&r.well_id) {
            Some(f) if *f != r.telemetry_file => {
                return Err(Error::invalid(format!(
                    "well {} refers to both {f} and {}",
                    r.well_id, r.telemetry_file
                )))
            }
            _ => {
                sources.insert(r.well_id.clone(), r.telemetry_file.clone());
            }
        }
    }
    let missing: Vec<PathBuf> = sources
        .values()
        .map(|f| base.join(f))
        .filter(|p| !p.is_file())
        .collect();
    if let Some(first) = missing.first() {
        if missing.len() > 1 {
            log::error!("manifest references {} missing telemetry files", missing.len());
        }
        return Err(Error::MissingFile(first.clone()));
    }

    let schema = Schema::canonical();
    let loaded = sources
        .par_iter()
        .map(|(well, file)| Ok((well.clone(), Arc::new(parse_csv(base.join(file), &schema)?))))
        .collect::<Result<Vec<_>>>()?;
    let wells: BTreeMap<_, _> = loaded.into_iter().collect();

    let lessons = records
        .into_iter()
        .map(|r| {
            let anchor_tick = match (r.anchor_tick, r.anchor_depth) {
                (Some(t), _) => t,
                (None, Some(d)) => depth_to_tick(&wells[&r.well_id], d).ok_or_else(|| {
                    Error::invalid(format!("lesson {}: bit never reaches depth {d}", r.lesson_id))
                })?,
                (None, None) => {
                    return Err(Error::invalid(format!(
                        "lesson {} has neither anchor_tick nor anchor_depth",
                        r.lesson_id
                    )))
                }
            };
            Ok(Lesson {
                lesson_id: r.lesson_id,
                well_id: r.well_id,
                oilfield_id: r.oilfield_id,
                accident_type: r.accident_type,
                operation: r.operation,
                anchor_tick,
                anchor_depth: r.anchor_depth,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut db = LessonDatabase::new(lessons, wells, layout.clone())?;
    db.sources = sources;
    Ok(db)
}

pub fn manifest_records(db: &LessonDatabase) -> Vec<ManifestRecord> {
    db.lessons
        .iter()
        .map(|l| ManifestRecord {
            lesson_id: l.lesson_id.clone(),
            well_id: l.well_id.clone(),
            accident_type: l.accident_type,
            operation: l.operation,
            anchor_tick: Some(l.anchor_tick),
            telemetry_file: db.source_file(&l.well_id),
            oilfield_id: l.oilfield_id,
            anchor_depth: l.anchor_depth,
        })
        .collect()
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the manifest JSON only; telemetry files are not touched.
pub fn save_manifest(db: &LessonDatabase, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), &manifest_records(db))
}

/// Writes every well's telemetry under `dir/wells/` and `dir/manifest.json`.
pub fn write_database(db: &LessonDatabase, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("wells")).map_err(|e| Error::io(dir, e))?;
    db.wells
        .par_iter()
        .map(|(well, series)| write_csv(series, dir.join(db.source_file(well))))
        .collect::<Result<Vec<_>>>()?;
    let manifest = dir.join("manifest.json");
    save_manifest(db, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_corpus, table1_composition, Composition};
    use crate::telemetry::ChannelData;
    use proptest::prelude::*;

    fn lesson(id: &str, a: AccidentType, o: OperationType) -> Lesson {
        Lesson {
            lesson_id: id.into(),
            well_id: "w".into(),
            oilfield_id: None,
            accident_type: a,
            operation: o,
            anchor_tick: 720,
            anchor_depth: None,
        }
    }

    fn flat_series(len: usize) -> TelemetrySeries {
        let channels = ChannelId::ALL
            .iter()
            .map(|&c| (c, ChannelData::observed((0..len).map(|t| t as f64).collect())))
            .collect();
        TelemetrySeries::new("w", 0, len, channels).unwrap()
    }

    #[test]
    fn interval_bounds() {
        let s = flat_series(2000);
        let iv = extract_lesson_interval(&s, 720).unwrap();
        assert_eq!((iv.start_tick(), iv.end_tick()), (0, 720));
        let iv = extract_lesson_interval(&s, 1000).unwrap();
        assert_eq!((iv.start_tick(), iv.end_tick()), (280, 1000));
        assert!(extract_lesson_interval(&s, 500).is_err());
        assert!(extract_lesson_interval(&s, 2001).is_err());
    }

    #[test]
    fn similarity_rule() {
        use AccidentType::*;
        use OperationType::*;
        let a = lesson("a", Stuck, Drilling);
        assert!(ground_truth_similar(&a, &lesson("b", Stuck, Drilling)));
        assert!(!ground_truth_similar(&a, &lesson("b", Stuck, TrippingIn)));
        assert!(ground_truth_similar(&a, &a));
    }

    fn arb_lesson() -> impl Strategy<Value = Lesson> {
        (0..6usize, 0..5usize).prop_map(|(a, o)| {
            lesson("x", AccidentType::ALL[a], OperationType::ALL[o])
        })
    }

    proptest! {
        #[test]
        fn similarity_is_an_equivalence(a in arb_lesson(), b in arb_lesson(), c in arb_lesson()) {
            prop_assert!(ground_truth_similar(&a, &a));
            prop_assert_eq!(ground_truth_similar(&a, &b), ground_truth_similar(&b, &a));
            if ground_truth_similar(&a, &b) && ground_truth_similar(&b, &c) {
                prop_assert!(ground_truth_similar(&a, &c));
            }
        }
    }

    #[test]
    fn table1_pair_counts() {
        let comp = table1_composition();
        let n: usize = comp.values().sum();
        let positives: usize = comp.values().map(|&k| k * (k - 1) / 2).sum();
        assert_eq!(n * (n - 1) / 2, 4371);
        assert_eq!(positives, 386);
        let prevalence = positives as f64 / 4371.0;
        assert!((prevalence - 0.0883).abs() < 1e-4);
    }

    #[test]
    fn pair_dataset_shapes() {
        let mut comp = Composition::new();
        comp.insert((AccidentType::Washout, OperationType::Drilling), 2);
        let db = LessonDatabase::from_corpus(&generate_corpus(1, &comp).unwrap(), FeatureLayout::default())
            .unwrap();
        let ds = build_pair_dataset(&db).unwrap();
        assert_eq!(ds.x.n_rows(), 1);
        assert_eq!(ds.y, vec![true]);
        assert_eq!(ds.pairs, vec![(0, 1)]);

        let mut comp = Composition::new();
        for (i, a) in AccidentType::ALL.iter().enumerate() {
            comp.insert((*a, OperationType::ALL[i % 5]), 1);
        }
        let db = LessonDatabase::from_corpus(&generate_corpus(2, &comp).unwrap(), FeatureLayout::default())
            .unwrap();
        let ds = build_pair_dataset(&db).unwrap();
        assert_eq!(ds.x.n_rows(), 15);
        assert!(ds.y.iter().all(|&y| !y));

        assert!(build_pair_dataset(&db.subset(&[0])).is_err());
    }

    #[test]
    fn table1_database_pairs() {
        let db = LessonDatabase::from_corpus(
            &generate_corpus(7, &table1_composition()).unwrap(),
            FeatureLayout::default(),
        )
        .unwrap();
        let ds = build_pair_dataset(&db).unwrap();
        assert_eq!(ds.x.n_rows(), 4371);
        assert_eq!(ds.y.iter().filter(|&&y| y).count(), 386);
        for i in 0..db.len() {
            assert_eq!(
                db.features(i).values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                interval_features(&db.interval(i), db.layout())
                    .unwrap()
                    .values
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn depth_anchor() {
        let s = flat_series(2000);
        assert_eq!(depth_to_tick(&s, 900.5), Some(901));
        assert_eq!(depth_to_tick(&s, 5000.0), None);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let wells = [("w".to_string(), Arc::new(flat_series(1000)))].into_iter().collect();
        let l = lesson("a", AccidentType::Stuck, OperationType::Drilling);
        assert!(LessonDatabase::new(vec![l.clone(), l], wells, FeatureLayout::default()).is_err());
    }
}
