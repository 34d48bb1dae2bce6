//! Analogues search: score a query interval against every lesson, rank the
//! lessons, vote on the accident type and raise alarms while replaying a well.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{interval_features, pair_features_into, FeatureLayout, FeatureVector};
use crate::gbdt::{self, fit, FeatureMatrix, GbdtModel, TrainConfig};
use crate::lessons::{build_pair_dataset, pair_rows, LessonDatabase};
use crate::synthgen::AccidentType;
use crate::telemetry::{slice_interval, ChannelView, TelemetrySeries, INTERVAL_TICKS};

/// Trained classifier together with the feature layout it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityModel {
    model: GbdtModel,
    layout: FeatureLayout,
}

impl SimilarityModel {
    pub fn new(model: GbdtModel, layout: FeatureLayout) -> Result<Self> {
        if model.layout() != layout.pair_hash() {
            return Err(Error::LayoutMismatch {
                expected: model.layout(),
                found: layout.pair_hash(),
            });
        }
        Ok(SimilarityModel { model, layout })
    }

    pub fn gbdt(&self) -> &GbdtModel {
        &self.model
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, gbdt::serialize(&self.model)).map_err(|e| Error::io(path, e))
    }

    /// Loads a model file and checks it against `layout`.
    pub fn load(path: impl AsRef<Path>, layout: FeatureLayout) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Self::new(gbdt::deserialize(&bytes)?, layout)
    }

    fn check(&self, db: &LessonDatabase) -> Result<()> {
        if db.layout().hash() != self.layout.hash() {
            return Err(Error::LayoutMismatch {
                expected: self.layout.hash(),
                found: db.layout().hash(),
            });
        }
        Ok(())
    }

    /// Similarity of two single-interval feature vectors.
    pub fn score_features(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
        let h = self.layout.hash();
        if a.layout != h || b.layout != h {
            return Err(Error::LayoutMismatch {
                expected: h,
                found: if a.layout != h { a.layout } else { b.layout },
            });
        }
        let mut buf = Vec::with_capacity(3 * a.len());
        pair_features_into(&a.values, &b.values, &mut buf);
        Ok(self.model.predict_row(&buf))
    }
}

/// Trains on every lesson pair of `db`.
pub fn train_similarity_model(db: &LessonDatabase, config: &TrainConfig) -> Result<SimilarityModel> {
    let ds = build_pair_dataset(db)?;
    let model = fit(&ds.x, &ds.y, config)?;
    SimilarityModel::new(model, db.layout().clone())
}

/// Like [`train_similarity_model`], but also includes each lesson paired with
/// itself as a positive example.
pub fn train_similarity_model_with_self_pairs(
    db: &LessonDatabase,
    config: &TrainConfig,
) -> Result<SimilarityModel> {
    let mut ds = build_pair_dataset(db)?;
    let selfs: Vec<(usize, usize)> = (0..db.len()).map(|i| (i, i)).collect();
    let (layout, n_cols) = (ds.x.layout(), ds.x.n_cols());
    let mut data = ds.x.into_data();
    data.extend(pair_rows(db, &selfs));
    ds.y.extend(std::iter::repeat_n(true, selfs.len()));
    let x = FeatureMatrix::new(layout, n_cols, data)?;
    let model = fit(&x, &ds.y, config)?;
    SimilarityModel::new(model, db.layout().clone())
}

/// Similarity of a query interval to lesson `lesson` of `db`.
pub fn score_pair<V: ChannelView + ?Sized>(
    model: &SimilarityModel,
    query: &V,
    db: &LessonDatabase,
    lesson: usize,
) -> Result<f64> {
    model.check(db)?;
    let q = interval_features(query, &model.layout)?;
    model.score_features(&q, db.features(lesson))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analogue {
    pub lesson_id: String,
    pub accident_type: AccidentType,
    pub similarity: f64,
}

/// Every lesson scored against query features, most similar first; ties by lesson id.
pub fn rank_features(model: &SimilarityModel, query: &FeatureVector, db: &LessonDatabase) -> Result<Vec<Analogue>> {
    if db.is_empty() {
        return Err(Error::invalid("lesson database is empty"));
    }
    model.check(db)?;
    let mut out = (0..db.len())
        .map(|i| {
            Ok(Analogue {
                lesson_id: db.lesson(i).lesson_id.clone(),
                accident_type: db.lesson(i).accident_type,
                similarity: model.score_features(query, db.features(i))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.lesson_id.cmp(&b.lesson_id))
    });
    Ok(out)
}

pub fn rank_analogues<V: ChannelView + ?Sized>(
    model: &SimilarityModel,
    query: &V,
    db: &LessonDatabase,
) -> Result<Vec<Analogue>> {
    let q = interval_features(query, &model.layout)?;
    rank_features(model, &q, db)
}

/// Most common accident type among the first five analogues.
///
/// Ties go to the type with the larger summed similarity, then to the type
/// listed first.
pub fn top5_vote(ranked: &[Analogue]) -> Result<AccidentType> {
    if ranked.is_empty() {
        return Err(Error::invalid("cannot vote on an empty ranking"));
    }
    let mut tally: Vec<(AccidentType, usize, f64)> = Vec::new();
    for a in ranked.iter().take(5) {
        match tally.iter_mut().find(|t| t.0 == a.accident_type) {
            Some(t) => {
                t.1 += 1;
                t.2 += a.similarity;
            }
            None => tally.push((a.accident_type, 1, a.similarity)),
        }
    }
    tally.sort_by(|x, y| y.1.cmp(&x.1).then(y.2.total_cmp(&x.2)).then(x.0.cmp(&y.0)));
    Ok(tally[0].0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub threshold: f64,
    pub step_ticks: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            threshold: 0.7,
            step_ticks: 60,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!("threshold {} not in (0, 1)", self.threshold)));
        }
        if self.step_ticks < 1 {
            return Err(Error::invalid("step_ticks must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub well_id: String,
    pub tick: usize,
    /// UTC epoch seconds of `tick`.
    pub time: i64,
    pub max_similarity: f64,
    /// Up to five `(lesson_id, similarity)`, most similar first.
    pub top5: Vec<(String, f64)>,
    pub voted_type: AccidentType,
}

/// Ranking summary at one scoring point of a replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringPoint {
    pub tick: usize,
    pub top5: Vec<Analogue>,
    pub voted_type: AccidentType,
}

impl ScoringPoint {
    pub fn max_similarity(&self) -> f64 {
        self.top5[0].similarity
    }
}

/// All scoring points of one well; alarms at any threshold are a filter of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTrace {
    pub well_id: String,
    pub start_time: i64,
    pub length: usize,
    pub points: Vec<ScoringPoint>,
}

impl SimilarityTrace {
    pub fn alarms(&self, threshold: f64) -> Vec<Alarm> {
        self.points
            .iter()
            .filter(|p| p.max_similarity() > threshold)
            .map(|p| Alarm {
                well_id: self.well_id.clone(),
                tick: p.tick,
                time: self.start_time + p.tick as i64 * crate::telemetry::TICK_SECONDS as i64,
                max_similarity: p.max_similarity(),
                top5: p.top5.iter().map(|a| (a.lesson_id.clone(), a.similarity)).collect(),
                voted_type: p.voted_type,
            })
            .collect()
    }

    /// Series duration in days.
    pub fn duration_days(&self) -> f64 {
        self.length as f64 * crate::telemetry::TICK_SECONDS as f64 / 86_400.0
    }
}

/// Scores the trailing 720-tick window at ticks 720, 720 + step, ...
pub fn similarity_trace(
    series: &TelemetrySeries,
    model: &SimilarityModel,
    db: &LessonDatabase,
    step_ticks: usize,
) -> Result<SimilarityTrace> {
    if series.len() < INTERVAL_TICKS {
        return Err(Error::invalid(format!(
            "series of {} ticks is shorter than one {INTERVAL_TICKS}-tick window",
            series.len()
        )));
    }
    if step_ticks < 1 {
        return Err(Error::invalid("step_ticks must be at least 1"));
    }
    if db.is_empty() {
        return Err(Error::invalid("lesson database is empty"));
    }
    model.check(db)?;
    let ticks: Vec<usize> = (INTERVAL_TICKS..=series.len()).step_by(step_ticks).collect();
    let points = ticks
        .par_iter()
        .map(|&t| {
            let iv = slice_interval(series, t - INTERVAL_TICKS, t)?;
            let q = interval_features(&iv, &model.layout)?;
            let mut ranked = rank_features(model, &q, db)?;
            let voted_type = top5_vote(&ranked)?;
            ranked.truncate(5);
            Ok(ScoringPoint {
                tick: t,
                top5: ranked,
                voted_type,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityTrace {
        well_id: series.well_id().to_string(),
        start_time: series.start_time(),
        length: series.len(),
        points,
    })
}

/// Alarms of a streaming replay, in tick order.
pub fn replay(
    series: &TelemetrySeries,
    model: &SimilarityModel,
    db: &LessonDatabase,
    config: &DetectorConfig,
) -> Result<Vec<Alarm>> {
    config.validate()?;
    Ok(similarity_trace(series, model, db, config.step_ticks)?.alarms(config.threshold))
}

const ALARM_HEADER: [&str; 7] = [
    "well_id",
    "tick",
    "time",
    "max_similarity",
    "voted_type",
    "top5_lesson_ids",
    "top5_similarities",
];

pub fn write_alarms<W: Write>(alarms: &[Alarm], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(format!("alarm csv: {e}"));
    w.write_record(ALARM_HEADER).map_err(csv_err)?;
    for a in alarms {
        let time = DateTime::<Utc>::from_timestamp(a.time, 0)
            .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
            .unwrap_or_else(|| a.time.to_string());
        let ids: Vec<&str> = a.top5.iter().map(|(id, _)| id.as_str()).collect();
        let sims: Vec<String> = a.top5.iter().map(|(_, s)| s.to_string()).collect();
        w.write_record([
            a.well_id.clone(),
            a.tick.to_string(),
            time,
            a.max_similarity.to_string(),
            a.voted_type.name().to_string(),
            ids.join("|"),
            sims.join("|"),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(format!("alarm csv: {e}")))?;
    Ok(())
}

pub fn write_alarms_file(alarms: &[Alarm], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_alarms(alarms, std::io::BufWriter::new(file))
}

pub fn read_alarms<R: Read>(input: R, source: &Path) -> Result<Vec<Alarm>> {
    let mut rdr = csv::Reader::from_reader(input);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != ALARM_HEADER.len() {
            return Err(parse_err(line, format!("expected {} fields", ALARM_HEADER.len())));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|_| parse_err(line, format!("bad {}", ALARM_HEADER[j])))
        };
        let tick: usize = rec[1].parse().map_err(|_| parse_err(line, "bad tick".into()))?;
        let time = match rec[2].parse::<i64>() {
            Ok(t) => t,
            Err(_) => DateTime::parse_from_rfc3339(&rec[2])
                .map_err(|_| parse_err(line, "bad time".into()))?
                .timestamp(),
        };
        let voted_type = AccidentType::from_name(&rec[4])
            .ok_or_else(|| parse_err(line, format!("unknown accident type `{}`", &rec[4])))?;
        let ids: Vec<&str> = rec[5].split('|').filter(|s| !s.is_empty()).collect();
        let sims = rec[6]
            .split('|')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| parse_err(line, "bad top5 similarity".into()))?;
        if ids.len() != sims.len() {
            return Err(parse_err(line, "top5 ids and similarities differ in length".into()));
        }
        out.push(Alarm {
            well_id: rec[0].to_string(),
            tick,
            time,
            max_similarity: num(3)?,
            top5: ids.into_iter().map(String::from).zip(sims).collect(),
            voted_type,
        });
    }
    Ok(out)
}

pub fn read_alarms_file(path: impl AsRef<Path>) -> Result<Vec<Alarm>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    read_alarms(std::io::BufReader::new(file), path)
}
