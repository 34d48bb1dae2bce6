//! Acceptance suite: one PASS/FAIL line per criterion, asserted at the end.
//!
//! Run with `cargo test -p analogues-core --test acceptance`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use analogues::clustering::{
    ground_truth_matrix, model_matrix_train, purity_at_truth_k, uniform_l1_weights, unsupervised_l1_matrix,
};
use analogues::detector::{similarity_trace, train_similarity_model, Alarm, SimilarityModel, SimilarityTrace};
use analogues::evaluation::{
    cross_validate, pr_auc, roc_auc, score_alarms, threshold_sweep, CvConfig, CvMode, TrueEvent, WellEvents,
    DEDUP_TICKS,
};
use analogues::features::{FeatureLayout, LayoutHash};
use analogues::gbdt::{self, FeatureMatrix, Node, TrainConfig, LAMBDA};
use analogues::lessons::{load_manifest, write_database, LessonDatabase};
use analogues::robustness::{
    pool_from_db, r_table, similarity_distributions, PoolWell, RobustnessConfig, SetLabel, DEFAULT_RESAMPLES,
};
use analogues::synthgen::{
    generate_corpus, generate_holdout, table1_composition, AccidentType, GeneratedWell,
};
use analogues::telemetry::{parse_csv, write_csv, write_csv_to, ChannelId, ChannelView, Schema, TelemetrySeries};

const MAIN_SEED: u64 = 7;
const SIGN_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Fixture {
    db: LessonDatabase,
    model: SimilarityModel,
}

fn database(seed: u64) -> LessonDatabase {
    let corpus = generate_corpus(seed, &table1_composition()).unwrap();
    LessonDatabase::from_corpus(&corpus, FeatureLayout::default()).unwrap()
}

/// Lesson database and full-database model per seed, built once.
fn fixture(seed: u64) -> Arc<Fixture> {
    static CACHE: OnceLock<std::sync::Mutex<HashMap<u64, Arc<Fixture>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(f) = cache.lock().unwrap().get(&seed) {
        return f.clone();
    }
    let db = database(seed);
    let model = train_similarity_model(&db, &TrainConfig::default()).unwrap();
    let f = Arc::new(Fixture { db, model });
    cache.lock().unwrap().insert(seed, f.clone());
    f
}

fn holdout() -> &'static Vec<GeneratedWell> {
    static HOLDOUT: OnceLock<Vec<GeneratedWell>> = OnceLock::new();
    HOLDOUT.get_or_init(|| generate_holdout(MAIN_SEED, &table1_composition(), 12, 6).unwrap())
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: &[(bool, String)]) -> Outcome {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.0).map(|c| c.1.as_str()).collect();
    let all: Vec<&str> = checks.iter().map(|c| c.1.as_str()).collect();
    Outcome {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            all.join("; ")
        } else {
            format!("failed: {}", failed.join("; "))
        },
    }
}

fn within_budget(elapsed: Duration, budget_s: u64) -> (bool, String) {
    (
        elapsed.as_secs_f64() < budget_s as f64,
        format!("runtime {:.1}s < {budget_s}s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- criterion 1

fn mann_whitney(labels: &[bool], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Area under the step PR curve from counts at every distinct threshold.
fn exhaustive_pr_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let p = labels.iter().filter(|&&y| y).count() as f64;
    let (mut area, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let tp = labels.iter().zip(scores).filter(|(&y, &s)| y && s >= t).count() as f64;
        let fp = labels.iter().zip(scores).filter(|(&y, &s)| !y && s >= t).count() as f64;
        let recall = tp / p;
        area += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    area
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_roc, mut worst_pr) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let n = rng.random_range(2..=50);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        // Every other case draws from a coarse grid so that ties are common.
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random();
                if case % 2 == 0 { (s * 5.0).round() / 5.0 } else { s }
            })
            .collect();
        worst_roc = worst_roc.max((roc_auc(&labels, &scores).unwrap() - mann_whitney(&labels, &scores)).abs());
        worst_pr = worst_pr.max((pr_auc(&labels, &scores).unwrap() - exhaustive_pr_auc(&labels, &scores)).abs());
    }
    outcome(&[
        (worst_roc <= 1e-9, format!("max |roc_auc - Mann-Whitney| = {worst_roc:.1e}")),
        (worst_pr <= 1e-9, format!("max |pr_auc - exhaustive| = {worst_pr:.1e}")),
        within_budget(start.elapsed(), 10),
    ])
}

// ---------------------------------------------------------------- criterion 2

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, missing: f64) -> (FeatureMatrix, Vec<bool>) {
    let mut data = Vec::with_capacity(rows * cols);
    let mut labels = Vec::with_capacity(rows);
    for _ in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| (rng.random::<f64>() * 20.0).round() / 10.0 - 1.0).collect();
        let z = 2.0 * row[0] - row[1 % cols] + 0.5 * row[2 % cols] + rng.random_range(-0.7..0.7);
        labels.push(z > 0.0);
        data.extend(row.into_iter().map(|v| if rng.random_bool(missing) { f64::NAN } else { v }));
    }
    labels[0] = true;
    labels[1] = false;
    (FeatureMatrix::new(LayoutHash(0), cols, data).unwrap(), labels)
}

fn no_subsampling(n_trees: usize, max_depth: usize) -> TrainConfig {
    TrainConfig {
        n_trees,
        max_depth,
        row_subsample: 1.0,
        feature_subsample: 1.0,
        ..TrainConfig::default()
    }
}

fn gain(l: (f64, f64), r: (f64, f64)) -> f64 {
    let s = |(g, h): (f64, f64)| g * g / (h + LAMBDA);
    0.5 * (s(l) + s(r) - s((l.0 + r.0, l.1 + r.1)))
}

/// Best gain over every feature, cut between distinct observed values and
/// missing-value direction, respecting the minimum leaf size.
fn oracle_best_gain(x: &FeatureMatrix, rows: &[usize], g: &[f64], h: &[f64], min_leaf: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for f in 0..x.n_cols() {
        let mut cuts: Vec<f64> = rows.iter().map(|&r| x.get(r, f)).filter(|v| !v.is_nan()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for w in cuts.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            for default_left in [true, false] {
                let (mut l, mut r, mut nl, mut nr) = ((0.0, 0.0), (0.0, 0.0), 0, 0);
                for &i in rows {
                    let v = x.get(i, f);
                    if if v.is_nan() { default_left } else { v <= t } {
                        l = (l.0 + g[i], l.1 + h[i]);
                        nl += 1;
                    } else {
                        r = (r.0 + g[i], r.1 + h[i]);
                        nr += 1;
                    }
                }
                if nl >= min_leaf && nr >= min_leaf {
                    best = best.max(gain(l, r));
                }
            }
        }
    }
    best
}

/// Largest disagreement between the fitted splits and the oracle, over every
/// node of every tree.
fn split_oracle_gap(x: &FeatureMatrix, y: &[bool], cfg: &TrainConfig) -> f64 {
    let model = gbdt::fit(x, y, cfg).unwrap();
    let n = x.n_rows();
    let mut margins = vec![model.base_score(); n];
    let mut worst = 0.0f64;
    for tree in model.trees() {
        let p: Vec<f64> = margins.iter().map(|&m| gbdt::sigmoid(m)).collect();
        let g: Vec<f64> = p.iter().zip(y).map(|(&p, &y)| p - if y { 1.0 } else { 0.0 }).collect();
        let h: Vec<f64> = p.iter().map(|&p| p * (1.0 - p)).collect();
        let nodes = tree.nodes();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        let mut depth = vec![0usize; nodes.len()];
        members[0] = (0..n).collect();
        for i in 0..nodes.len() {
            let rows = std::mem::take(&mut members[i]);
            match &nodes[i] {
                Node::Split { feature, threshold, default_left, left, right, gain: stored, .. } => {
                    let (mut l, mut r) = ((0.0, 0.0), (0.0, 0.0));
                    let (mut lr, mut rr) = (Vec::new(), Vec::new());
                    for &k in &rows {
                        let v = x.get(k, *feature as usize);
                        if if v.is_nan() { *default_left } else { v <= *threshold } {
                            l = (l.0 + g[k], l.1 + h[k]);
                            lr.push(k);
                        } else {
                            r = (r.0 + g[k], r.1 + h[k]);
                            rr.push(k);
                        }
                    }
                    let best = oracle_best_gain(x, &rows, &g, &h, cfg.min_samples_leaf);
                    worst = worst.max((gain(l, r) - best).abs()).max((stored - best).abs());
                    depth[*left as usize] = depth[i] + 1;
                    depth[*right as usize] = depth[i] + 1;
                    members[*left as usize] = lr;
                    members[*right as usize] = rr;
                }
                Node::Leaf { .. } => {
                    if depth[i] < cfg.max_depth && rows.len() >= 2 * cfg.min_samples_leaf {
                        let best = oracle_best_gain(x, &rows, &g, &h, cfg.min_samples_leaf);
                        worst = worst.max(best.max(0.0));
                    }
                }
            }
        }
        for (k, m) in margins.iter_mut().enumerate() {
            *m += model.learning_rate() * tree.predict(x.row(k));
        }
    }
    worst
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let mut worst_rise = f64::NEG_INFINITY;
    for _ in 0..20 {
        let (x, y) = random_matrix(&mut rng, 300, 6, 0.1);
        let (model, history) = gbdt::fit_traced(&x, &y, &no_subsampling(200, 4)).unwrap();
        let base = gbdt::log_loss(&vec![model.base_score(); y.len()], &y);
        let mut prev = base;
        for &l in &history {
            worst_rise = worst_rise.max(l - prev);
            prev = l;
        }
    }

    let mut worst_gap = 0.0f64;
    for case in 0..20 {
        let rows = rng.random_range(10..=50);
        let cols = rng.random_range(1..=5);
        let (x, y) = random_matrix(&mut rng, rows, cols, if case % 2 == 0 { 0.0 } else { 0.15 });
        let cfg = TrainConfig { min_samples_leaf: rng.random_range(1..=5), ..no_subsampling(5, 3) };
        worst_gap = worst_gap.max(split_oracle_gap(&x, &y, &cfg));
    }

    let xs: Vec<f64> = (0..100).map(|i| if i < 50 { -1.0 - i as f64 / 50.0 } else { (i - 49) as f64 / 50.0 }).collect();
    let ys: Vec<bool> = xs.iter().map(|&v| v > 0.0).collect();
    let sep = FeatureMatrix::new(LayoutHash(0), 1, xs.clone()).unwrap();
    let model = gbdt::fit(&sep, &ys, &TrainConfig::default()).unwrap();
    let preds: Vec<f64> = xs.iter().map(|&v| model.predict_row(&[v])).collect();
    let sep_auc = roc_auc(&ys, &preds).unwrap();
    let accuracy = preds.iter().zip(&ys).filter(|(&p, &y)| (p > 0.5) == y).count() as f64 / 100.0;

    outcome(&[
        (worst_rise <= 0.0, format!("largest per-round loss change {worst_rise:.2e} <= 0")),
        (worst_gap <= 1e-9, format!("max split gain gap vs oracle {worst_gap:.1e}")),
        (sep_auc == 1.0 && accuracy == 1.0, format!("separable AUC {sep_auc}, accuracy {accuracy}")),
        within_budget(start.elapsed(), 60),
    ])
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let db = database(MAIN_SEED);
    let cfg = CvConfig { k: 20, test_fraction: 0.25, seed: MAIN_SEED, mode: CvMode::RandomWells };
    let res = cross_validate(&db, |train| train_similarity_model(train, &TrainConfig::default()), &cfg).unwrap();
    let roc = roc_auc(&res.labels, &res.scores).unwrap();
    let pr = pr_auc(&res.labels, &res.scores).unwrap();
    let prevalence = res.prevalence();
    outcome(&[
        (roc >= 0.85, format!("ROC AUC {roc:.4} >= 0.85")),
        (pr >= 0.45, format!("PR AUC {pr:.4} >= 0.45")),
        (roc >= 0.5 + 0.2, format!("ROC AUC exceeds 0.5 by {:.3}", roc - 0.5)),
        (pr >= prevalence + 0.2, format!("PR AUC exceeds prevalence {prevalence:.4} by {:.3}", pr - prevalence)),
        within_budget(start.elapsed(), 300),
    ])
}

// ---------------------------------------------------------------- criterion 4

fn alarm(tick: usize, voted_type: AccidentType) -> Alarm {
    Alarm {
        well_id: "w".into(),
        tick,
        time: tick as i64 * 10,
        max_similarity: 0.9,
        top5: vec![("lesson-000".into(), 0.9)],
        voted_type,
    }
}

fn well(duration_ticks: usize, events: &[(AccidentType, usize)]) -> WellEvents {
    WellEvents {
        well_id: "w".into(),
        duration_ticks,
        events: events.iter().map(|&(accident_type, anchor_tick)| TrueEvent { accident_type, anchor_tick }).collect(),
    }
}

fn criterion_4() -> Outcome {
    use AccidentType::*;
    let start = Instant::now();
    let anchor = 5000;
    let w = well(20_000, &[(Stuck, anchor)]);

    let before = score_alarms(&[alarm(anchor - 1080, Stuck)], &[w.clone()]).unwrap();
    let near = score_alarms(&[alarm(12_000, Washout), alarm(12_180, Washout)], &[w.clone()]).unwrap();
    let after = score_alarms(&[alarm(anchor + 1080, Stuck)], &[w]).unwrap();
    let fixtures_ok = (before.total_tp(), before.total_fp()) == (1, 0)
        && (near.total_tp(), near.total_fp()) == (0, 1)
        && (after.total_tp(), after.total_fp()) == (0, 1);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1000..20_000);
        let events: Vec<(AccidentType, usize)> = (0..rng.random_range(0..3))
            .map(|_| (AccidentType::ALL[rng.random_range(0..6)], rng.random_range(0..len)))
            .collect();
        let alarms: Vec<Alarm> = (0..rng.random_range(0..40))
            .map(|_| alarm(rng.random_range(0..len), AccidentType::ALL[rng.random_range(0..6)]))
            .collect();
        let report = score_alarms(&alarms, &[well(len, &events)]).unwrap();
        let ticks = &report.rows[0].fp_ticks;
        if ticks.windows(2).any(|t| t[1] < t[0] + DEDUP_TICKS) {
            violations += 1;
        }
    }
    outcome(&[
        (fixtures_ok, "scripted scenarios: TP window, 1 h merge, +3 h is FP".to_string()),
        (violations == 0, format!("{violations}/1000 streams with counted FPs < 1 h apart")),
        within_budget(start.elapsed(), 5),
    ])
}

// ---------------------------------------------------------------- criterion 5

fn replays(fix: &Fixture) -> Vec<SimilarityTrace> {
    holdout()
        .iter()
        .map(|w| similarity_trace(&w.series, &fix.model, &fix.db, 60).unwrap())
        .collect()
}

fn criterion_5() -> Outcome {
    let fix = fixture(MAIN_SEED);
    let traces = replays(&fix);
    let events: Vec<WellEvents> = holdout().iter().map(WellEvents::from_generated).collect();
    let thresholds: Vec<f64> = (6..=19).map(|i| i as f64 * 0.05).collect();
    let rows = threshold_sweep(&traces, &events, &thresholds).unwrap();
    let monotone = rows
        .windows(2)
        .all(|r| r[1].total_tp <= r[0].total_tp && r[1].total_fp <= r[0].total_fp);
    let at = rows.iter().find(|r| (r.threshold - 0.7).abs() < 1e-9).unwrap();
    let curve: Vec<String> = rows.iter().map(|r| format!("{:.2}:{}/{}", r.threshold, r.total_tp, r.total_fp)).collect();
    outcome(&[
        (monotone, format!("TP/FP by threshold {}", curve.join(" "))),
        (
            at.fp_per_well.is_finite(),
            format!("at 0.70: {:.2} FP per well, {}/{} events detected", at.fp_per_well, at.total_tp, events.iter().map(|w| w.events.len()).sum::<usize>()),
        ),
    ])
}

// ---------------------------------------------------------------- criterion 6

fn r_rows(fix: &Fixture, cfg: &RobustnessConfig) -> Vec<(SetLabel, f64, f64)> {
    let anchors = pool_from_db(&fix.db);
    let pool: Vec<PoolWell<'_>> = anchors
        .iter()
        .map(|(w, a)| PoolWell { series: fix.db.series(w).unwrap().as_ref(), anchors: a })
        .collect();
    let dists = similarity_distributions(&fix.model, &fix.db, &pool, cfg).unwrap();
    r_table(&dists, DEFAULT_RESAMPLES, cfg.seed)
        .unwrap()
        .into_iter()
        .map(|r| (r.label, r.r, r.r_std))
        .collect()
}

fn r_of(rows: &[(SetLabel, f64, f64)], label: SetLabel) -> f64 {
    rows.iter().find(|r| r.0 == label).map(|r| r.1).unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let fix = fixture(MAIN_SEED);
    let min_self = (0..fix.db.len())
        .map(|i| fix.model.score_features(fix.db.features(i), fix.db.features(i)).unwrap())
        .fold(f64::INFINITY, f64::min);

    let cfg = RobustnessConfig { seed: MAIN_SEED, ..RobustnessConfig::default() };
    let rows = r_rows(&fix, &cfg);
    let r_lessons = r_of(&rows, SetLabel::Lessons);
    let r_shift = r_of(&rows, SetLabel::Shifted(20));
    let r_noise = r_of(&rows, SetLabel::Noised(0.01));
    let table: Vec<String> = rows.iter().map(|(l, r, s)| format!("{l} {r:.3}±{s:.3}")).collect();

    let sign_cfg = |seed| RobustnessConfig {
        shifts: vec![],
        noise_sigmas: vec![0.01, 0.1],
        seed,
        ..RobustnessConfig::default()
    };
    let wins = SIGN_SEEDS
        .iter()
        .filter(|&&s| {
            let rows = r_rows(&fixture(s), &sign_cfg(s));
            r_of(&rows, SetLabel::Noised(0.1)) < r_of(&rows, SetLabel::Noised(0.01))
        })
        .count();
    outcome(&[
        (min_self > 0.7, format!("min self-similarity {min_self:.4} > 0.7")),
        (r_lessons > 0.0, format!("R(lessons) {r_lessons:.3} > 0")),
        (r_shift > 0.0, format!("R(shift 20) {r_shift:.3} > 0")),
        (r_noise > 0.0, format!("R(noise 0.01) {r_noise:.3} > 0")),
        (wins >= 4, format!("R(noise 0.1) < R(noise 0.01) on {wins}/5 seeds")),
        (true, format!("seed 7 table [{}]", table.join(", "))),
        within_budget(start.elapsed(), 180),
    ])
}

// ---------------------------------------------------------------- criterion 7

fn purities(fix: &Fixture) -> (f64, f64) {
    let model = purity_at_truth_k(&fix.db, &model_matrix_train(&fix.db, &fix.model).unwrap()).unwrap();
    let l1 = purity_at_truth_k(&fix.db, &unsupervised_l1_matrix(&fix.db, &uniform_l1_weights()).unwrap()).unwrap();
    (model, l1)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let fix = fixture(MAIN_SEED);
    let gt = purity_at_truth_k(&fix.db, &ground_truth_matrix(&fix.db).unwrap()).unwrap();
    let (main_model, main_l1) = purities(&fix);
    let per_seed: Vec<(u64, f64, f64)> = SIGN_SEEDS
        .iter()
        .map(|&s| {
            let (m, l) = purities(&fixture(s));
            (s, m, l)
        })
        .collect();
    let wins = per_seed.iter().filter(|(_, m, l)| m >= l).count();
    let listing: Vec<String> = per_seed.iter().map(|(s, m, l)| format!("seed {s}: {m:.3} vs {l:.3}")).collect();
    outcome(&[
        (gt == 1.0, format!("ground-truth purity {gt}")),
        (main_model >= main_l1, format!("seed 7 model {main_model:.3} >= l1 {main_l1:.3}")),
        (wins >= 4, format!("model >= l1 on {wins}/5 seeds ({})", listing.join(", "))),
        within_budget(start.elapsed(), 120),
    ])
}

// ---------------------------------------------------------------- criterion 8

fn csv_bytes(series: &TelemetrySeries) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv_to(series, &mut out).unwrap();
    out
}

fn same_series(a: &TelemetrySeries, b: &TelemetrySeries) -> bool {
    a.well_id() == b.well_id()
        && a.len() == b.len()
        && a.start_time() == b.start_time()
        && ChannelId::ALL.iter().all(|&c| match (a.channel_data(c), b.channel_data(c)) {
            (Some(x), Some(y)) => {
                x.missing == y.missing
                    && x.values.iter().zip(&y.values).zip(&x.missing).all(|((u, v), &m)| m || u.to_bits() == v.to_bits())
            }
            (None, None) => true,
            _ => false,
        })
}

fn criterion_8() -> Outcome {
    let fix = fixture(MAIN_SEED);
    let comp = table1_composition();
    let (c1, c2) = (generate_corpus(MAIN_SEED, &comp).unwrap(), generate_corpus(MAIN_SEED, &comp).unwrap());
    let corpus_same = c1.lessons == c2.lessons
        && c1.wells.len() == c2.wells.len()
        && c1.wells.iter().zip(&c2.wells).all(|(a, b)| csv_bytes(&a.series) == csv_bytes(&b.series));

    let bytes = gbdt::serialize(fix.model.gbdt());
    let retrained = train_similarity_model(&fix.db, &TrainConfig::default()).unwrap();
    let training_same = gbdt::serialize(retrained.gbdt()) == bytes;

    let w = &holdout()[0];
    let replay_same = similarity_trace(&w.series, &fix.model, &fix.db, 60).unwrap()
        == similarity_trace(&w.series, &retrained, &fix.db, 60).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    fix.model.save(&model_path).unwrap();
    let loaded = SimilarityModel::load(&model_path, FeatureLayout::default()).unwrap();
    let model_round_trip = gbdt::serialize(loaded.gbdt()) == bytes
        && (0..fix.db.len()).all(|i| {
            let j = (i + 1) % fix.db.len();
            fix.model.score_features(fix.db.features(i), fix.db.features(j)).unwrap().to_bits()
                == loaded.score_features(fix.db.features(i), fix.db.features(j)).unwrap().to_bits()
        });

    let manifest = write_database(&fix.db, dir.path().join("db")).unwrap();
    let back = load_manifest(&manifest, &FeatureLayout::default()).unwrap();
    let manifest_round_trip = back.lessons() == fix.db.lessons()
        && (0..fix.db.len()).all(|i| {
            let (a, b) = (&fix.db.features(i).values, &back.features(i).values);
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        })
        && fix.db.wells().all(|(id, s)| back.series(id).is_some_and(|t| same_series(s, t)));

    let csv_path = dir.path().join(format!("{}.csv", w.series.well_id()));
    write_csv(&w.series, &csv_path).unwrap();
    let parsed = parse_csv(&csv_path, &Schema::canonical()).unwrap();
    let csv_round_trip = same_series(&w.series, &parsed) && csv_bytes(&parsed) == csv_bytes(&w.series);

    outcome(&[
        (corpus_same, "corpus generation reproducible".into()),
        (training_same, "training reproducible".into()),
        (replay_same, "replay reproducible".into()),
        (model_round_trip, "model file round-trip".into()),
        (manifest_round_trip, "manifest round-trip".into()),
        (csv_round_trip, "telemetry CSV round-trip".into()),
    ])
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 metric oracles", criterion_1),
        ("2 gbdt correctness", criterion_2),
        ("3 desk-scale cross-validation", criterion_3),
        ("4 alarm rules", criterion_4),
        ("5 threshold sweep", criterion_5),
        ("6 self-recognition and separation", criterion_6),
        ("7 clustering consistency", criterion_7),
        ("8 determinism and round-trips", criterion_8),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let line = format!(
            "{} criterion {name} ({:.1}s): {}\n",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        // Written past the test harness capture so the lines always show.
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        if !o.pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
