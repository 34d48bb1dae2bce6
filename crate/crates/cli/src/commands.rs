//! Subcommand implementations.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use analogues::clustering::{
    agglomerate, cut, ground_truth_matrix, model_matrix_cv, model_matrix_train, purity, truth_labels,
    uniform_l1_weights, unsupervised_l1_matrix, write_assignments_csv, write_linkage_csv,
};
use analogues::detector::{
    read_alarms_file, replay, similarity_trace, train_similarity_model, write_alarms_file, DetectorConfig,
    SimilarityModel,
};
use analogues::evaluation::{
    confusion_at, cross_validate, false_alarms_per_day, pr_auc, pr_curve, read_events, roc_auc, roc_curve,
    score_alarms, threshold_sweep, write_events, write_pr_csv, write_report_csv, write_roc_csv,
    write_sweep_csv, CvConfig, CvMode, WellEvents,
};
use analogues::features::{FeatureLayout, WindowConfig};
use analogues::lessons::{load_manifest, write_database, LessonDatabase};
use analogues::robustness::{
    pool_from_db, r_table, similarity_distributions, write_distributions_csv, write_r_table_csv, PoolWell,
    RobustnessConfig,
};
use analogues::synthgen::{
    composition_from_entries, generate_corpus_with, generate_holdout, table1_composition, Composition,
    CompositionEntry,
};
use analogues::telemetry::{parse_csv, write_csv, Schema, TelemetrySeries};
use analogues::{Error, Result};

use crate::{
    ClusterArgs, ClusterMode, Command, CvModeArg, EvalCvArgs, GenArgs, LayoutArgs, ReplayArgs, RobustArgs,
    ScoreAlarmsArgs, SweepArgs, TrainArgs,
};

pub fn run(cmd: &Command) -> Result<()> {
    let out = match cmd {
        Command::Gen(a) => &a.out,
        Command::Train(a) => &a.out,
        Command::EvalCv(a) => &a.out,
        Command::Replay(a) => &a.out,
        Command::ScoreAlarms(a) => &a.out,
        Command::Sweep(a) => &a.out,
        Command::Cluster(a) => &a.out,
        Command::Robust(a) => &a.out,
    };
    create_dir(out)?;
    write_json(
        &out.join("run.json"),
        &json!({ "version": env!("CARGO_PKG_VERSION"), "config": cmd }),
    )?;
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::EvalCv(a) => eval_cv(a),
        Command::Replay(a) => replay_cmd(a),
        Command::ScoreAlarms(a) => score_alarms_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Cluster(a) => cluster(a),
        Command::Robust(a) => robust(a),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            io_err(path, e)
        }
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn layout(args: &LayoutArgs) -> Result<FeatureLayout> {
    Ok(FeatureLayout::new(WindowConfig::new(args.windows.clone())?))
}

fn database(manifest: &Path, layout: &FeatureLayout) -> Result<LessonDatabase> {
    let db = load_manifest(manifest, layout)?;
    log::info!("loaded {} lessons from {}", db.len(), manifest.display());
    Ok(db)
}

fn wells(paths: &[PathBuf]) -> Result<Vec<TelemetrySeries>> {
    let schema = Schema::canonical();
    paths.iter().map(|p| parse_csv(p, &schema)).collect()
}

fn composition(args: &GenArgs) -> Result<Composition> {
    match &args.composition {
        Some(path) => composition_from_entries(&read_json::<Vec<CompositionEntry>>(path)?),
        None => Ok(table1_composition()),
    }
}

fn gen(args: &GenArgs) -> Result<()> {
    if !(args.snr.is_finite() && args.snr >= 0.0) {
        return Err(Error::Invalid(format!("snr must be finite and non-negative, got {}", args.snr)));
    }
    let comp = composition(args)?;
    let corpus = generate_corpus_with(args.seed, &comp, "well", args.snr)?;
    let layout = FeatureLayout::new(WindowConfig::new(vec![720, 360, 180, 60])?);
    let db = LessonDatabase::from_corpus(&corpus, layout)?;
    let manifest = write_database(&db, &args.out)?;

    println!("{:<20}{:<14}{:>6}", "accident_type", "operation", "count");
    for ((acc, op), idx) in db.groups() {
        println!("{:<20}{:<14}{:>6}", acc.to_string(), op.to_string(), idx.len());
    }
    println!("{} lessons on {} wells -> {}", db.len(), corpus.wells.len(), manifest.display());

    if args.holdout_accident + args.holdout_normal > 0 {
        let holdout = generate_holdout(args.seed, &comp, args.holdout_accident, args.holdout_normal)?;
        let dir = args.out.join("holdout").join("wells");
        create_dir(&dir)?;
        for w in &holdout {
            write_csv(&w.series, dir.join(format!("{}.csv", w.series.well_id())))?;
        }
        let events: Vec<WellEvents> = holdout.iter().map(WellEvents::from_generated).collect();
        write_events(&events, args.out.join("holdout").join("events.json"))?;
        println!("{} hold-out wells -> {}", holdout.len(), dir.display());
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let db = database(&args.manifest, &layout(&args.layout)?)?;
    let model = train_similarity_model(&db, &args.gbdt.config())?;
    let path = args.model.clone().unwrap_or_else(|| args.out.join("model.json"));
    model.save(&path)?;
    println!("model -> {}", path.display());
    Ok(())
}

fn eval_cv(args: &EvalCvArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(Error::Invalid(format!("threshold must lie in [0, 1], got {}", args.threshold)));
    }
    let db = database(&args.manifest, &layout(&args.layout)?)?;
    let train_cfg = args.gbdt.config();
    train_cfg.validate()?;
    let cfg = CvConfig {
        k: args.k,
        test_fraction: args.test_fraction,
        seed: args.seed,
        mode: match args.mode {
            CvModeArg::RandomWells => CvMode::RandomWells,
            CvModeArg::LeaveOneWellOut => CvMode::LeaveOneWellOut,
        },
    };
    let res = cross_validate(&db, |train| train_similarity_model(train, &train_cfg), &cfg)?;
    let roc = roc_auc(&res.labels, &res.scores)?;
    let pr = pr_auc(&res.labels, &res.scores)?;
    let confusion = confusion_at(&res.labels, &res.scores, args.threshold)?;
    write_roc_csv(&roc_curve(&res.labels, &res.scores)?, create(&args.out.join("roc.csv"))?)?;
    write_pr_csv(&pr_curve(&res.labels, &res.scores)?, create(&args.out.join("pr.csv"))?)?;
    write_json(
        &args.out.join("metrics.json"),
        &json!({
            "roc_auc": roc,
            "pr_auc": pr,
            "prevalence": res.prevalence(),
            "n_pairs": res.labels.len(),
            "threshold": args.threshold,
            "confusion": confusion,
            "iterations": res.iterations,
        }),
    )?;
    println!("ROC-AUC {roc:.4}  PR-AUC {pr:.4}  prevalence {:.4}  pairs {}", res.prevalence(), res.labels.len());
    print!("{}", confusion.render());
    Ok(())
}

fn load_model(path: &Path, layout: FeatureLayout) -> Result<SimilarityModel> {
    SimilarityModel::load(path, layout)
}

fn replay_cmd(args: &ReplayArgs) -> Result<()> {
    let layout = layout(&args.layout)?;
    let db = database(&args.manifest, &layout)?;
    let model = load_model(&args.model, layout)?;
    let cfg = DetectorConfig {
        threshold: args.detector.threshold,
        step_ticks: args.detector.step,
    };
    let mut alarms = Vec::new();
    for series in wells(&args.wells)? {
        let a = replay(&series, &model, &db, &cfg)?;
        log::info!("{}: {} alarms", series.well_id(), a.len());
        alarms.extend(a);
    }
    write_alarms_file(&alarms, args.out.join("alarms.csv"))?;
    println!("{} alarms -> {}", alarms.len(), args.out.join("alarms.csv").display());
    Ok(())
}

fn score_alarms_cmd(args: &ScoreAlarmsArgs) -> Result<()> {
    let alarms = read_alarms_file(&args.alarms)?;
    let events = read_events(&args.events)?;
    let report = score_alarms(&alarms, &events)?;
    let fp_per_day = false_alarms_per_day(&report)?;
    write_report_csv(&report, create(&args.out.join("report.csv"))?)?;
    write_json(
        &args.out.join("summary.json"),
        &json!({
            "total_tp": report.total_tp(),
            "total_events": report.total_events(),
            "total_fp": report.total_fp(),
            "total_days": report.total_days(),
            "fp_per_day": fp_per_day,
        }),
    )?;
    println!(
        "TP {}/{}  FP {}  days {:.2}  FP/day {fp_per_day:.3}",
        report.total_tp(),
        report.total_events(),
        report.total_fp(),
        report.total_days()
    );
    Ok(())
}

fn default_thresholds() -> Vec<f64> {
    (6..=19).map(|i| i as f64 * 0.05).collect()
}

fn sweep(args: &SweepArgs) -> Result<()> {
    if args.step < 1 {
        return Err(Error::Invalid("step must be at least 1".into()));
    }
    let layout = layout(&args.layout)?;
    let db = database(&args.manifest, &layout)?;
    let model = load_model(&args.model, layout)?;
    let events = read_events(&args.events)?;
    let thresholds = if args.thresholds.is_empty() {
        default_thresholds()
    } else {
        args.thresholds.clone()
    };
    let traces = wells(&args.wells)?
        .iter()
        .map(|s| similarity_trace(s, &model, &db, args.step))
        .collect::<Result<Vec<_>>>()?;
    let rows = threshold_sweep(&traces, &events, &thresholds)?;
    write_sweep_csv(&rows, create(&args.out.join("sweep.csv"))?)?;
    println!("{:>9}{:>8}{:>8}", "threshold", "TP", "FP");
    for r in &rows {
        println!("{:>9.2}{:>8}{:>8}", r.threshold, r.total_tp, r.total_fp);
    }
    Ok(())
}

fn cluster(args: &ClusterArgs) -> Result<()> {
    let layout = layout(&args.layout)?;
    let db = database(&args.manifest, &layout)?;
    let matrix = match args.mode {
        ClusterMode::GroundTruth => ground_truth_matrix(&db)?,
        ClusterMode::UnsupervisedL1 => unsupervised_l1_matrix(&db, &uniform_l1_weights())?,
        ClusterMode::ModelTrain => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| Error::Invalid("--model is required for model-train".into()))?;
            model_matrix_train(&db, &load_model(path, layout)?)?
        }
        ClusterMode::ModelCv => {
            let cfg = args.gbdt.config();
            cfg.validate()?;
            model_matrix_cv(&db, |train| train_similarity_model(train, &cfg), args.folds, args.seed)?
        }
    };
    let (truth, truth_k) = truth_labels(&db);
    let k = args.k.unwrap_or(truth_k);
    let dendrogram = agglomerate(&matrix);
    let assignment = cut(&dendrogram, k)?;
    let p = purity(&assignment, &truth)?;
    let (on, off) = matrix.block_means(&db);
    write_linkage_csv(&dendrogram, create(&args.out.join("linkage.csv"))?)?;
    write_assignments_csv(&matrix.lesson_ids, &assignment, create(&args.out.join("assignments.csv"))?)?;
    write_json(
        &args.out.join("summary.json"),
        &json!({
            "mode": matrix.mode.name(),
            "n_lessons": db.len(),
            "k": k,
            "purity": p,
            "mean_similarity_same_group": on,
            "mean_similarity_other_group": off,
        }),
    )?;
    println!("{} lessons, k = {k}, purity {p:.4}", db.len());
    Ok(())
}

fn robust(args: &RobustArgs) -> Result<()> {
    let layout = layout(&args.layout)?;
    let db = database(&args.manifest, &layout)?;
    let model = load_model(&args.model, layout)?;
    let anchors = pool_from_db(&db);
    let pool: Vec<PoolWell<'_>> = anchors
        .iter()
        .map(|(w, a)| PoolWell {
            series: db.series(w).expect("pool well is in the database").as_ref(),
            anchors: a,
        })
        .collect();
    let cfg = RobustnessConfig {
        n_random: args.n_random,
        shifts: args.shifts.clone(),
        noise_sigmas: args.noise.clone(),
        smooth_half_widths: args.smooth.clone(),
        seed: args.seed,
    };
    let dists = similarity_distributions(&model, &db, &pool, &cfg)?;
    let rows = r_table(&dists, args.resamples, args.seed)?;
    write_distributions_csv(&dists, create(&args.out.join("boxplot.csv"))?)?;
    write_r_table_csv(&rows, create(&args.out.join("r_table.csv"))?)?;
    println!("{:<16}{:>9}{:>9}", "set", "R", "R_std");
    for r in &rows {
        println!("{:<16}{:>9.3}{:>9.3}", r.label.to_string(), r.r, r.r_std);
    }
    Ok(())
}
