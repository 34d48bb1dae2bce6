use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_analogues");

const SMALL_COMPOSITION: &str = r#"[
  {"accident_type": "stuck", "operation": "drilling", "count": 4},
  {"accident_type": "washout", "operation": "drilling", "count": 4},
  {"accident_type": "mud_loss", "operation": "drilling", "count": 4}
]"#;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_corpus(dir: &Path) {
    std::fs::write(dir.join("comp.json"), SMALL_COMPOSITION).unwrap();
    ok(
        &[
            "gen", "--seed", "3", "--composition", "comp.json", "--holdout-accident", "2", "--holdout-normal", "1",
            "--out", "gen",
        ],
        dir,
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_train_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_corpus(d);
    assert!(d.join("gen/manifest.json").exists());
    assert!(d.join("gen/holdout/events.json").exists());
    assert_eq!(std::fs::read_dir(d.join("gen/holdout/wells")).unwrap().count(), 3);

    ok(&["train", "--manifest", "gen/manifest.json", "--n-trees", "30", "--out", "train"], d);
    assert!(d.join("train/model.json").exists());

    ok(
        &["eval-cv", "--manifest", "gen/manifest.json", "--k", "3", "--n-trees", "30", "--out", "cv"],
        d,
    );
    let m = json(&d.join("cv/metrics.json"));
    let roc = m["roc_auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&roc));
    assert!(m["n_pairs"].as_u64().unwrap() > 0);
    assert!(d.join("cv/roc.csv").exists() && d.join("cv/pr.csv").exists());

    let run_json = json(&d.join("cv/run.json"));
    assert_eq!(run_json["config"]["command"], "eval-cv");
    assert_eq!(run_json["config"]["k"], 3);
    assert_eq!(run_json["config"]["windows"], serde_json::json!([720, 360, 180, 60]));

    ok(
        &[
            "cluster", "--manifest", "gen/manifest.json", "--mode", "model-train", "--model", "train/model.json",
            "--out", "cluster",
        ],
        d,
    );
    let s = json(&d.join("cluster/summary.json"));
    assert_eq!(s["k"], 3);
    let linkage = std::fs::read_to_string(d.join("cluster/linkage.csv")).unwrap();
    assert_eq!(linkage.lines().count(), 1 + 11);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_corpus(d);
    for out in ["a", "b"] {
        ok(
            &["train", "--manifest", "gen/manifest.json", "--n-trees", "20", "--out", out],
            d,
        );
        ok(
            &[
                "cluster", "--manifest", "gen/manifest.json", "--mode", "unsupervised-l1", "--out",
                &format!("{out}-cl"),
            ],
            d,
        );
    }
    let read = |p: &str| std::fs::read(d.join(p)).unwrap();
    assert_eq!(read("a/model.json"), read("b/model.json"));
    assert_eq!(read("a-cl/linkage.csv"), read("b-cl/linkage.csv"));
    assert_eq!(read("a-cl/assignments.csv"), read("b-cl/assignments.csv"));

    ok(
        &["gen", "--seed", "3", "--composition", "comp.json", "--holdout-accident", "2", "--holdout-normal", "1", "--out", "gen2"],
        d,
    );
    assert_eq!(read("gen/manifest.json"), read("gen2/manifest.json"));
    assert_eq!(read("gen/holdout/events.json"), read("gen2/holdout/events.json"));
    assert_eq!(read("gen/holdout/wells/holdout-000.csv"), read("gen2/holdout/wells/holdout-000.csv"));
}

#[test]
fn replay_score_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_corpus(d);
    ok(&["train", "--manifest", "gen/manifest.json", "--n-trees", "30", "--out", "train"], d);
    let wells = ["gen/holdout/wells/holdout-000.csv", "gen/holdout/wells/holdout-001.csv", "gen/holdout/wells/holdout-002.csv"];
    let replay_at = |t: &str, out: &str| {
        let mut args = vec!["replay", "--model", "train/model.json", "--manifest", "gen/manifest.json"];
        for w in &wells {
            args.extend(["--well", w]);
        }
        args.extend(["--threshold", t, "--out", out]);
        ok(&args, d);
        let mut rdr = csv::Reader::from_path(d.join(out).join("alarms.csv")).unwrap();
        let sims: Vec<f64> = rdr
            .deserialize::<std::collections::HashMap<String, String>>()
            .map(|r| r.unwrap()["max_similarity"].parse().unwrap())
            .collect();
        sims
    };
    let low = replay_at("0.3", "r-low");
    let high = replay_at("0.8", "r-high");
    assert!(high.len() <= low.len());
    assert!(high.iter().all(|&s| s > 0.8));
    assert!(low.iter().all(|&s| s > 0.3));

    ok(&["score-alarms", "--alarms", "r-low/alarms.csv", "--events", "gen/holdout/events.json", "--out", "score"], d);
    let s = json(&d.join("score/summary.json"));
    assert_eq!(s["total_events"], 2);
    assert!((s["total_days"].as_f64().unwrap() - 3.0).abs() < 1e-9);

    let mut args = vec!["sweep", "--model", "train/model.json", "--manifest", "gen/manifest.json"];
    for w in &wells {
        args.extend(["--well", w]);
    }
    args.extend(["--events", "gen/holdout/events.json", "--thresholds", "0.3,0.8", "--out", "sweep"]);
    ok(&args, d);
    let sweep = std::fs::read_to_string(d.join("sweep/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn negative_composition_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("bad.json"),
        r#"[{"accident_type": "stuck", "operation": "drilling", "count": -1}]"#,
    )
    .unwrap();
    let out = run(&["gen", "--composition", "bad.json", "--out", "g"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative"));
}

#[test]
fn cross_validation_needs_several_wells() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("one.json"),
        r#"[{"accident_type": "stuck", "operation": "drilling", "count": 1}]"#,
    )
    .unwrap();
    ok(&["gen", "--composition", "one.json", "--out", "g"], d);
    let out = run(&["eval-cv", "--manifest", "g/manifest.json", "--k", "2", "--out", "cv"], d);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_and_missing_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(run(&["train"], d).status.code(), Some(1));
    assert_eq!(run(&["--help"], d).status.code(), Some(0));
    assert_eq!(
        run(&["cluster", "--manifest", "nope.json", "--mode", "ground-truth", "--out", "c"], d).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["gen", "--table1-default", "--windows-typo", "--out", "g"], d).status.code(),
        Some(1)
    );
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("file"), "x").unwrap();
    std::fs::write(d.join("comp.json"), SMALL_COMPOSITION).unwrap();
    let out = run(&["gen", "--composition", "comp.json", "--out", "file/sub"], d);
    assert_eq!(out.status.code(), Some(2));
}
