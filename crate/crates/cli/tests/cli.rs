use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run dmlab")
}

fn ok(args: &[&str]) -> String {
    let out = dmlab(args);
    assert!(
        out.status.success(),
        "dmlab {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_subcommand_fails() {
    let out = dmlab(&["frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unrecognized subcommand"));
}

#[test]
fn bad_source_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmlab(&["benchmark", "--source", "nowhere", "-o", p(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unrecognized source"));
}

#[test]
fn benchmark_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&["benchmark", "--n", "300", "--seed", "7", "-o", p(d)]);
    }
    for f in ["metrics.csv", "scenarios.csv", "config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,mean,std,n\n"));
    assert_eq!(
        fs::read_to_string(a.join("scenarios.csv")).unwrap().lines().count(),
        301
    );
}

#[test]
fn synth_train_eval_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = d.join("synth");
    ok(&["synth", "--n", "1500", "--seed", "3", "-o", p(&synth)]);
    let records = synth.join("records.jsonl");
    assert_eq!(fs::read_to_string(&records).unwrap().lines().count(), 5 * 1500);
    // 1200 training records per level is enough for a calibration table
    let calib = fs::read_to_string(synth.join("calibration.csv")).unwrap();
    assert_eq!(calib.lines().count(), 1 + 2 + 4 + 2 + 2 + 2);

    let train = d.join("train");
    ok(&[
        "train",
        "--source",
        p(&records),
        "--total-steps",
        "4096",
        "--eval-interval",
        "2048",
        "--eval-episodes",
        "20",
        "-o",
        p(&train),
    ]);
    for f in [
        "checkpoint.json",
        "train_metrics.csv",
        "eval_metrics.csv",
        "config.json",
    ] {
        assert!(train.join(f).is_file(), "{f}");
    }
    let evals = fs::read_to_string(train.join("eval_metrics.csv")).unwrap();
    assert!(evals.lines().any(|l| l.starts_with("4096,tree_score,")), "{evals}");

    let eval = d.join("eval");
    ok(&[
        "eval",
        "--checkpoint",
        p(&train),
        "--source",
        "identity",
        "--n",
        "50",
        "-o",
        p(&eval),
    ]);
    let bands = fs::read_to_string(eval.join("gather_bands.csv")).unwrap();
    assert_eq!(bands.lines().next(), Some("band_lo,band_hi,steps,gather_frequency"));
    assert_eq!(bands.lines().count(), 4);

    let bench = d.join("bench");
    ok(&["benchmark", "--source", "identity", "--n", "20", "-o", p(&bench)]);
    let report = d.join("report");
    let text = ok(&[
        "report",
        "--group",
        &format!("Benchmark={}", p(&bench.join("scenarios.csv"))),
        "--rl",
        p(&eval.join("scenarios.csv")),
        "-o",
        p(&report),
    ]);
    assert!(text.contains("Benchmark"));
    assert!(text.contains("RL Agent"));
    let csv = fs::read_to_string(report.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("Benchmark,20,5.0"), "{}", lines[1]);
}

#[test]
fn gridsearch_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    ok(&[
        "gridsearch",
        "--n-combos",
        "2",
        "--seeds-per-combo",
        "2",
        "--steps-per-trial",
        "1024",
        "--holdout",
        "20",
        "--parallelism",
        "2",
        "-o",
        p(&out),
    ]);
    let trials = fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(
        trials.lines().next(),
        Some("combo_id,gamma,ent_coef,lr,seed,mean_reward,status")
    );
    assert_eq!(trials.lines().count(), 5);
    let best: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("best.json")).unwrap()).unwrap();
    assert_eq!(best["n_ok"], 2);
}
