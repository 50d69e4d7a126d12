use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mdpbw_core::Model;

fn mdpbw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdpbw"))
        .args(args)
        .current_dir(dir)
        .env_remove("MDPBW_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mdpbw(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    mdpbw(dir, args).status.code().unwrap()
}

#[test]
fn sample_writes_one_line_per_trace_and_a_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["sample", "--model", "reber", "--len", "fixed:5", "--count", "10000", "--seed", "7", "--out", "a.txt"]);
    let text = fs::read_to_string(dir.path().join("a.txt")).unwrap();
    assert_eq!(text.lines().count(), 10_000);
    assert!(text.lines().all(|l| l.split_whitespace().count() == 5 && l.starts_with("start")));
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.txt.config.json")).unwrap()).unwrap();
    assert_eq!(config["command"], "sample");
    assert_eq!(config["seed"], 7);
}

#[test]
fn sampling_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str, seed: &'static str| {
        vec!["sample", "--model", "street:p=0.6", "--len", "geo:0.2", "--count", "300", "--seed", seed, "--out", out]
    };
    ok(dir.path(), &args("a.txt", "1"));
    ok(dir.path(), &args("b.txt", "1"));
    ok(dir.path(), &args("c.txt", "2"));
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.txt"), read("b.txt"));
    assert_ne!(read("a.txt"), read("c.txt"));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_mdpbw"));
        c.args(["sample", "--model", "reber", "--count", "50", "--out", out]).current_dir(dir.path());
        match env {
            Some(v) => c.env("MDPBW_SEED", v),
            None => c.env_remove("MDPBW_SEED"),
        };
        assert!(c.status().unwrap().success());
        fs::read(dir.path().join(out)).unwrap()
    };
    ok(dir.path(), &["sample", "--model", "reber", "--count", "50", "--seed", "9", "--out", "flag.txt"]);
    assert_eq!(run("env.txt", Some("9")), fs::read(dir.path().join("flag.txt")).unwrap());
    assert_ne!(run("none.txt", None), run("env2.txt", Some("9")));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["sample", "--model", "reber", "--count", "0", "--out", "x.txt"]), 1);
    assert_eq!(code(d, &["sample", "--model", "reber", "--count", "5", "--len", "geo:1.5", "--out", "x.txt"]), 1);
    assert_eq!(code(d, &["sample", "--model", "street:p=2", "--count", "5", "--out", "x.txt"]), 1);
    assert_eq!(code(d, &["eval", "--model", "reber", "--kl"]), 1);
    assert_eq!(code(d, &["eval", "--model", "reber", "--pmax", "goal:E:12"]), 1);
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &["--help"]), 0);
}

#[test]
fn data_errors_exit_with_two_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.txt"), "start stay left\n# comment\nstart stay\n").unwrap();
    let out = mdpbw(d, &["learn", "--data", "bad.txt", "--init", "random:3", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.txt") && err.contains("line 3"), "{err}");
    assert_eq!(code(d, &["sample", "--model", "missing.json", "--count", "5", "--out", "x.txt"]), 2);
    fs::write(d.join("m.json"), "{\"labels\": [}").unwrap();
    assert_eq!(code(d, &["eval", "--model", "m.json"]), 2);
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // the street model never emits `bump` first, so nothing is usable
    fs::write(d.join("data.txt"), "bump stay bump\n").unwrap();
    let hyp = mdpbw_core::builtin::street_crossing_model(0.75).unwrap();
    fs::write(d.join("h.json"), hyp.to_json()).unwrap();
    assert_eq!(code(d, &["learn", "--data", "data.txt", "--init", "h.json", "--out", "m.json"]), 3);
}

#[test]
fn learn_reports_iterations_and_round_trips_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["sample", "--model", "reber", "--count", "500", "--seed", "1", "--out", "train.txt"]);
    ok(
        d,
        &["learn", "--data", "train.txt", "--init", "random:7", "--mc", "--max-iters", "1", "--out", "m.json"],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("m.json.report.json")).unwrap()).unwrap();
    assert_eq!(report["iterations"], 1);
    assert_eq!(report["log_likelihood"].as_array().unwrap().len(), 2);
    let text = fs::read_to_string(d.join("m.json")).unwrap();
    let m = Model::from_json(&text).unwrap();
    assert_eq!(m.to_json(), text);
    assert_eq!(Model::from_json(&m.to_json()).unwrap(), m);
}

#[test]
fn learned_reber_chain_is_close_to_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["sample", "--model", "reber", "--count", "10000", "--seed", "7", "--out", "train.txt"]);
    ok(
        d,
        &["learn", "--data", "train.txt", "--init", "random:7", "--mc", "--alphabet-from", "reber", "--restarts", "3", "--seed", "7", "--out", "m.json"],
    );
    let csv = ok(d, &["eval", "--model", "m.json", "--true", "reber", "--train", "train.txt", "--test-count", "10000", "--kl"]);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let kl: f64 = row[4].parse().unwrap();
    assert!(kl <= 0.2, "KL {kl}");
    for v in &row[1..6] {
        assert!(v.parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn eval_writes_csv_and_json_with_queries() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["eval", "--model", "grid", "--model", "street", "--pmax", "goal:goal:<12", "--pmax", "goal:bump:<3", "--out", "m.csv"],
    );
    let csv = fs::read_to_string(d.join("m.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().ends_with("goal:goal:<12,goal:bump:<3"));
    let grid: Vec<&str> = lines.next().unwrap().split(',').collect();
    let p: f64 = grid[6].parse().unwrap();
    assert!((0.0..=1.0).contains(&p) && p > 0.0);
    assert_eq!(grid[7], "0");
    let street: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(street[6], "0");
    assert!((street[7].parse::<f64>().unwrap() - 0.75).abs() < 1e-15);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2);
}

#[test]
fn impossible_test_traces_show_as_inf() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut hyp = mdpbw_core::builtin::reber_model();
    // drop the B-transition out of the first state
    let b = hyp.label_id("B").unwrap();
    let e = hyp.label_id("E").unwrap();
    hyp.set_tau(0, 0, b, 1, 0.0);
    hyp.set_tau(0, 0, e, 0, 1.0);
    fs::write(d.join("h.json"), hyp.to_json()).unwrap();
    let csv = ok(d, &["eval", "--model", "h.json", "--true", "reber", "--test-count", "20", "--kl"]);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "-inf");
    assert_eq!(row[3], "20");
    assert_eq!(row[4], "inf");
}

#[test]
fn grid_layouts_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("g.toml"),
        "rows = [\"C#C\", \"CCC\"]\ninit = [1, 0]\ngoal = [0, 2]\n\n[terrain]\nC = { label = \"concrete\", slip = 0.1 }\n",
    )
    .unwrap();
    ok(d, &["sample", "--model", "grid:g.toml", "--len", "shifted-geo:3:0.5", "--count", "20", "--out", "t.txt"]);
    let text = fs::read_to_string(d.join("t.txt")).unwrap();
    assert!(text.lines().all(|l| l.split_whitespace().count() >= 7));
    fs::write(d.join("bad.toml"), "rows = [\"C#C\", \"CC\"]\ninit = [1, 0]\n[terrain]\nC = { label = \"c\", slip = 0.1 }\n").unwrap();
    assert_ne!(code(d, &["sample", "--model", "grid:bad.toml", "--count", "2", "--out", "t.txt"]), 0);
}

#[test]
fn active_runs_are_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = [
        "active", "--model", "street", "--seed-count", "10", "--iterations", "6", "--per-iter", "2", "--test-count", "30",
        "--baseline", "uniform", "--seed", "4",
    ];
    let run = |out: &str, extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out-dir", out]);
        ok(d, &args);
    };
    run("a", &[]);
    run("b", &[]);
    run("c", &["--replay", "a/traces.txt"]);
    for f in ["curve.csv", "model.json", "dataset.txt", "baseline-model.json", "baseline-dataset.txt", "test.txt", "report.json"] {
        let a = fs::read(d.join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(d.join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(d.join("c").join(f)).unwrap(), "{f} (replay)");
    }
    let curve = fs::read_to_string(d.join("a/curve.csv")).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "strategy,iteration,dataset-size,train-ll-per-seq,test-ll-per-seq,skipped-traces");
    assert_eq!(lines.iter().filter(|l| l.starts_with("active,")).count(), 6);
    assert_eq!(lines.iter().filter(|l| l.starts_with("passive-uniform,")).count(), 6);
    assert!(lines[6].starts_with("active,6,22,"));
}

#[test]
fn zero_iterations_equals_plain_learning() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = mdpbw_core::builtin::street_crossing_model(0.75).unwrap();
    let hyp = mdpbw_core::builtin::random_model(5, truth.alphabet().clone(), truth.actions().clone(), 3).unwrap();
    fs::write(d.join("h.json"), hyp.to_json()).unwrap();
    ok(d, &["sample", "--model", "street", "--len", "fixed:12", "--count", "50", "--out", "seed.txt"]);
    ok(
        d,
        &["active", "--model", "street", "--seed-data", "seed.txt", "--init", "h.json", "--iterations", "0", "--test-count", "0", "--out-dir", "run"],
    );
    ok(d, &["learn", "--data", "seed.txt", "--init", "h.json", "--out", "plain.json"]);
    assert_eq!(fs::read(d.join("run/model.json")).unwrap(), fs::read(d.join("plain.json")).unwrap());
    assert_eq!(fs::read_to_string(d.join("run/curve.csv")).unwrap().lines().count(), 1);
}
