use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convsurv"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A generated data directory shared by a test.
fn generated(players: usize, seed: u64) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let o = run(&["generate", "--players", &players.to_string(), "--seed", &seed.to_string(), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let logs = out.join("logs.csv");
    (dir, logs)
}

#[test]
fn generate_is_deterministic() {
    let (_a, la) = generated(1000, 7);
    let (_b, lb) = generated(1000, 7);
    assert_eq!(fs::read(&la).unwrap(), fs::read(&lb).unwrap());
    let truth = |l: &Path| fs::read(l.with_file_name("ground_truth.csv")).unwrap();
    assert_eq!(truth(&la), truth(&lb));
    let (_c, lc) = generated(1000, 8);
    assert_ne!(fs::read(&la).unwrap(), fs::read(&lc).unwrap());
}

#[test]
fn zero_pu_rate_has_no_converters() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["generate", "--players", "500", "--pu-rate", "0", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0);
    let truth = fs::read_to_string(dir.path().join("ground_truth.csv")).unwrap();
    assert!(truth.lines().skip(1).all(|l| l.split(',').nth(1) == Some("false")));
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run(&["generate", "--players", "10", "--out", p(&blocker.join("sub"))]);
    assert_ne!(code(&o), 0);
}

#[test]
fn rsf_cr_needs_churn_window() {
    let (dir, logs) = generated(800, 1);
    let model = dir.path().join("m.json");
    let o = run(&["train", p(&logs), "--model", "rsf-cr", "--trees", "5", "--out", p(&model)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--churn-window"), "{}", stderr(&o));
    assert!(!model.exists());
}

#[test]
fn train_reports_trees_and_axis() {
    let (dir, logs) = generated(3000, 2);
    let rsf = dir.path().join("rsf.json");
    let o = run(&["train", p(&logs), "--model", "rsf", "--trees", "900", "--min-node-events", "3", "--out", p(&rsf)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let file = convsurv::ModelFile::load(&rsf).unwrap();
    match &file.model {
        convsurv::FittedModel::Forest(m) => assert_eq!(m.n_trees(), 900),
        other => panic!("{other:?}"),
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rsf.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["diagnostics"]["n_trees"], 900);
    assert_eq!(summary["config"]["forest"]["n_trees"], 900);

    let cox = dir.path().join("cox.json");
    let o = run(&["train", p(&logs), "--model", "cox", "--target", "playtime", "--out", p(&cox)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let file = convsurv::ModelFile::load(&cox).unwrap();
    assert_eq!(file.kind, convsurv::ModelKind::Cox);
    assert_eq!(file.axis, convsurv::TimeAxis::Playtime);
}

fn rows_of(csv: &str) -> Vec<Vec<String>> {
    csv.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn predict_table_curve_and_inputs() {
    let (dir, logs) = generated(3000, 3);
    let model = dir.path().join("m.json");
    let o = run(&["train", p(&logs), "--model", "rsf", "--trees", "20", "--min-node-events", "3", "--out", p(&model)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = run(&["predict", p(&logs), "--model", p(&model)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    let rows = rows_of(&table);
    assert_eq!(rows[0], ["player_id", "predicted_median", "predicted_converter"]);
    assert_eq!(rows.len() - 1, 3000);
    assert!(rows[1..].iter().all(|r| r[1].is_empty() == (r[2] == "false")));
    assert!(rows[1..].iter().any(|r| r[2] == "true"));

    // Reversed row order gives the same table.
    let text = fs::read_to_string(&logs).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1..].reverse();
    let shuffled = dir.path().join("reversed.csv");
    fs::write(&shuffled, lines.join("\n") + "\n").unwrap();
    let o = run(&["predict", p(&shuffled), "--model", p(&model)]);
    assert_eq!(stdout(&o), table);

    // Engineered features give the same answers as raw logs.
    let feats = dir.path().join("features.csv");
    let o = run(&["ingest", p(&logs), "--out", p(&feats)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["predict", p(&feats), "--model", p(&model)]);
    assert_eq!(stdout(&o), table);

    // A different feature layout is refused.
    let all = dir.path().join("all.csv");
    run(&["ingest", p(&logs), "--features", "all", "--out", p(&all)]);
    let o = run(&["predict", p(&all), "--model", p(&model)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("incompatible"), "{}", stderr(&o));

    let converter = rows[1..].iter().find(|r| r[2] == "true").unwrap()[0].clone();
    let o = run(&["predict", p(&logs), "--model", p(&model), "--curve", &converter]);
    assert_eq!(code(&o), 0);
    let curve = rows_of(&stdout(&o));
    assert_eq!(curve[0], ["time", "value"]);
    let pts: Vec<(f64, f64)> = curve[1..].iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    assert!(pts.windows(2).all(|w| w[0].0 < w[1].0 && w[1].1 <= w[0].1));
    assert!(pts.iter().all(|&(_, v)| (0.0..=1.0).contains(&v)));
    assert!(pts.last().unwrap().1 <= 0.5);

    let o = run(&["predict", p(&logs), "--model", p(&model), "--curve", "nobody"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn competing_model_curve_is_increasing_incidence() {
    let (dir, logs) = generated(1500, 4);
    let model = dir.path().join("m.json");
    let o = run(&["train", p(&logs), "--model", "rsf-cr", "--churn-window", "9", "--trees", "10", "--out", p(&model)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["predict", p(&logs), "--model", p(&model), "--curve", "p0000001"]);
    let curve = rows_of(&stdout(&o));
    let vals: Vec<f64> = curve[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(vals[0], 0.0);
    assert!(vals.windows(2).all(|w| w[0] <= w[1]));
}

fn evaluate(logs: &Path, out: &Path, threads: &str) -> Output {
    bin()
        .args(["evaluate", p(logs), "--seed", "5", "--trees", "10", "--out", p(out)])
        .env("CONVSURV_THREADS", threads)
        .output()
        .unwrap()
}

#[test]
fn evaluate_grid_is_reproducible_across_threads() {
    let (dir, logs) = generated(2500, 5);
    let mut reports = Vec::new();
    for threads in ["1", "4", "8", "1"] {
        let out = dir.path().join(format!("eval{}", reports.len()));
        let o = evaluate(&logs, &out, threads);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        reports.push((
            fs::read(out.join("report.json")).unwrap(),
            fs::read(out.join("report.txt")).unwrap(),
            out,
        ));
    }
    for r in &reports[1..] {
        assert_eq!(r.0, reports[0].0);
        assert_eq!(r.1, reports[0].1);
    }
    let report: serde_json::Value = serde_json::from_slice(&reports[0].0).unwrap();
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 12);
    for c in cells {
        let name = format!("{}_{}.csv", c["model"].as_str().unwrap(), c["axis"].as_str().unwrap());
        let scatter = fs::read_to_string(reports[0].2.join("scatter").join(&name)).unwrap();
        assert_eq!(scatter.lines().count() - 1, c["n_scored"].as_u64().unwrap() as usize);
        let log_name = name.replace(".csv", "_loglog.csv");
        assert!(reports[0].2.join("scatter").join(log_name).exists());
    }
    let text = String::from_utf8(reports[0].1.clone()).unwrap();
    assert!(text.contains("RMSLE") && text.contains("rsf-cr"));
}

#[test]
fn evaluate_requires_seed_and_valid_lists() {
    let (dir, logs) = generated(300, 6);
    let o = run(&["evaluate", p(&logs), "--out", p(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--seed"));
    let o = run(&["evaluate", p(&logs), "--seed", "1", "--models", "cox,gbm", "--out", p(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn curves_for_both_populations() {
    let (_dir, logs) = generated(4000, 9);
    let o = run(&["curves", p(&logs), "--population", "converters", "--axis", "level"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = rows_of(&stdout(&o));
    assert_eq!(rows[0], ["time", "estimate", "lower", "upper"]);
    let last = rows.last().unwrap();
    assert_eq!(last[1], "1");

    let o = run(&["curves", p(&logs), "--level", "0.9"]);
    let rows = rows_of(&stdout(&o));
    for r in &rows[1..] {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[2] <= v[1] && v[1] <= v[3], "{r:?}");
    }

    // Final incidence against the realised converter share of returning players.
    let logs_text = fs::read_to_string(&logs).unwrap();
    let parsed = convsurv::pipeline::read_logs(logs_text.as_bytes()).unwrap();
    let kept = convsurv::pipeline::filter_newcomers(parsed);
    let share = kept.iter().filter(|l| l.first_purchase().is_some()).count() as f64 / kept.len() as f64;
    let final_incidence: f64 = rows.last().unwrap()[1].parse().unwrap();
    assert!(final_incidence >= share - 1e-12);
    assert!(final_incidence < share * 1.6, "{final_incidence} vs {share}");
}

#[test]
fn error_categories_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "player_id,day_index,playtime_hours,level,sessions,actions,purchases\na,0,oops,1,1,1,0\n").unwrap();
    let o = run(&["--json-errors", "curves", p(&bad)]);
    assert_eq!(code(&o), 2);
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(err["error"]["category"], "data");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 2"));

    let o = run(&["--json-errors", "train", p(&bad), "--model", "lasso", "--out", "x"]);
    assert_eq!(code(&o), 1);

    let o = run(&["curves", p(&dir.path().join("missing.csv"))]);
    assert_eq!(code(&o), 3);

    let o = bin().args(["curves", p(&bad)]).env("CONVSURV_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 1);

    let o = run(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}
