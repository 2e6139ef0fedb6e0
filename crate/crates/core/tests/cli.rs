use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drobust::{Dataset, ModelParams};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_drobust"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Two separable 2-D blobs, grouped by class.
fn toy_csv(dir: &Path) -> PathBuf {
    let mut s = String::from("x0,x1,label\n");
    for i in 0..20 {
        let t = i as f64 * 0.1;
        s.push_str(&format!("{},{},0\n", -1.0 - t, 0.5 - t));
        s.push_str(&format!("{},{},1\n", 1.0 + t, -0.3 + t));
    }
    let p = dir.join("toy.csv");
    fs::write(&p, s).unwrap();
    p
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn toy_config(dir: &Path, model: &str) -> PathBuf {
    toy_csv(dir);
    write_config(
        dir,
        &format!("[data]\npath = \"toy.csv\"\ngrouping = \"class\"\n\n[model]\n{model}\n"),
    )
}

#[test]
fn train_writes_model_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "objective = \"erm\"\nlambda = 0.1");
    let out = dir.path().join("out");
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "train"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("model.txt").exists());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("train_report.json")).unwrap()).unwrap();
    assert_eq!(report["objective"], "erm");
    assert!(report["objective_trace"].as_array().unwrap().len() >= 2);
    assert!(stdout(&o).contains("objective = erm"));
}

#[test]
fn missing_dataset_exits_2_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[data]\npath = \"no_such_file.csv\"\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_file.csv"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[data]\npath = \"x.csv\"\n[model]\ndelta = -0.5\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "train"]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(dir.path(), "[data\n");
    let o = run(&["--config", cfg.to_str().unwrap(), "train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.toml:1"));
}

#[test]
fn zero_radius_structural_report_matches_erm() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for objective in ["erm", "structural_aerm"] {
        let cfg = toy_config(dir.path(), &format!("objective = \"{objective}\"\ndelta = 0.0\nlambda = 0.1"));
        let out = dir.path().join(objective);
        let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "train"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("train_report.json")).unwrap()).unwrap();
        let trace: Vec<f64> = serde_json::from_value(report["objective_trace"].clone()).unwrap();
        let model = ModelParams::load(&out.join("model.txt")).unwrap();
        traces.push((trace, model.to_flat()));
    }
    let (a, b) = (&traces[0], &traces[1]);
    assert_eq!(a.0.len(), b.0.len());
    for (x, y) in a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)) {
        assert!((x - y).abs() <= 1e-6);
    }
}

/// 1-D data, 10 samples per group, all of class 1; `wrong[g]` of group g sit at x = -1.
fn sign_fixture(dir: &Path, wrong: &[usize]) -> (PathBuf, PathBuf) {
    let mut s = String::from("x0,label,group\n");
    for (g, &w) in wrong.iter().enumerate() {
        for i in 0..10 {
            s.push_str(&format!("{},1,{g}\n", if i < w { -1.0 } else { 1.0 }));
        }
    }
    let data = dir.join("test.csv");
    fs::write(&data, s).unwrap();
    let mut m = ModelParams::zeros_margin(1).unwrap();
    m.weights = vec![1.0];
    let model = dir.join("sign.txt");
    m.save(&model).unwrap();
    (model, data)
}

fn kv(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn evaluate_perfect_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let (model, data) = sign_fixture(dir.path(), &[0, 0]);
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--no-surrogate",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    for key in ["ordinary_risk", "adversarial_01_risk", "structural_adv_risk_01"] {
        assert_eq!(kv(&s, key), 0.0);
    }
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn evaluate_pearson_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (model, data) = sign_fixture(dir.path(), &[2, 4]);
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--divergence",
        "pearson",
        "--delta",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    let st = kv(&s, "structural_adv_risk_01");
    assert!((st - 0.37071).abs() < 1e-5);
    let (ord, adv) = (kv(&s, "ordinary_risk"), kv(&s, "adversarial_01_risk"));
    assert!(ord <= st && st <= adv);
    let report: drobust::RobustnessReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!((report.structural_adv_risk_01 - 0.370_710_678_118_654_8).abs() < 1e-12);
}

#[test]
fn evaluate_dimension_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (_, data) = sign_fixture(dir.path(), &[1, 1]);
    let model = dir.path().join("wide.txt");
    ModelParams::zeros(2, 3).unwrap().save(&model).unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("features"));
}

fn experiment_config(dir: &Path, objectives: &str) -> PathBuf {
    write_config(
        dir,
        &format!(
            "[synthetic]\ntrain_priors = [0.7, 0.3]\ntest_priors = [0.7, 0.3]\nn_train = 80\nn_test = 100\n\
             [[synthetic.groups]]\nlabel = 0\nmean = [-1.0]\n[[synthetic.groups]]\nlabel = 1\nmean = [1.0]\n\
             [model]\nmax_epochs = 100\n\
             [experiment]\nobjectives = {objectives}\nlambda_grid = [0.1, 0.01]\nfolds = 3\nrepeats = 1\nseed = 4\n"
        ),
    )
}

#[test]
fn experiment_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment_config(dir.path(), "[\"erm\", \"aerm\", \"structural_aerm\"]");
    let mut outputs = Vec::new();
    for run_id in 0..2 {
        let out = dir.path().join(format!("run{run_id}"));
        let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "experiment"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push((
            fs::read(out.join("table.txt")).unwrap(),
            fs::read(out.join("table.csv")).unwrap(),
            fs::read(out.join("repeats.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn experiment_single_objective_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment_config(dir.path(), "[\"structural_aerm\"]");
    let out = dir.path().join("out");
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1", "experiment"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("table.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("structural_aerm,"));
}

fn weights_of(stdout: &str) -> Vec<f64> {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("weights = "))
        .unwrap()
        .split_whitespace()
        .map(|w| w.parse().unwrap())
        .collect()
}

#[test]
fn weights_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let equal = dir.path().join("equal.txt");
    fs::write(&equal, "0.3\n0.3\n0.3\n").unwrap();
    let o = run(&["--out", d, "weights", "--losses", equal.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(weights_of(&stdout(&o)), vec![1.0; 3]);

    let groups = dir.path().join("groups.csv");
    fs::write(&groups, "count,mean_loss\n50,0\n50,1\n").unwrap();
    let o = run(&["--out", d, "weights", "--groups", groups.to_str().unwrap(), "--divergence", "kl", "--delta", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let w = weights_of(&stdout(&o));
    assert!((w[0] - 0.096).abs() < 1e-3 && (w[1] - 1.904).abs() < 1e-3, "{w:?}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("weights.json")).unwrap()).unwrap();
    assert!((json["objective"].as_f64().unwrap() - 0.952).abs() < 1e-3);

    let o = run(&["--out", d, "weights", "--groups", groups.to_str().unwrap(), "--delta", "0"]);
    assert_eq!(weights_of(&stdout(&o)), vec![1.0, 1.0]);

    let o = run(&["--out", d, "weights", "--groups", groups.to_str().unwrap(), "--delta", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["--out", d, "weights"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "objective = \"structural_aerm\"\nloss = \"logistic\"\nlambda = 0.01");
    let out = dir.path().join("out");
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "train"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model = ModelParams::load(&out.join("model.txt")).unwrap();
    assert!(model.is_margin());

    let data = dir.path().join("toy.csv");
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "evaluate",
        "--model",
        out.join("model.txt").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(kv(&stdout(&o), "ordinary_risk"), 0.0);
    assert!(kv(&stdout(&o), "structural_adv_risk_surrogate") > 0.0);

    let ds = drobust::data::load(&data, drobust::Format::Csv).unwrap();
    let ds: Dataset = drobust::data::apply_grouping(&ds, &drobust::GroupingSpec::ByClass).unwrap();
    assert_eq!(ds.group_counts().unwrap(), vec![20, 20]);
}
