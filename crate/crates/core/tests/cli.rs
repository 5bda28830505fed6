use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY_ARFF: &str = "\
% tiny two-class set
@relation tiny
@attribute a numeric
@attribute b real
@attribute class {x,y}
@data
0.1,0.2,x
0.15,0.1,x
0.2,0.25,x
0.12,0.18,x
0.9,0.8,y
0.85,0.95,y
0.8,0.9,y
0.88,0.82,y
0.5,0.5,?
";

const TINY_CSV: &str = "\
f1,f2,label
0.1,0.2,a
0.12,0.22,a
0.15,0.18,a
0.11,0.25,a
0.2,0.2,a
0.9,0.8,b
0.85,0.9,b
0.8,0.85,b
0.95,0.8,b
0.88,0.92,b
0.5,0.1,c
0.55,0.12,c
0.52,0.05,c
0.48,0.09,c
0.5,0.15,c
";

fn altsom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_altsom")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fit_tiny(dir: &Path) -> PathBuf {
    let data = write(dir, "tiny.arff", TINY_ARFF);
    let model = dir.join("model.json");
    let out = altsom(&["fit", "--data", s(&data), "--epochs", "5", "--age-wins", "20", "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    model
}

#[test]
fn fit_writes_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_tiny(dir.path());
    let text = std::fs::read_to_string(model).unwrap();
    let m = altsom::SomModel::from_json(&text).unwrap();
    assert!(!m.is_empty());
    assert_eq!(m.dim(), 2);
}

#[test]
fn missing_data_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.arff");
    let out = altsom(&["fit", "--data", s(&missing), "--out", s(&dir.path().join("m.json"))]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.arff"));
}

#[test]
fn out_of_range_beta_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "tiny.arff", TINY_ARFF);
    let model = dir.path().join("m.json");
    let out = altsom(&["fit", "--data", s(&data), "--beta", "1.2", "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!model.exists());
}

#[test]
fn unknown_flag_and_help() {
    let out = altsom(&["fit", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let help = altsom(&["sweep", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for flag in ["--data", "--labels-column", "--params", "--seed", "--fractions", "--n-configs", "--workers", "--out"] {
        assert!(text.contains(flag), "help lacks {flag}");
    }
}

#[test]
fn predict_writes_one_row_per_input() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_tiny(dir.path());
    let data = dir.path().join("tiny.arff");
    let pred = dir.path().join("pred.csv");
    let out = altsom(&["predict", "--model", s(&model), "--data", s(&data), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&pred).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "row,cluster,class");
    assert_eq!(lines.len(), 10);
    assert!(lines[1..].iter().all(|l| l.ends_with(",x") || l.ends_with(",y")));

    let eval = altsom(&["evaluate", "--model", s(&model), "--data", s(&data)]);
    assert_eq!(eval.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&eval.stdout).contains("accuracy"));
}

#[test]
fn unlabeled_model_leaves_class_empty() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "plain.csv", "0.1,0.2,?\n0.9,0.8,?\n0.5,0.4,?\n");
    let model = dir.path().join("m.json");
    let out = altsom(&["fit", "--data", s(&data), "--epochs", "3", "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let pred = dir.path().join("p.csv");
    let out = altsom(&["predict", "--model", s(&model), "--data", s(&data), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&pred).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn predict_rejects_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_tiny(dir.path());
    let data = write(dir.path(), "wide.csv", "0.1,0.2,0.3,x\n0.4,0.5,0.6,y\n");
    let out = altsom(&["predict", "--model", s(&model), "--data", s(&data), "--out", s(&dir.path().join("p.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m = 2"));
}

fn sweep(dir: &Path, data: &Path, out: &str) -> PathBuf {
    let dest = dir.join(out);
    let o = altsom(&[
        "sweep",
        "--data",
        s(data),
        "--labels-column",
        "2",
        "--n-configs",
        "2",
        "--fractions",
        "1.0",
        "--seed",
        "7",
        "--workers",
        "2",
        "--out",
        s(&dest),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    dest
}

#[test]
fn sweep_exports_are_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "tiny.csv", TINY_CSV);
    let a = sweep(dir.path(), &data, "a");
    let b = sweep(dir.path(), &data, "b");
    for name in ["runs.csv", "accuracy_by_fraction.csv", "best_ce.csv", "manifest.json"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
    // 2 configs x 3 folds x 3 repetitions x 1 fraction, plus header
    let runs = std::fs::read_to_string(a.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 19);
}
