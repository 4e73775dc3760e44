use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bodycomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bodycomp"))
        .args(args)
        .output()
        .expect("run bodycomp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_str(&stdout(o)).expect("json output")
}

/// Small-image run settings rooted at `dir`.
fn tiny(dir: &Path, n: usize) -> Vec<String> {
    let p = |s: &str| dir.join(s).to_string_lossy().into_owned();
    [
        format!("generator.n_subjects={n}"),
        "generator.image_side=64".into(),
        "preprocess.image_side=32".into(),
        "architecture.image_side=32".into(),
        "architecture.image_branch=[{\"type\":\"conv\",\"channels\":2,\"kernel\":3,\"stride\":1},{\"type\":\"relu\"},{\"type\":\"max_pool\",\"size\":2,\"stride\":2},{\"type\":\"conv\",\"channels\":4,\"kernel\":3,\"stride\":1},{\"type\":\"relu\"},{\"type\":\"global_avg_pool\"}]".into(),
        "train.epochs=3".into(),
        "train.batch_size=16".into(),
        format!("paths.dataset_csv={}", p("data/dataset.csv")),
        format!("paths.output_dir={}", p("run")),
        format!("paths.model={}", p("run/model.bcm")),
    ]
    .into_iter()
    .flat_map(|s| ["--set".to_string(), s])
    .collect()
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(tail.iter().map(String::as_str)).collect()
}

#[test]
fn synth_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), 80);
    let summary = json(&bodycomp(&with(&["synth"], &cfg)));
    assert_eq!(summary["n"], 80);
    let csv = dir.path().join("data/dataset.csv");
    assert!(csv.exists());
    assert!(dir.path().join("data/config.json").exists());
    assert!(dir.path().join("data/images/s00000.ppm").exists());

    let out = bodycomp(&["stats", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    for (i, line) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 8);
        let diag = cells[i + 1];
        assert!(diag == "1.000000" || diag == "NA", "{line}");
    }
}

#[test]
fn synth_weight_mean_matches_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let s = json(&bodycomp(&[
        "synth",
        "--set",
        "generator.n_subjects=5000",
        "--set",
        "generator.image_side=64",
        "--out",
        &out,
    ]));
    let w = s["weight"]["mean"].as_f64().unwrap();
    assert!((w - 63.25).abs() <= 2.0, "{w}");
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let o = bodycomp(&["synth", "--set", "generator.n_subjects=0", "--out", "/nonexistent/x"]);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).trim().lines().count(), 1);

    let o = bodycomp(&["stats", "/nonexistent/dataset.csv"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));

    let o = bodycomp(&["baseline", "bogus"]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("svr") && e.contains("random_forest") && e.contains("gradient_boost"), "{e}");

    let o = bodycomp(&["train", "--set", "train.epoch=3"]);
    assert!(!o.status.success());
}

#[test]
fn baseline_reports_finite_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), 200);
    json(&bodycomp(&with(&["synth"], &cfg)));
    let mut args = vec!["baseline".to_string(), "gradient_boost".into()];
    args.extend(cfg.iter().cloned());
    args.extend(["--set".into(), "baselines.gradient_boost.n_rounds=50".into()]);
    let v = json(&bodycomp(&args.iter().map(String::as_str).collect::<Vec<_>>()));
    let row = &v[0];
    assert_eq!(row["kind"], "gradient_boost");
    for k in ["pbf_mae", "pbf_sd", "smm_mae", "smm_sd"] {
        assert!(row[k].as_f64().unwrap().is_finite());
    }

    let out = dir.path().join("bl");
    let mut args = with(&["baseline", "all", "--out", out.to_str().unwrap()], &cfg);
    args.extend(["--set", "baselines.random_forest.n_trees=10", "--set", "baselines.gradient_boost.n_rounds=20"]);
    let v = json(&bodycomp(&args));
    assert_eq!(v.as_array().unwrap().len(), 3);
    let table = fs::read_to_string(out.join("baselines.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(out.join("baseline_svr_pbf.bcm").exists());
}

#[test]
fn train_evaluate_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), 60);
    json(&bodycomp(&with(&["synth"], &cfg)));

    let s = json(&bodycomp(&with(&["train", "--quiet"], &cfg)));
    assert!(s["epochs_run"].as_u64().unwrap() <= 3);
    let history = fs::read_to_string(dir.path().join("run/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    let model = fs::read(dir.path().join("run/model.bcm")).unwrap();

    json(&bodycomp(&with(&["train", "--quiet"], &cfg)));
    assert_eq!(fs::read_to_string(dir.path().join("run/history.csv")).unwrap(), history);
    assert_eq!(fs::read(dir.path().join("run/model.bcm")).unwrap(), model);

    let eval = dir.path().join("eval");
    let r = json(&bodycomp(&with(&["evaluate", "--out", eval.to_str().unwrap()], &cfg)));
    for k in ["pbf_pearson_pred_actual", "smm_pearson_pred_actual", "pearson_pred_pbf_vs_pred_smm"] {
        let v = r[k].as_f64().unwrap();
        assert!((-1.0..=1.0).contains(&v), "{k} {v}");
    }
    for f in ["report.json", "pbf_density.csv", "smm_density.csv", "pbf_scatter.csv", "smm_scatter.csv"] {
        assert!(eval.join(f).exists(), "{f}");
    }
    assert!(fs::read_to_string(eval.join("pbf_scatter.csv")).unwrap().starts_with("actual,predicted,age_group\n"));
    let all = json(&bodycomp(&with(&["evaluate", "--all", "--out", eval.to_str().unwrap()], &cfg)));
    assert_eq!(all["n"], 60);

    let csv = dir.path().join("data/dataset.csv");
    let p = json(&bodycomp(&[
        "predict",
        "--model",
        dir.path().join("run/model.bcm").to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--id",
        "s00003",
    ]));
    assert_eq!(p["id"], "s00003");
    assert!(p["pbf"].as_f64().unwrap().is_finite() && p["smm"].as_f64().unwrap().is_finite());

    let pre = dir.path().join("pre");
    let s = json(&bodycomp(&with(&["preprocess", "--out", pre.to_str().unwrap()], &cfg)));
    assert_eq!(s["n"], 60);
    assert_eq!(s["structured_len"], 7);
    assert!(pre.join("s00000/ul.pgm").exists());
    assert!(pre.join("s00000/features.json").exists());
}

#[test]
fn missing_images_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), 30);
    json(&bodycomp(&with(&["synth"], &cfg)));
    fs::remove_file(dir.path().join("data/images/s00004.ppm")).unwrap();
    let o = bodycomp(&with(&["train", "--quiet"], &cfg));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("s00004.ppm"), "{}", stderr(&o));
}
