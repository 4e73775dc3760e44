//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Pass criterion numbers as arguments to run a subset.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bodycomp::baselines::{
    self, BaselineKind, BaselineModel, DecisionTree, FeatureMatrix, LinearSvr, Node, Regressor, TreeParams,
};
use bodycomp::chinfit;
use bodycomp::commands::{self, BaselineRow};
use bodycomp::config::RunConfig;
use bodycomp::dataset::{self, Gender, SubjectRecord};
use bodycomp::imageio::{self, Image};
use bodycomp::metrics::{self, EvalReport, PopulationSummary};
use bodycomp::nnet::{self, ArchitectureSpec, GradCheckConfig, LossWeights, TargetStats};
use bodycomp::preprocess::{BBox, FeatureStat, NormStats};
use bodycomp::rng::{self, Prng, Rng};
use common::{random_rows, random_sample, tree_oracle};

type Check = std::result::Result<String, String>;

fn within(name: &str, got: f64, want: f64, tol: f64) -> Check {
    if (got - want).abs() <= tol {
        Ok(format!("{name} {got:.3}"))
    } else {
        Err(format!("{name} {got:.4} outside {want} ± {tol}"))
    }
}

fn all(checks: Vec<Check>) -> Check {
    let (ok, bad): (Vec<_>, Vec<_>) = checks.into_iter().partition(|c| c.is_ok());
    if bad.is_empty() {
        Ok(ok.into_iter().map(|c| c.unwrap()).collect::<Vec<_>>().join(", "))
    } else {
        Err(bad.into_iter().map(|c| c.unwrap_err()).collect::<Vec<_>>().join("; "))
    }
}

fn comparison_config(root: &Path) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/comparison.json");
    let paths = [
        format!("paths.dataset_csv={}", json_str(&root.join("data/dataset.csv"))),
        format!("paths.output_dir={}", json_str(&root.join("run"))),
        format!("paths.model={}", json_str(&root.join("run/model.bcm"))),
    ];
    RunConfig::load(Some(&path), &paths).expect("comparison config")
}

fn json_str(p: &Path) -> String {
    serde_json::to_string(&p.to_string_lossy()).unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

struct Calibration {
    summary: PopulationSummary,
    csv: PathBuf,
    seconds: f64,
}

fn run_calibration(dir: &Path) -> Calibration {
    let cfg = RunConfig::load(None, &["generator.n_subjects=5000".into()]).unwrap();
    let t = Instant::now();
    let summary = commands::synth(&cfg, dir).unwrap();
    Calibration {
        summary,
        csv: dir.join("dataset.csv"),
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn criterion1(c: &Calibration) -> Check {
    let s = &c.summary;
    all(vec![
        within("age mean", s.age.mean, 40.4, 2.0),
        within("age sd", s.age.sd, 12.9, 2.0),
        within("height mean", s.height.mean, 165.4, 2.0),
        within("height sd", s.height.sd, 9.7, 1.5),
        within("weight mean", s.weight.mean, 63.25, 2.0),
        within("weight sd", s.weight.sd, 15.9, 2.5),
        within("smm mean", s.smm.mean, 25.8, 1.5),
        within("pbf mean", s.pbf.mean, 25.2, 2.0),
        within("male fraction", s.male_fraction, 0.51, 0.02),
        if c.seconds <= 120.0 {
            Ok(format!("{:.1}s", c.seconds))
        } else {
            Err(format!("took {:.1}s > 120s", c.seconds))
        },
    ])
}

fn criterion2(c: &Calibration) -> Check {
    let m = commands::stats(&c.csv).map_err(|e| e.to_string())?;
    let r = |a, b| m.get(a, b).unwrap_or(f64::NAN);
    all(vec![
        within("r(weight,smm)", r("weight", "smm"), 0.86, 0.15),
        within("r(height,smm)", r("height", "smm"), 0.84, 0.15),
        within("r(gender,smm)", r("gender", "smm"), 0.70, 0.15),
        within("r(weight,pbf)", r("weight", "pbf"), 0.39, 0.15),
        within("r(smm,pbf)", r("smm", "pbf"), -0.11, 0.15),
    ])
}

fn criterion3() -> Check {
    let t = Instant::now();
    let mut model = nnet::init_model(&ArchitectureSpec::miniature(8), 3).unwrap().with_stats(
        NormStats::IDENTITY,
        TargetStats {
            pbf: FeatureStat { mean: 25.0, sd: 8.0 },
            smm: FeatureStat { mean: 26.0, sd: 6.5 },
        },
    );
    // Zero initial biases put dead units exactly on the ReLU kink; check at a
    // generic point instead.
    let mut r = rng::from_seed(33);
    for t in model.parameters_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng::normal(&mut r, 0.0, 0.05));
    }
    let batch: Vec<_> = (0..3).map(|i| random_sample(8, 7, 300 + i)).collect();
    let weights = LossWeights { pbf: 1.0, smm: 0.8 };
    let report = nnet::check_gradients(&model, &batch, weights, GradCheckConfig::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let detail = format!(
        "{}/{} entries match, max abs error {:.2e}, {secs:.1}s",
        report.checked - report.mismatches.len(),
        report.checked,
        report.max_abs_error
    );
    if report.passed() && report.checked == model.parameter_count() && secs <= 60.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; first mismatch {:?}", report.mismatches.first()))
    }
}

fn criterion4() -> Check {
    let mut worst_oracle = 0.0f64;
    let mut worst_exact = 0.0f64;
    for case in 0..100u64 {
        let mut r = rng::substream(400, &[case]);
        let n = r.gen_range(5..40);
        let coef: Vec<f64> = (0..3).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect();
        let us: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let poly = |u: f64| coef[0] + coef[1] * u + coef[2] * u * u;
        let noisy: Vec<(f64, f64)> = us.iter().map(|&u| (u, poly(u) + rng::normal(&mut r, 0.0, 0.05))).collect();
        let fit = chinfit::fit_polynomial(&noisy, 2).map_err(|e| e.to_string())?;
        let oracle = common::normal_equation_fit(&noisy, 2);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            worst_oracle = worst_oracle.max((a - b).abs());
        }
        let exact: Vec<(f64, f64)> = us.iter().map(|&u| (u, poly(u))).collect();
        let fit = chinfit::fit_polynomial(&exact, 2).map_err(|e| e.to_string())?;
        for (a, b) in fit.coefficients.iter().zip(&coef) {
            worst_exact = worst_exact.max((a - b).abs());
        }
    }
    let detail = format!("max |Δ| vs normal equations {worst_oracle:.1e}, noiseless recovery {worst_exact:.1e}");
    if worst_oracle <= 1e-8 && worst_exact <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion5() -> Check {
    for case in 0..50u64 {
        let mut r = rng::substream(500, &[case]);
        let rows = random_rows(10, &mut r);
        let y: Vec<f64> = (0..10).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect();
        let data = FeatureMatrix::new(rows.clone(), y.clone()).unwrap();
        let t = baselines::fit_tree(&data, TreeParams { max_depth: 2, min_leaf: 1 }).unwrap();
        if !tree_oracle::same(&t, 0, &tree_oracle::fit(&rows, &y, 2, 1)) {
            return Err(format!("instance {case} differs"));
        }
    }
    Ok("50/50 instances identical".into())
}

struct EndToEnd {
    cfg: RunConfig,
    baselines: Vec<BaselineRow>,
    report: EvalReport,
    seconds: f64,
}

fn run_end_to_end(root: &Path) -> Result<EndToEnd, String> {
    let t = Instant::now();
    let cfg = comparison_config(root);
    let csv = cfg.paths.dataset_csv.clone();
    commands::synth(&cfg, &root.join("data")).map_err(|e| e.to_string())?;
    let rows = commands::baseline(&BaselineKind::ALL, &cfg, &csv, Some(&root.join("run/baselines")))
        .map_err(|e| e.to_string())?;
    commands::train(&cfg, &csv, |_| {}).map_err(|e| e.to_string())?;
    let report = commands::evaluate(&cfg.paths.model, &csv, &root.join("run/eval"), Some(&cfg.split))
        .map_err(|e| e.to_string())?;
    Ok(EndToEnd {
        cfg,
        baselines: rows,
        report,
        seconds: t.elapsed().as_secs_f64(),
    })
}

fn criterion6(e: &EndToEnd) -> Check {
    let best_pbf = e.baselines.iter().map(|r| r.pbf_mae).fold(f64::INFINITY, f64::min);
    let best_smm = e.baselines.iter().map(|r| r.smm_mae).fold(f64::INFINITY, f64::min);
    let (pbf, smm) = (e.report.pbf_mae, e.report.smm_mae);
    let detail = format!(
        "PBF MAE {pbf:.3} vs best baseline {best_pbf:.3}; SMM MAE {smm:.3} vs {best_smm:.3} ({:.3}x); {} epochs; {:.0}s",
        smm / best_smm,
        e.cfg.train.epochs,
        e.seconds
    );
    if pbf < best_pbf && smm <= 1.1 * best_smm && e.cfg.train.epochs <= 40 && e.seconds <= 900.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion7(e: &EndToEnd) -> Check {
    let (s, p) = (e.report.smm_pearson_pred_actual, e.report.pbf_pearson_pred_actual);
    let detail = format!("r(pred, actual) SMM {s:.3}, PBF {p:.3}");
    if s >= 0.90 && p >= 0.60 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The end-to-end model scored on a separately generated cohort large enough
/// for the correlation to be stable.
fn criterion8(e: &EndToEnd, root: &Path) -> Check {
    let mut cfg = e.cfg.clone();
    cfg.generator.n_subjects = 600;
    cfg.generator.seed = 8;
    let dir = root.join("heldout");
    commands::synth(&cfg, &dir).map_err(|e| e.to_string())?;
    let csv = dir.join("dataset.csv");
    let report = commands::evaluate(&e.cfg.paths.model, &csv, &dir.join("eval"), None).map_err(|e| e.to_string())?;
    let recs = dataset::load_dataset(&csv).map_err(|e| e.to_string())?;
    let pbf: Vec<f64> = recs.iter().map(|r| r.pbf).collect();
    let smm: Vec<f64> = recs.iter().map(|r| r.smm).collect();
    let actual = metrics::pearson(&pbf, &smm).map_err(|e| e.to_string())?;
    let pred = report.pearson_pred_pbf_vs_pred_smm;
    let detail = format!("n={}, r(pbf^, smm^) {pred:.3} vs r(pbf, smm) {actual:.3}", report.n);
    if report.n >= 500 && (pred - actual).abs() <= 0.2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rerun_identical(dir: &Path, run: impl FnOnce(&Path)) -> Check {
    let first = snapshot(dir);
    let moved = dir.with_extension("first");
    fs::rename(dir, &moved).unwrap();
    run(dir);
    let second = snapshot(dir);
    let differing: Vec<_> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .collect();
    fs::remove_dir_all(&moved).ok();
    if differing.is_empty() {
        Ok(format!("{} files identical", first.len()))
    } else {
        Err(format!("{} files differ, e.g. {}", differing.len(), differing[0].display()))
    }
}

fn random_image(r: &mut Prng) -> Image {
    let (w, h) = (r.gen_range(1..40), r.gen_range(1..40));
    let c = if r.gen_bool(0.5) { 1 } else { 3 };
    Image::new(w, h, c, (0..w * h * c).map(|_| r.gen()).collect()).unwrap()
}

fn random_tree(r: &mut Prng, depth: usize) -> DecisionTree {
    let mut nodes = Vec::new();
    fn go(r: &mut Prng, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf {
            value: rng::normal(r, 0.0, 10.0),
        });
        if depth > 0 && r.gen_bool(0.6) {
            let feature = r.gen_range(0..4);
            let threshold = rng::normal(r, 0.0, 1.0);
            let left = go(r, depth - 1, nodes);
            let right = go(r, depth - 1, nodes);
            nodes[id] = Node::Split {
                feature,
                threshold,
                left,
                right,
            };
        }
        id
    }
    go(r, depth, &mut nodes);
    DecisionTree::from_nodes(nodes).unwrap()
}

fn random_stat(r: &mut Prng) -> FeatureStat {
    FeatureStat {
        mean: rng::normal(r, 50.0, 20.0),
        sd: r.gen_range(0.1..20.0),
    }
}

fn random_baseline(r: &mut Prng, i: usize) -> BaselineModel {
    let regressor = match i % 3 {
        0 => Regressor::Svr(LinearSvr {
            weights: std::array::from_fn(|_| rng::normal(r, 0.0, 1.0)),
            bias: rng::normal(r, 0.0, 1.0),
            target: random_stat(r),
        }),
        1 => Regressor::RandomForest((0..r.gen_range(1..6)).map(|_| random_tree(r, 5)).collect()),
        _ => Regressor::GradientBoost {
            base: rng::normal(r, 20.0, 5.0),
            learning_rate: r.gen_range(0.01..1.0),
            trees: (0..r.gen_range(0..6)).map(|_| random_tree(r, 3)).collect(),
        },
    };
    BaselineModel {
        norm_stats: NormStats {
            height: random_stat(r),
            age: random_stat(r),
            weight: random_stat(r),
        },
        regressor,
    }
}

fn random_record(r: &mut Prng, i: usize) -> SubjectRecord {
    let weight = r.gen_range(30.0..120.0);
    SubjectRecord {
        id: format!("x{i}_{}", r.gen::<u32>()),
        race: ["JP", "KR", "CN"][r.gen_range(0..3)].to_string(),
        gender: if r.gen_bool(0.5) { Gender::Male } else { Gender::Female },
        age: r.gen_range(7..85),
        height: r.gen_range(120.0..200.0),
        weight,
        smm: r.gen_range(5.0..weight * 0.6),
        pbf: r.gen_range(3.0..55.0),
        image_path: PathBuf::from(format!("images/{i}.ppm")),
        face_bbox: BBox::new(
            r.gen_range(0..100) as f64,
            r.gen_range(0..100) as f64,
            r.gen_range(1..150) as f64,
            r.gen_range(1..150) as f64,
        ),
        chin_points_path: PathBuf::from(format!("chin/{i}.txt")),
    }
}

fn criterion10(root: &Path) -> Check {
    let dir = root.join("roundtrip");
    fs::create_dir_all(&dir).unwrap();
    let mut r = rng::from_seed(10);
    let mut fails = Vec::new();
    for i in 0..100 {
        let img = random_image(&mut r);
        let p = dir.join(format!("img{i}.pnm"));
        imageio::write_image(&img, &p).unwrap();
        let back = imageio::read_image(&p).unwrap();
        if back != img || imageio::encode(&back) != fs::read(&p).unwrap() {
            fails.push(format!("image {i}"));
        }

        let side = [4, 8][i % 2];
        let model = nnet::init_model(&ArchitectureSpec::miniature(side), i as u64).unwrap().with_stats(
            NormStats {
                height: random_stat(&mut r),
                age: random_stat(&mut r),
                weight: random_stat(&mut r),
            },
            TargetStats {
                pbf: random_stat(&mut r),
                smm: random_stat(&mut r),
            },
        );
        let p = dir.join(format!("model{i}.bcm"));
        nnet::save_model(&model, &p).unwrap();
        let back = nnet::load_model(&p).unwrap();
        let same = back.parameters() == model.parameters()
            && back.norm_stats == model.norm_stats
            && back.target_stats == model.target_stats
            && back.architecture == model.architecture
            && nnet::encode_model(&back).unwrap() == fs::read(&p).unwrap();
        if !same {
            fails.push(format!("network model {i}"));
        }

        let b = random_baseline(&mut r, i);
        let p = dir.join(format!("baseline{i}.bcm"));
        baselines::save_baseline(&b, &p).unwrap();
        let back = baselines::load_baseline(&p).unwrap();
        if back != b || baselines::encode_baseline(&back).unwrap() != fs::read(&p).unwrap() {
            fails.push(format!("baseline model {i}"));
        }

        let recs: Vec<_> = (0..r.gen_range(1..20)).map(|k| random_record(&mut r, k)).collect();
        let p = dir.join(format!("data{i}.csv"));
        dataset::write_dataset(&recs, &p).unwrap();
        let back = dataset::load_dataset(&p).unwrap();
        if back != recs || dataset::format_dataset(&back).unwrap().as_bytes() != fs::read(&p).unwrap() {
            fails.push(format!("dataset {i}"));
        }
    }
    if fails.is_empty() {
        Ok("100 images, 100 network models, 100 baseline models, 100 datasets bit-identical".into())
    } else {
        Err(format!("{} failures: {}", fails.len(), fails.join(", ")))
    }
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

const TITLES: [&str; 10] = [
    "generator calibration",
    "correlation calibration",
    "gradient correctness",
    "least-squares oracle",
    "tree oracle",
    "multimodal beats structured-only baselines",
    "prediction correlations",
    "negative PBF-SMM correlation preserved",
    "determinism",
    "format round-trips",
];

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| selected.is_empty() || selected.contains(&n);
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let mut failed = 0;
    let mut report = |n: usize, result: Check| {
        match &result {
            Ok(d) => println!("PASS  criterion {n:>2} ({}): {d}", TITLES[n - 1]),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion {n:>2} ({}): {d}", TITLES[n - 1]);
            }
        }
    };

    let cal_dir = root.join("calibration");
    let calibration = (want(1) || want(2) || want(9)).then(|| run_calibration(&cal_dir));
    if let Some(c) = &calibration {
        if want(1) {
            report(1, guarded(|| criterion1(c)));
        }
        if want(2) {
            report(2, guarded(|| criterion2(c)));
        }
    }
    if want(3) {
        report(3, guarded(criterion3));
    }
    if want(4) {
        report(4, guarded(criterion4));
    }
    if want(5) {
        report(5, guarded(criterion5));
    }
    let e2e_dir = root.join("comparison");
    let e2e = (want(6) || want(7) || want(8) || want(9)).then(|| guarded_e2e(&e2e_dir));
    if let Some(e) = &e2e {
        match e {
            Ok(e) => {
                if want(6) {
                    report(6, guarded(|| criterion6(e)));
                }
                if want(7) {
                    report(7, guarded(|| criterion7(e)));
                }
                if want(8) {
                    report(8, guarded(|| criterion8(e, root)));
                }
            }
            Err(msg) => {
                for n in [6, 7, 8] {
                    if want(n) {
                        report(n, Err(format!("pipeline failed: {msg}")));
                    }
                }
            }
        }
    }
    if want(9) {
        let result = guarded(|| {
            let a = rerun_identical(&cal_dir, |d| {
                run_calibration(d);
            })?;
            let b = rerun_identical(&e2e_dir, |d| {
                run_end_to_end(d).expect("end-to-end rerun");
            })?;
            Ok(format!("calibration: {a}; end-to-end: {b}"))
        });
        report(9, result);
    }
    if want(10) {
        report(10, guarded(|| criterion10(root)));
    }

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn guarded_e2e(dir: &Path) -> Result<EndToEnd, String> {
    panic::catch_unwind(AssertUnwindSafe(|| run_end_to_end(dir))).unwrap_or_else(|_| Err("panicked".into()))
}
