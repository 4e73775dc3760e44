//! The end-to-end workflow steps behind the `bodycomp` subcommands. Each
//! returns its printable result and writes its artifacts; nothing here reads
//! the clock or an unseeded RNG.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{self, BaselineKind, Task};
use crate::config::RunConfig;
use crate::dataset::{self, SplitSpec, SubjectRecord};
use crate::error::{Error, Result};
use crate::imageio;
use crate::metrics::{self, CorrelationMatrix, EvalReport, PopulationSummary};
use crate::nnet::{self, EpochStats, TargetStats};
use crate::preprocess::{self, NormStats, PreprocessConfig, PreprocessedSample};

/// Histogram bins of the exported error densities.
pub const DENSITY_BINS: usize = 30;

/// Directory that relative image and chin paths in `csv` resolve against.
pub fn base_dir(csv: &Path) -> PathBuf {
    csv.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

pub fn build_samples(
    records: &[SubjectRecord],
    base: &Path,
    norm: &NormStats,
    cfg: &PreprocessConfig,
) -> Result<Vec<PreprocessedSample>> {
    records
        .par_iter()
        .map(|r| preprocess::build_sample(r, norm, cfg, base))
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(v)? + "\n"))
}

/// Generates the synthetic cohort into `out_dir` and summarises it.
pub fn synth(cfg: &RunConfig, out_dir: &Path) -> Result<PopulationSummary> {
    let records = dataset::generate_synthetic(&cfg.generator, out_dir)?;
    cfg.echo_into(out_dir)?;
    let summary = metrics::population_summary(&records)?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn stats(csv: &Path) -> Result<CorrelationMatrix> {
    metrics::correlation_matrix(&dataset::load_dataset(csv)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct PreprocessSummary {
    pub n: usize,
    pub structured_len: usize,
    pub image_side: usize,
}

#[derive(Serialize)]
struct SampleFeatures<'a> {
    id: &'a str,
    structured: &'a [f64],
    chin_coefficients: &'a [f64],
    chin_rmse: f64,
    pbf: f64,
    smm: f64,
}

/// Writes each subject's five network images and structured vector under
/// `out_dir/<id>/`, normalising with statistics of the training split.
pub fn preprocess(cfg: &RunConfig, csv: &Path, out_dir: &Path) -> Result<PreprocessSummary> {
    let records = dataset::load_dataset(csv)?;
    let (train, _) = dataset::split_dataset(&records, &cfg.split)?;
    let norm = NormStats::from_records(&train)?;
    let samples = build_samples(&records, &base_dir(csv), &norm, &cfg.preprocess)?;
    create_dir(out_dir)?;
    samples.par_iter().try_for_each(|s| -> Result<()> {
        let dir = out_dir.join(&s.id);
        create_dir(&dir)?;
        for (name, img) in nnet::IMAGE_BRANCHES.iter().zip(s.images()) {
            imageio::write_image(img, dir.join(format!("{name}.pgm")))?;
        }
        write_json(
            &dir.join("features.json"),
            &SampleFeatures {
                id: &s.id,
                structured: &s.structured,
                chin_coefficients: &s.chin.coefficients,
                chin_rmse: s.chin.rmse,
                pbf: s.targets.pbf,
                smm: s.targets.smm,
            },
        )
    })?;
    write_json(&out_dir.join("norm_stats.json"), &norm)?;
    cfg.echo_into(out_dir)?;
    Ok(PreprocessSummary {
        n: samples.len(),
        structured_len: cfg.preprocess.structured_len(),
        image_side: cfg.preprocess.image_side,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_val: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub validation: EvalReport,
}

/// Splits, preprocesses and trains; saves the best model to
/// `cfg.paths.model` and `history.csv` plus `train_summary.json` into
/// `cfg.paths.output_dir`.
pub fn train(cfg: &RunConfig, csv: &Path, on_epoch: impl FnMut(&EpochStats)) -> Result<TrainSummary> {
    let records = dataset::load_dataset(csv)?;
    let (train_recs, val_recs) = dataset::split_dataset(&records, &cfg.split)?;
    let norm = NormStats::from_records(&train_recs)?;
    let base = base_dir(csv);
    let train_set = build_samples(&train_recs, &base, &norm, &cfg.preprocess)?;
    let val_set = build_samples(&val_recs, &base, &norm, &cfg.preprocess)?;
    let target = TargetStats::from_samples(&train_set)?;
    let init = nnet::init_model(&cfg.architecture, cfg.train.seed)?
        .with_preprocess(cfg.preprocess.clone())?
        .with_stats(norm, target);
    let (model, history) = nnet::train_with_progress(&init, &train_set, &val_set, &cfg.train, on_epoch)?;

    let out = &cfg.paths.output_dir;
    create_dir(out)?;
    if let Some(parent) = cfg.paths.model.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    nnet::save_model(&model, &cfg.paths.model)?;
    write_text(&out.join("history.csv"), &history.to_csv())?;
    let summary = TrainSummary {
        n_train: train_set.len(),
        n_val: val_set.len(),
        epochs_run: history.epochs.len(),
        best_epoch: history.best_epoch,
        validation: report_for(&model, &val_set)?,
    };
    write_json(&out.join("train_summary.json"), &summary)?;
    cfg.echo_into(out)?;
    Ok(summary)
}

fn report_for(model: &nnet::NetworkModel, samples: &[PreprocessedSample]) -> Result<EvalReport> {
    let preds = model.predict_batch(samples)?;
    let col = |f: fn(&PreprocessedSample) -> f64| samples.iter().map(f).collect::<Vec<_>>();
    EvalReport::compute(
        &col(|s| s.targets.pbf),
        &preds.iter().map(|p| p.pbf).collect::<Vec<_>>(),
        &col(|s| s.targets.smm),
        &preds.iter().map(|p| p.smm).collect::<Vec<_>>(),
    )
}

/// Evaluates a saved model on the validation part of `split`, or on every
/// record when `split` is `None`. Writes `report.json` and per-task density
/// and scatter CSVs into `out_dir`.
pub fn evaluate(model_path: &Path, csv: &Path, out_dir: &Path, split: Option<&SplitSpec>) -> Result<EvalReport> {
    let model = nnet::load_model(model_path)?;
    let records = dataset::load_dataset(csv)?;
    let records = match split {
        Some(s) => dataset::split_dataset(&records, s)?.1,
        None => records,
    };
    let samples = build_samples(&records, &base_dir(csv), &model.norm_stats, &model.preprocess)?;
    let preds = model.predict_batch(&samples)?;
    let ages: Vec<f64> = samples.iter().map(|s| s.age).collect();
    create_dir(out_dir)?;
    for task in Task::ALL {
        let actual: Vec<f64> = records.iter().map(|r| task.value(r)).collect();
        let pred: Vec<f64> = preds
            .iter()
            .map(|p| match task {
                Task::Pbf => p.pbf,
                Task::Smm => p.smm,
            })
            .collect();
        let name = task.name();
        metrics::export_density(
            &metrics::errors(&actual, &pred),
            DENSITY_BINS,
            out_dir.join(format!("{name}_density.csv")),
        )?;
        metrics::export_scatter(&actual, &pred, &ages, out_dir.join(format!("{name}_scatter.csv")))?;
    }
    let report = report_for(&model, &samples)?;
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineRow {
    pub kind: BaselineKind,
    pub pbf_mae: f64,
    pub pbf_sd: f64,
    pub smm_mae: f64,
    pub smm_sd: f64,
}

/// Fits each kind separately per task on the training split and scores it on
/// the validation split. With `out_dir`, saves the models and a
/// `baselines.csv` comparison table there.
pub fn baseline(
    kinds: &[BaselineKind],
    cfg: &RunConfig,
    csv: &Path,
    out_dir: Option<&Path>,
) -> Result<Vec<BaselineRow>> {
    let records = dataset::load_dataset(csv)?;
    let (train, val) = dataset::split_dataset(&records, &cfg.split)?;
    let norm = NormStats::from_records(&train)?;
    if let Some(d) = out_dir {
        create_dir(d)?;
    }
    let mut rows = Vec::new();
    for &kind in kinds {
        let pair = baselines::fit_task_pair(kind, &train, &norm, &cfg.baselines)?;
        let score = |m: &baselines::BaselineModel, task: Task| -> Result<(f64, f64)> {
            let actual: Vec<f64> = val.iter().map(|r| task.value(r)).collect();
            let e = metrics::errors(&actual, &m.predict_records(&val));
            Ok((metrics::mae(&e)?, metrics::error_sd(&e)?))
        };
        let (pbf_mae, pbf_sd) = score(&pair.pbf, Task::Pbf)?;
        let (smm_mae, smm_sd) = score(&pair.smm, Task::Smm)?;
        if let Some(d) = out_dir {
            baselines::save_baseline(&pair.pbf, d.join(format!("baseline_{kind}_pbf.bcm")))?;
            baselines::save_baseline(&pair.smm, d.join(format!("baseline_{kind}_smm.bcm")))?;
        }
        rows.push(BaselineRow {
            kind,
            pbf_mae,
            pbf_sd,
            smm_mae,
            smm_sd,
        });
    }
    if let Some(d) = out_dir {
        write_text(&d.join("baselines.csv"), &baseline_table(&rows))?;
        cfg.echo_into(d)?;
    }
    Ok(rows)
}

pub fn baseline_table(rows: &[BaselineRow]) -> String {
    let mut s = String::from("model,pbf_mae,pbf_sd,smm_mae,smm_sd\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.kind, r.pbf_mae, r.pbf_sd, r.smm_mae, r.smm_sd));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordPrediction {
    pub id: String,
    pub pbf: f64,
    pub smm: f64,
}

/// Predicts one record of `csv`, chosen by id or the first when `id` is None.
pub fn predict(model_path: &Path, csv: &Path, id: Option<&str>) -> Result<RecordPrediction> {
    let model = nnet::load_model(model_path)?;
    let records = dataset::load_dataset(csv)?;
    let rec = match id {
        Some(id) => records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::invalid(format!("no record with id '{id}'")))?,
        None => records.first().ok_or_else(|| Error::invalid("dataset is empty"))?,
    };
    let sample = preprocess::build_sample(rec, &model.norm_stats, &model.preprocess, &base_dir(csv))?;
    let p = model.forward(&sample)?;
    Ok(RecordPrediction {
        id: rec.id.clone(),
        pbf: p.pbf,
        smm: p.smm,
    })
}
