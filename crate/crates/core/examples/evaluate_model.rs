//! The file-based workflow: synthesise a cohort, train briefly, evaluate the
//! saved model and write the error-density and scatter CSVs.
//!
//!     cargo run --release --example evaluate_model -- /tmp/bodycomp-eval

use std::path::PathBuf;

use bodycomp::commands;
use bodycomp::config::RunConfig;

fn main() -> bodycomp::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("bodycomp-eval"), PathBuf::from);
    let at = |p: &str| serde_json::to_string(&root.join(p).to_string_lossy()).unwrap();
    let cfg = RunConfig::load(
        None,
        &[
            "generator.n_subjects=300".into(),
            "generator.image_side=64".into(),
            "preprocess.image_side=32".into(),
            "architecture.image_side=32".into(),
            "train.epochs=5".into(),
            format!("paths.dataset_csv={}", at("data/dataset.csv")),
            format!("paths.output_dir={}", at("run")),
            format!("paths.model={}", at("run/model.bcm")),
        ],
    )?;
    commands::synth(&cfg, &root.join("data"))?;
    let summary = commands::train(&cfg, &cfg.paths.dataset_csv, |e| eprintln!("epoch {} val loss {:.4}", e.epoch, e.val_loss))?;
    println!("best epoch {} of {}", summary.best_epoch, summary.epochs_run);

    let eval_dir = root.join("run/eval");
    let report = commands::evaluate(&cfg.paths.model, &cfg.paths.dataset_csv, &eval_dir, Some(&cfg.split))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("density and scatter CSVs in {}", eval_dir.display());
    Ok(())
}
