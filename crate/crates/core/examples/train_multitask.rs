//! Train the six-branch multi-task network on a small in-memory synthetic
//! cohort and report per-epoch losses.
//!
//!     cargo run --release --example train_multitask -- 600 15

use bodycomp::dataset::{self, synth, GeneratorConfig, SplitSpec};
use bodycomp::nnet::{self, conv_stack, ArchitectureSpec, TargetStats, TrainConfig};
use bodycomp::preprocess::{self, NormStats, PreprocessConfig};

fn main() -> bodycomp::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(400);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let gen = GeneratorConfig {
        n_subjects: n,
        image_side: 64,
        ..Default::default()
    };
    let pop = synth::render_population(&gen)?;
    let (train_pop, val_pop) = dataset::split_dataset(&pop, &SplitSpec::default())?;
    let train_recs: Vec<_> = train_pop.iter().map(|p| p.subject.record.clone()).collect();
    let norm = NormStats::from_records(&train_recs)?;

    let pre = PreprocessConfig {
        image_side: 32,
        ..Default::default()
    };
    let build = |part: &[synth::RenderedSubject]| -> bodycomp::Result<Vec<_>> {
        part.iter()
            .map(|p| preprocess::build_sample_from_parts(&p.subject.record, &p.image, &p.chin_points, &norm, &pre))
            .collect()
    };
    let (train_set, val_set) = (build(&train_pop)?, build(&val_pop)?);

    let arch = ArchitectureSpec {
        image_side: 32,
        image_branch: conv_stack(&[4, 8, 8], false),
        ..Default::default()
    };
    let model = nnet::init_model(&arch, 7)?
        .with_preprocess(pre.clone())?
        .with_stats(norm, TargetStats::from_samples(&train_set)?);
    println!("{} parameters, {} train / {} validation", model.parameter_count(), train_set.len(), val_set.len());

    let cfg = TrainConfig {
        epochs,
        ..Default::default()
    };
    let (best, history) = nnet::train_with_progress(&model, &train_set, &val_set, &cfg, |e| {
        println!(
            "epoch {:>3}  loss {:.4} / {:.4}  val MAE pbf {:.2}  smm {:.2}",
            e.epoch, e.train_loss, e.val_loss, e.val_mae_pbf, e.val_mae_smm
        );
    })?;
    let p = best.forward(&val_set[0])?;
    let t = val_set[0].targets;
    println!("best epoch {}", history.best_epoch);
    println!("{}: predicted pbf {:.1} smm {:.1}, actual {:.1} / {:.1}", val_set[0].id, p.pbf, p.smm, t.pbf, t.smm);
    Ok(())
}
