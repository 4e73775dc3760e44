//! Structured-only baselines (linear SVR, random forest, gradient boosting)
//! fitted separately per task on a 90/10 split, printed as a comparison
//! table.

use bodycomp::baselines::{fit_task_pair, BaselineKind, BaselinesConfig, Task};
use bodycomp::dataset::{self, synth, GeneratorConfig, SplitSpec};
use bodycomp::metrics;
use bodycomp::preprocess::NormStats;

fn main() -> bodycomp::Result<()> {
    let gen = GeneratorConfig {
        n_subjects: 2000,
        ..Default::default()
    };
    let records: Vec<_> = synth::draw_population(&gen)?.into_iter().map(|s| s.record).collect();
    let (train, val) = dataset::split_dataset(&records, &SplitSpec::default())?;
    let norm = NormStats::from_records(&train)?;
    let cfg = BaselinesConfig::default();

    println!("{:<16} {:>9} {:>8} {:>9} {:>8}", "model", "PBF MAE", "PBF SD", "SMM MAE", "SMM SD");
    for kind in BaselineKind::ALL {
        let pair = fit_task_pair(kind, &train, &norm, &cfg)?;
        let mut cells = Vec::new();
        for (task, model) in [(Task::Pbf, &pair.pbf), (Task::Smm, &pair.smm)] {
            let actual: Vec<f64> = val.iter().map(|r| task.value(r)).collect();
            let e = metrics::errors(&actual, &model.predict_records(&val));
            cells.push((metrics::mae(&e)?, metrics::error_sd(&e)?));
        }
        println!(
            "{:<16} {:>9.3} {:>8.3} {:>9.3} {:>8.3}",
            kind.name(),
            cells[0].0,
            cells[0].1,
            cells[1].0,
            cells[1].1
        );
    }
    Ok(())
}
