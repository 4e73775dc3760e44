//! Pearson correlation matrix of the structured columns of a synthetic
//! cohort, drawn in memory (no images rendered).

use bodycomp::dataset::{synth, GeneratorConfig};
use bodycomp::metrics;

fn main() -> bodycomp::Result<()> {
    let cfg = GeneratorConfig {
        n_subjects: 3000,
        ..Default::default()
    };
    let records: Vec<_> = synth::draw_population(&cfg)?.into_iter().map(|s| s.record).collect();
    let m = metrics::correlation_matrix(&records)?;
    print!("{}", m.to_csv());
    println!();
    for (a, b) in [("weight", "smm"), ("height", "smm"), ("gender", "smm"), ("weight", "pbf"), ("smm", "pbf")] {
        println!("r({a}, {b}) = {:+.3}", m.get(a, b).unwrap_or(f64::NAN));
    }
    Ok(())
}
