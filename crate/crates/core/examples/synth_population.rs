//! Generate a small synthetic cohort on disk and print its summary.
//!
//!     cargo run --release --example synth_population -- /tmp/cohort 500

use std::path::PathBuf;

use bodycomp::dataset::{generate_synthetic, GeneratorConfig};
use bodycomp::metrics;

fn main() -> bodycomp::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("bodycomp-cohort"), PathBuf::from);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let cfg = GeneratorConfig {
        n_subjects: n,
        image_side: 128,
        ..Default::default()
    };
    let records = generate_synthetic(&cfg, &out)?;
    let s = metrics::population_summary(&records)?;
    println!("wrote {} subjects to {}", records.len(), out.display());
    println!("male fraction {:.3}", s.male_fraction);
    for (name, m) in [("age", s.age), ("height", s.height), ("weight", s.weight), ("smm", s.smm), ("pbf", s.pbf)] {
        println!("{name:>7}  mean {:7.2}  sd {:6.2}", m.mean, m.sd);
    }
    Ok(())
}
