//! Compare backpropagated gradients of a miniature network against central
//! finite differences, entry by entry.

use bodycomp::imageio::Image;
use bodycomp::nnet::{self, ArchitectureSpec, GradCheckConfig, LossWeights};
use bodycomp::preprocess::{PreprocessedSample, Targets};
use bodycomp::rng::{self, Rng};

fn sample(seed: u64) -> PreprocessedSample {
    let mut r = rng::from_seed(seed);
    let mut img = || Image::new(8, 8, 1, (0..64).map(|_| r.gen()).collect()).unwrap();
    let (full, quarters) = (img(), [img(), img(), img(), img()]);
    let mut r = rng::from_seed(seed + 1);
    PreprocessedSample {
        id: format!("s{seed}"),
        full_face: full,
        quarters,
        structured: (0..7).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect(),
        targets: Targets { pbf: 22.0, smm: 27.0 },
        height: 170.0,
        weight: 65.0,
        age: 35.0,
        chin: bodycomp::chinfit::ChinFit {
            degree: 2,
            coefficients: vec![0.0; 3],
            rmse: 0.0,
        },
    }
}

fn main() -> bodycomp::Result<()> {
    let mut model = nnet::init_model(&ArchitectureSpec::miniature(8), 1)?;
    let mut r = rng::from_seed(2);
    for t in model.parameters_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng::normal(&mut r, 0.0, 0.05));
    }
    let batch: Vec<_> = (0..4).map(|i| sample(10 * i)).collect();
    let report = nnet::check_gradients(&model, &batch, LossWeights::default(), GradCheckConfig::default())?;
    println!(
        "{} parameters checked, {} mismatches, max abs error {:.2e}",
        report.checked,
        report.mismatches.len(),
        report.max_abs_error
    );
    for m in report.mismatches.iter().take(10) {
        println!("  {}[{}]: analytic {:e}, numeric {:e}", m.parameter, m.index, m.analytic, m.numeric);
    }
    Ok(())
}
