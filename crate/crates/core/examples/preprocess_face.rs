//! Run the preprocessing pipeline on one rendered subject: expand the face
//! box, crop, convert to grayscale, resize, split into quarters and fit the
//! chin curve. The five network images are written as PGM files.

use std::path::PathBuf;

use bodycomp::dataset::{synth, GeneratorConfig};
use bodycomp::imageio;
use bodycomp::nnet::IMAGE_BRANCHES;
use bodycomp::preprocess::{self, NormStats, PreprocessConfig};

fn main() -> bodycomp::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("bodycomp-face"), PathBuf::from);
    std::fs::create_dir_all(&out).map_err(|e| bodycomp::Error::Io {
        path: out.clone(),
        source: e,
    })?;

    let gen = GeneratorConfig {
        n_subjects: 50,
        ..Default::default()
    };
    let pop = synth::render_population(&gen)?;
    let records: Vec<_> = pop.iter().map(|p| p.subject.record.clone()).collect();
    let stats = NormStats::from_records(&records)?;
    let subject = &pop[0];
    let cfg = PreprocessConfig::default();
    let sample =
        preprocess::build_sample_from_parts(&subject.subject.record, &subject.image, &subject.chin_points, &stats, &cfg)?;

    imageio::write_image(&subject.image, out.join("original.ppm"))?;
    for (name, img) in IMAGE_BRANCHES.iter().zip(sample.images()) {
        imageio::write_image(img, out.join(format!("{name}.pgm")))?;
    }
    let b = &subject.subject.record.face_bbox;
    println!("face box      {} {} {}x{}", b.x, b.y, b.w, b.h);
    println!("structured    {:.4?}", sample.structured);
    println!("chin rmse     {:.2e}", sample.chin.rmse);
    println!("images in     {}", out.display());
    Ok(())
}
