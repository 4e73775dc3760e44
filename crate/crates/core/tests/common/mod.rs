#![allow(dead_code)]

pub mod tree_oracle;

use bodycomp::chinfit::ChinFit;
use bodycomp::dataset::SubjectRecord;
use bodycomp::dataset::synth::{self, GeneratorConfig};
use bodycomp::imageio::Image;
use bodycomp::preprocess::{self, NormStats, PreprocessConfig, PreprocessedSample, Targets};
use bodycomp::rng::{self, Rng};

pub fn random_image(side: usize, r: &mut rng::Prng) -> Image {
    Image::new(side, side, 1, (0..side * side).map(|_| r.gen()).collect()).unwrap()
}

/// A sample with random pixels and structured features.
pub fn random_sample(side: usize, structured_len: usize, seed: u64) -> PreprocessedSample {
    let mut r = rng::from_seed(seed);
    PreprocessedSample {
        id: format!("r{seed}"),
        full_face: random_image(side, &mut r),
        quarters: [
            random_image(side, &mut r),
            random_image(side, &mut r),
            random_image(side, &mut r),
            random_image(side, &mut r),
        ],
        structured: (0..structured_len).map(|_| rng::normal(&mut r, 0.0, 1.0)).collect(),
        targets: Targets {
            pbf: r.gen_range(10.0..40.0),
            smm: r.gen_range(15.0..35.0),
        },
        height: 165.0,
        weight: 60.0,
        age: 40.0,
        chin: ChinFit {
            degree: 2,
            coefficients: vec![0.0; 3],
            rmse: 0.0,
        },
    }
}

/// Rendered synthetic subjects turned into network samples, with
/// normalisation statistics fitted on all of them.
pub fn synthetic_samples(
    n: usize,
    image_side: usize,
    net_side: usize,
    seed: u64,
) -> (Vec<PreprocessedSample>, NormStats) {
    let gen = GeneratorConfig {
        n_subjects: n,
        seed,
        image_side,
        ..Default::default()
    };
    let pop = synth::render_population(&gen).unwrap();
    let records: Vec<_> = pop.iter().map(|p| p.subject.record.clone()).collect();
    let stats = NormStats::from_records(&records).unwrap();
    let cfg = PreprocessConfig {
        image_side: net_side,
        ..Default::default()
    };
    let samples = pop
        .iter()
        .map(|p| {
            preprocess::build_sample_from_parts(&p.subject.record, &p.image, &p.chin_points, &stats, &cfg)
                .unwrap()
        })
        .collect();
    (samples, stats)
}

/// Tabular subjects only, no images.
pub fn synthetic_records(n: usize, seed: u64) -> Vec<SubjectRecord> {
    let gen = GeneratorConfig {
        n_subjects: n,
        seed,
        ..Default::default()
    };
    synth::draw_population(&gen).unwrap().into_iter().map(|s| s.record).collect()
}

/// Rows of independent standard normals.
pub fn random_rows(n: usize, r: &mut rng::Prng) -> Vec<[f64; 4]> {
    (0..n)
        .map(|_| std::array::from_fn(|_| rng::normal(r, 0.0, 1.0)))
        .collect()
}

/// Least squares via (XᵀX)⁻¹Xᵀv, solved by Gauss-Jordan with partial pivoting.
pub fn normal_equation_fit(points: &[(f64, f64)], degree: usize) -> Vec<f64> {
    let n = degree + 1;
    let mut m = vec![vec![0.0; n + 1]; n];
    for &(u, v) in points {
        let pows: Vec<f64> = (0..n).map(|k| u.powi(k as i32)).collect();
        for r in 0..n {
            for c in 0..n {
                m[r][c] += pows[r] * pows[c];
            }
            m[r][n] += pows[r] * v;
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    (0..n).map(|r| m[r][n] / m[r][r]).collect()
}
