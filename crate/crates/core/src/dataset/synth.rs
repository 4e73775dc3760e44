//! Synthetic population with face renders.
//!
//! Structured variables follow simple per-gender distributions and linear
//! target models whose population statistics match the reference cohort
//! (age, height, weight, SMM and PBF means/SDs and their Pearson matrix).
//! PBF additionally carries a latent adiposity residual `u` that is
//! independent of every structured feature and shows up only in the face:
//! the head gets wider and the jaw flatter as `bmi_z + u / latent_sd` grows.
//! A model that reads the face can therefore explain PBF variance that no
//! structured-only regressor can.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{format_chin_points, write_dataset, Gender, SubjectRecord};
use crate::error::{Error, Result};
use crate::imageio::{self, Image};
use crate::preprocess::BBox;
use crate::rng::{self, Prng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    pub male_fraction: f64,
    pub age: NormalParams,
    pub age_min: f64,
    pub age_max: f64,
    pub height_male: NormalParams,
    pub height_female: NormalParams,
    pub bmi_median_male: f64,
    pub bmi_median_female: f64,
    pub bmi_log_sd: f64,
    /// smm = w·weight + h·(height − 160) + m·is_male + a·(age − 40) + c + noise
    pub smm_weight: f64,
    pub smm_height: f64,
    pub smm_male: f64,
    pub smm_age: f64,
    pub smm_intercept: f64,
    /// Noise SD is `smm_noise_base + smm_noise_per_kg · weight`.
    pub smm_noise_base: f64,
    pub smm_noise_per_kg: f64,
    /// pbf = b·(bmi − 22) + f·is_female + a·(age − 40) + c + u + noise
    pub pbf_bmi: f64,
    pub pbf_female: f64,
    pub pbf_age: f64,
    pub pbf_intercept: f64,
    pub pbf_noise_sd: f64,
    pub latent_sd: f64,
    pub pbf_min: f64,
    pub pbf_max: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            male_fraction: 0.51,
            age: NormalParams {
                mean: 40.4,
                sd: 12.9,
            },
            age_min: 7.0,
            age_max: 84.0,
            height_male: NormalParams {
                mean: 171.5,
                sd: 8.5,
            },
            height_female: NormalParams {
                mean: 159.0,
                sd: 8.5,
            },
            bmi_median_male: 23.8,
            bmi_median_female: 21.3,
            bmi_log_sd: 0.18,
            smm_weight: 0.16,
            smm_height: 0.29,
            smm_male: 3.3,
            smm_age: 0.06,
            smm_intercept: 12.6,
            smm_noise_base: 0.8,
            smm_noise_per_kg: 0.02,
            pbf_bmi: 1.6,
            pbf_female: 11.2,
            pbf_age: 0.15,
            pbf_intercept: 18.0,
            pbf_noise_sd: 1.0,
            latent_sd: 3.0,
            pbf_min: 3.0,
            pbf_max: 55.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_subjects: usize,
    pub seed: u64,
    pub image_side: usize,
    pub adiposity_face_gain: f64,
    pub race: String,
    pub calibration: Calibration,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_subjects: 1500,
            seed: 1,
            image_side: 256,
            adiposity_face_gain: 1.0,
            race: "JP".into(),
            calibration: Calibration::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 1 {
            return Err(Error::invalid("n_subjects must be at least 1"));
        }
        if self.image_side < 64 {
            return Err(Error::invalid(format!(
                "image_side must be at least 64, got {}",
                self.image_side
            )));
        }
        let c = &self.calibration;
        if !(0.0..=1.0).contains(&c.male_fraction) || c.age_min > c.age_max || c.latent_sd <= 0.0 {
            return Err(Error::invalid("inconsistent calibration block"));
        }
        Ok(())
    }
}

/// Analytic face geometry of one rendered subject, in image pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub cx: f64,
    pub cy: f64,
    /// Half width and half height of the head ellipse.
    pub rx: f64,
    pub ry: f64,
    /// Jaw curve in face-local units: `y_l = jaw_offset − jaw_curvature · x_l²`
    /// where `x_l = (x − cx)/rx`, `y_l = (y − cy)/ry`.
    pub jaw_offset: f64,
    pub jaw_curvature: f64,
}

impl FaceGeometry {
    const CHIN_SPAN: f64 = 0.6;
    const CHIN_SAMPLES: usize = 15;

    pub fn from_adiposity(side: usize, adiposity: f64, jitter: (f64, f64)) -> Self {
        let s = side as f64;
        let ratio = (0.72 + 0.035 * adiposity).clamp(0.55, 0.90);
        let ry = 0.25 * s;
        FaceGeometry {
            cx: 0.5 * s + jitter.0 * s,
            cy: 0.47 * s + jitter.1 * s,
            rx: ratio * ry,
            ry,
            jaw_offset: 0.95,
            jaw_curvature: (0.8 - 0.15 * adiposity).clamp(0.45, 1.2),
        }
    }

    pub fn jaw_y(&self, x: f64) -> f64 {
        let xl = (x - self.cx) / self.rx;
        self.cy + (self.jaw_offset - self.jaw_curvature * xl * xl) * self.ry
    }

    pub fn is_face(&self, x: f64, y: f64) -> bool {
        let xl = (x - self.cx) / self.rx;
        let yl = (y - self.cy) / self.ry;
        xl * xl + yl * yl <= 1.0 && y <= self.jaw_y(x)
    }

    /// Detector-style integer box around the head ellipse.
    pub fn bbox(&self) -> BBox {
        let x0 = (self.cx - self.rx).round();
        let y0 = (self.cy - self.ry).round();
        let x1 = (self.cx + self.rx).round();
        let y1 = (self.cy + self.ry).round();
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Evenly spaced samples of the jaw curve across the central chin span.
    pub fn chin_points(&self) -> Vec<(f64, f64)> {
        (0..Self::CHIN_SAMPLES)
            .map(|i| {
                let xl = -Self::CHIN_SPAN
                    + 2.0 * Self::CHIN_SPAN * i as f64 / (Self::CHIN_SAMPLES - 1) as f64;
                let x = self.cx + xl * self.rx;
                (x, self.jaw_y(x))
            })
            .collect()
    }
}

/// Everything drawn for one subject, including generator-internal latents.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub record: SubjectRecord,
    pub bmi: f64,
    pub bmi_z: f64,
    pub latent: f64,
    pub face: FaceGeometry,
}

const SKIN: [f64; 3] = [206.0, 162.0, 132.0];

fn draw_subject(cfg: &GeneratorConfig, index: usize) -> SyntheticSubject {
    let c = &cfg.calibration;
    let mut r = rng::substream(cfg.seed, &[index as u64]);

    let gender = if r.gen::<f64>() < c.male_fraction {
        Gender::Male
    } else {
        Gender::Female
    };
    let is_male = gender.indicator();
    let age = loop {
        let a = rng::normal(&mut r, c.age.mean, c.age.sd);
        if (c.age_min..=c.age_max).contains(&a) {
            break a.round();
        }
    };
    let hp = match gender {
        Gender::Male => c.height_male,
        Gender::Female => c.height_female,
    };
    let height = rng::normal(&mut r, hp.mean, hp.sd).max(80.0);
    let median = match gender {
        Gender::Male => c.bmi_median_male,
        Gender::Female => c.bmi_median_female,
    };
    let bmi_z = rng::normal(&mut r, 0.0, 1.0);
    let bmi = (median.ln() + c.bmi_log_sd * bmi_z).exp();
    let weight = bmi * (height / 100.0).powi(2);

    let smm_noise = c.smm_noise_base + c.smm_noise_per_kg * weight;
    let smm = c.smm_weight * weight
        + c.smm_height * (height - 160.0)
        + c.smm_male * is_male
        + c.smm_age * (age - 40.0)
        + c.smm_intercept
        + rng::normal(&mut r, 0.0, smm_noise);
    let smm = smm.clamp(1.0, 0.6 * weight);

    let latent = rng::normal(&mut r, 0.0, c.latent_sd);
    let pbf = c.pbf_bmi * (bmi - 22.0)
        + c.pbf_female * (1.0 - is_male)
        + c.pbf_age * (age - 40.0)
        + c.pbf_intercept
        + latent
        + rng::normal(&mut r, 0.0, c.pbf_noise_sd);
    let pbf = pbf.clamp(c.pbf_min, c.pbf_max);

    let adiposity = (bmi_z + latent / c.latent_sd) * cfg.adiposity_face_gain;
    let jitter = (r.gen_range(-0.02..0.02), r.gen_range(-0.02..0.02));
    let face = FaceGeometry::from_adiposity(cfg.image_side, adiposity, jitter);

    let id = format!("s{index:05}");
    let record = SubjectRecord {
        image_path: PathBuf::from("images").join(format!("{id}.ppm")),
        chin_points_path: PathBuf::from("chin").join(format!("{id}.txt")),
        id,
        race: cfg.race.clone(),
        gender,
        age: age as u32,
        height,
        weight,
        smm,
        pbf,
        face_bbox: face.bbox(),
    };
    SyntheticSubject {
        record,
        bmi,
        bmi_z,
        latent,
        face,
    }
}

/// Draw the structured part of every subject without rendering anything.
pub fn draw_population(cfg: &GeneratorConfig) -> Result<Vec<SyntheticSubject>> {
    cfg.validate()?;
    Ok((0..cfg.n_subjects)
        .into_par_iter()
        .map(|i| draw_subject(cfg, i))
        .collect())
}

/// Render the face image of a drawn subject.
pub fn render_face(cfg: &GeneratorConfig, index: usize, face: &FaceGeometry) -> Image {
    // Separate stream from the structured draws so rendering never shifts them.
    let mut r: Prng = rng::substream(cfg.seed, &[index as u64, 1]);
    let side = cfg.image_side;
    let bg = r.gen_range(50.0..110.0);
    let tone = rng::normal(&mut r, 0.0, 8.0);
    let skin = SKIN.map(|v| v + tone);
    let shadow = skin.map(|v| v * 0.55);

    let eye_dx = 0.42 * face.rx;
    let eye_y = face.cy - 0.15 * face.ry;
    let (eye_rx, eye_ry) = (0.16 * face.rx, 0.06 * face.ry);
    let mouth_y = face.cy + 0.48 * face.ry;
    let (mouth_rx, mouth_ry) = (0.32 * face.rx, 0.05 * face.ry);
    let neck_half = 0.45 * face.rx;

    let mut px = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let in_ellipse = |cx: f64, cy: f64, rx: f64, ry: f64| {
                ((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2) <= 1.0
            };
            let (base, speckle) = if face.is_face(fx, fy) {
                let feature = in_ellipse(face.cx - eye_dx, eye_y, eye_rx, eye_ry)
                    || in_ellipse(face.cx + eye_dx, eye_y, eye_rx, eye_ry)
                    || in_ellipse(face.cx, mouth_y, mouth_rx, mouth_ry);
                if feature {
                    ([60.0, 40.0, 40.0], 3.0)
                } else {
                    (skin, 3.0)
                }
            } else if fy > face.cy && (fx - face.cx).abs() <= neck_half {
                (shadow, 3.0)
            } else {
                ([bg, bg, bg * 1.05], 8.0)
            };
            let n: f64 = r.gen_range(-speckle..=speckle);
            for v in base {
                px.push((v + n).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(side, side, 3, px).expect("buffer sized for side x side RGB")
}

/// A drawn subject with its rendered image and chin contour, kept in memory.
#[derive(Debug, Clone)]
pub struct RenderedSubject {
    pub subject: SyntheticSubject,
    pub image: Image,
    pub chin_points: Vec<(f64, f64)>,
}

/// Draw and render the population without touching the file system.
pub fn render_population(cfg: &GeneratorConfig) -> Result<Vec<RenderedSubject>> {
    let subjects = draw_population(cfg)?;
    Ok(subjects
        .into_par_iter()
        .enumerate()
        .map(|(i, s)| RenderedSubject {
            image: render_face(cfg, i, &s.face),
            chin_points: s.face.chin_points(),
            subject: s,
        })
        .collect())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Generate the population, writing `dataset.csv`, `images/*.ppm` and
/// `chin/*.txt` under `out_dir`.
pub fn generate_synthetic(cfg: &GeneratorConfig, out_dir: &Path) -> Result<Vec<SubjectRecord>> {
    let subjects = draw_population(cfg)?;
    create_dir(out_dir)?;
    create_dir(&out_dir.join("images"))?;
    create_dir(&out_dir.join("chin"))?;
    subjects
        .par_iter()
        .enumerate()
        .try_for_each(|(i, s)| -> Result<()> {
            let img = render_face(cfg, i, &s.face);
            imageio::write_image(&img, out_dir.join(&s.record.image_path))?;
            let chin = out_dir.join(&s.record.chin_points_path);
            fs::write(&chin, format_chin_points(&s.face.chin_points()))
                .map_err(|e| Error::io(&chin, e))
        })?;
    let records: Vec<SubjectRecord> = subjects.into_iter().map(|s| s.record).collect();
    write_dataset(&records, out_dir.join("dataset.csv"))?;
    Ok(records)
}
