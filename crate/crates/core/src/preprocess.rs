//! Face image pipeline: box expansion, crop, grayscale, bilinear resize,
//! quarter split, training-time augmentation and structured-feature
//! normalisation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chinfit::{self, ChinFit};
use crate::dataset::{self, Gender, SubjectRecord};
use crate::error::{Error, Result};
use crate::imageio::{self, Image};
use crate::rng::{self, Rng};

/// Axis-aligned box in pixel units; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x <= other.x
            && self.y <= other.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn clamp_to(&self, img_w: usize, img_h: usize) -> BBox {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(img_w as f64);
        let y1 = self.bottom().min(img_h as f64);
        BBox::new(x0, y0, (x1 - x0).max(0.0), (y1 - y0).max(0.0))
    }

    /// Integer pixel rectangle `(x, y, w, h)` obtained by rounding both corners.
    pub fn to_rect(&self) -> (i64, i64, i64, i64) {
        let x0 = self.x.round() as i64;
        let y0 = self.y.round() as i64;
        let x1 = self.right().round() as i64;
        let y1 = self.bottom().round() as i64;
        (x0, y0, x1 - x0, y1 - y0)
    }
}

/// Grow `b` by `margin` of its size: horizontally split evenly, vertically
/// one third above and two thirds below (towards the neck). The result is
/// clamped to the image.
pub fn expand_unclamped(b: &BBox, margin: f64) -> BBox {
    let dw = margin * b.w;
    let dh = margin * b.h;
    BBox::new(b.x - dw / 2.0, b.y - dh / 3.0, b.w + dw, b.h + dh)
}

pub fn expand_bbox(b: &BBox, margin: f64, img_w: usize, img_h: usize) -> BBox {
    expand_unclamped(b, margin).clamp_to(img_w, img_h)
}

/// BT.601 luma, rounded to nearest.
pub fn to_grayscale(img: &Image) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::invalid(format!(
            "grayscale conversion needs an RGB image, got {} channel(s)",
            img.channels()
        )));
    }
    let px = img
        .pixels()
        .chunks_exact(3)
        .map(|p| {
            let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Image::new(img.width(), img.height(), 1, px)
}

pub fn crop(img: &Image, b: &BBox) -> Result<Image> {
    let (x, y, w, h) = b.to_rect();
    if x < 0 || y < 0 || w < 1 || h < 1 || x + w > img.width() as i64 || y + h > img.height() as i64
    {
        return Err(Error::invalid(format!(
            "crop box ({x}, {y}, {w}, {h}) outside {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let (x, y, w, h) = (x as usize, y as usize, w as usize, h as usize);
    let c = img.channels();
    let stride = img.width() * c;
    let mut px = Vec::with_capacity(w * h * c);
    for row in y..y + h {
        let start = row * stride + x * c;
        px.extend_from_slice(&img.pixels()[start..start + w * c]);
    }
    Image::new(w, h, c, px)
}

/// Sample positions and weights for one axis of a half-pixel-centre resize.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resize with half-pixel centres and border clamping.
pub fn resize(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    if out_w == img.width() && out_h == img.height() {
        return Ok(img.clone());
    }
    let xs = axis_taps(img.width(), out_w);
    let ys = axis_taps(img.height(), out_h);
    let c = img.channels();
    let mut px = Vec::with_capacity(out_w * out_h * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p00 = img.get(x0, y0, ch) as f64;
                let p10 = img.get(x1, y0, ch) as f64;
                let p01 = img.get(x0, y1, ch) as f64;
                let p11 = img.get(x1, y1, ch) as f64;
                let top = p00 + (p10 - p00) * fx;
                let bottom = p01 + (p11 - p01) * fx;
                let v = top + (bottom - top) * fy;
                px.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(out_w, out_h, c, px)
}

/// Upper-left, upper-right, lower-left, lower-right quadrants, each resized
/// to `out_side`.
pub fn quarter_split(face: &Image, out_side: usize) -> Result<[Image; 4]> {
    let side = face.width();
    if face.height() != side {
        return Err(Error::invalid(format!(
            "face image must be square, got {}x{}",
            side,
            face.height()
        )));
    }
    if side % 2 != 0 {
        return Err(Error::invalid(format!("face side {side} is odd")));
    }
    let half = (side / 2) as f64;
    let q = |x: f64, y: f64| -> Result<Image> {
        resize(&crop(face, &BBox::new(x, y, half, half))?, out_side, out_side)
    };
    Ok([q(0.0, 0.0)?, q(half, 0.0)?, q(0.0, half)?, q(half, half)?])
}

/// Sample `img` at fractional coordinates with border replication.
fn sample_bilinear(img: &Image, x: f64, y: f64) -> f64 {
    let xs = x.clamp(0.0, (img.width() - 1) as f64);
    let ys = y.clamp(0.0, (img.height() - 1) as f64);
    let x0 = xs.floor() as usize;
    let y0 = ys.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let fx = xs - x0 as f64;
    let fy = ys - y0 as f64;
    let top = img.get(x0, y0, 0) as f64 * (1.0 - fx) + img.get(x1, y0, 0) as f64 * fx;
    let bottom = img.get(x0, y1, 0) as f64 * (1.0 - fx) + img.get(x1, y1, 0) as f64 * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Rotate a grayscale image by `degrees` (counter-clockwise on screen) about
/// its centre.
pub fn rotate(img: &Image, degrees: f64) -> Result<Image> {
    if img.channels() != 1 {
        return Err(Error::invalid("rotation expects a grayscale image"));
    }
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let cx = (img.width() - 1) as f64 / 2.0;
    let cy = (img.height() - 1) as f64 / 2.0;
    let mut px = Vec::with_capacity(img.width() * img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = c * dx - s * dy + cx;
            let sy = s * dx + c * dy + cy;
            px.push(sample_bilinear(img, sx, sy).round().clamp(0.0, 255.0) as u8);
        }
    }
    Image::new(img.width(), img.height(), 1, px)
}

/// Random rotation in `[-max_deg, max_deg]` followed by additive gaussian
/// pixel noise.
pub fn augment_image<R: Rng + ?Sized>(
    img: &Image,
    rng: &mut R,
    max_deg: f64,
    noise_sd: f64,
) -> Result<Image> {
    let angle = if max_deg > 0.0 {
        rng.gen_range(-max_deg..=max_deg)
    } else {
        0.0
    };
    let mut out = rotate(img, angle)?;
    if noise_sd > 0.0 {
        for p in out.pixels_mut() {
            let v = *p as f64 + rng::normal(rng, 0.0, noise_sd);
            *p = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

/// Multiplicative gaussian jitter of height and weight, floored at 1.
pub fn augment_structured<R: Rng + ?Sized>(
    height: f64,
    weight: f64,
    rng: &mut R,
    rel_sd: f64,
) -> (f64, f64) {
    if rel_sd <= 0.0 {
        return (height, weight);
    }
    let h = height * (1.0 + rng::normal(rng, 0.0, rel_sd));
    let w = weight * (1.0 + rng::normal(rng, 0.0, rel_sd));
    (h.max(1.0), w.max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub mean: f64,
    pub sd: f64,
}

impl FeatureStat {
    /// Leaves values unchanged.
    pub const IDENTITY: FeatureStat = FeatureStat { mean: 0.0, sd: 1.0 };

    pub fn of(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.len() < 2 {
            return Err(Error::invalid("normalisation needs at least 2 values"));
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::invalid("cannot normalise a constant feature"));
        }
        Ok(FeatureStat { mean, sd })
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }
}

/// Normalisation statistics of the structured inputs, fitted on the training
/// split only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub height: FeatureStat,
    pub age: FeatureStat,
    pub weight: FeatureStat,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        height: FeatureStat::IDENTITY,
        age: FeatureStat::IDENTITY,
        weight: FeatureStat::IDENTITY,
    };

    pub fn from_records(records: &[SubjectRecord]) -> Result<Self> {
        Ok(NormStats {
            height: FeatureStat::of(records.iter().map(|r| r.height))?,
            age: FeatureStat::of(records.iter().map(|r| r.age as f64))?,
            weight: FeatureStat::of(records.iter().map(|r| r.weight))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub margin: f64,
    pub image_side: usize,
    pub chin_degree: usize,
    pub max_rotation_deg: f64,
    pub pixel_noise_sd: f64,
    pub structured_rel_sd: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            margin: 0.30,
            image_side: 128,
            chin_degree: chinfit::DEFAULT_DEGREE,
            max_rotation_deg: 8.0,
            pixel_noise_sd: 5.0,
            structured_rel_sd: 0.01,
        }
    }
}

impl PreprocessConfig {
    pub fn structured_len(&self) -> usize {
        4 + self.chin_degree + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub pbf: f64,
    pub smm: f64,
}

/// The six network inputs for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedSample {
    pub id: String,
    pub full_face: Image,
    /// UL, UR, LL, LR.
    pub quarters: [Image; 4],
    /// `[height_z, gender, age_z, weight_z, c0, c1, ..]`.
    pub structured: Vec<f64>,
    pub targets: Targets,
    pub height: f64,
    pub weight: f64,
    pub age: f64,
    pub chin: ChinFit,
}

pub fn structured_vector(
    height: f64,
    gender: Gender,
    age: f64,
    weight: f64,
    chin: &ChinFit,
    stats: &NormStats,
) -> Vec<f64> {
    let mut v = vec![
        stats.height.z(height),
        gender.indicator(),
        stats.age.z(age),
        stats.weight.z(weight),
    ];
    v.extend_from_slice(&chin.coefficients);
    v
}

impl PreprocessedSample {
    pub fn images(&self) -> [&Image; 5] {
        [
            &self.full_face,
            &self.quarters[0],
            &self.quarters[1],
            &self.quarters[2],
            &self.quarters[3],
        ]
    }

    /// Training-time copy with rotated/noisy images and jittered height and
    /// weight (re-normalised with `stats`).
    pub fn augmented<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        cfg: &PreprocessConfig,
        stats: &NormStats,
    ) -> Result<PreprocessedSample> {
        let mut out = self.clone();
        out.full_face = augment_image(
            &self.full_face,
            rng,
            cfg.max_rotation_deg,
            cfg.pixel_noise_sd,
        )?;
        for (dst, src) in out.quarters.iter_mut().zip(&self.quarters) {
            *dst = augment_image(src, rng, cfg.max_rotation_deg, cfg.pixel_noise_sd)?;
        }
        let (h, w) = augment_structured(self.height, self.weight, rng, cfg.structured_rel_sd);
        out.height = h;
        out.weight = w;
        out.structured[0] = stats.height.z(h);
        out.structured[3] = stats.weight.z(w);
        Ok(out)
    }
}

/// Run the full deterministic pipeline for one record. Relative paths in the
/// record resolve against `base_dir`.
pub fn build_sample(
    rec: &SubjectRecord,
    stats: &NormStats,
    cfg: &PreprocessConfig,
    base_dir: &Path,
) -> Result<PreprocessedSample> {
    let img = imageio::read_image(base_dir.join(&rec.image_path))?;
    let points = dataset::load_chin_points(base_dir.join(&rec.chin_points_path))?;
    build_sample_from_parts(rec, &img, &points, stats, cfg)
}

pub fn build_sample_from_parts(
    rec: &SubjectRecord,
    img: &Image,
    chin_points: &[(f64, f64)],
    stats: &NormStats,
    cfg: &PreprocessConfig,
) -> Result<PreprocessedSample> {
    let side = cfg.image_side;
    let face_box = expand_bbox(&rec.face_bbox, cfg.margin, img.width(), img.height());
    let face = crop(img, &face_box)?;
    let face = if face.channels() == 3 {
        to_grayscale(&face)?
    } else {
        face
    };
    let face = resize(&face, side, side)?;
    let quarters = quarter_split(&face, side)?;
    let chin = chinfit::fit_polynomial(
        &chinfit::normalize_points(chin_points, &rec.face_bbox)?,
        cfg.chin_degree,
    )?;
    let age = rec.age as f64;
    Ok(PreprocessedSample {
        id: rec.id.clone(),
        structured: structured_vector(rec.height, rec.gender, age, rec.weight, &chin, stats),
        full_face: face,
        quarters,
        targets: Targets {
            pbf: rec.pbf,
            smm: rec.smm,
        },
        height: rec.height,
        weight: rec.weight,
        age,
        chin,
    })
}
