//! Subject records, the dataset CSV, train/validation splitting and chin
//! contour files. The calibrated synthetic population lives in [`synth`].

pub mod synth;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::BBox;
use crate::rng;

pub use synth::{generate_synthetic, Calibration, GeneratorConfig};

pub const CSV_HEADER: [&str; 14] = [
    "id",
    "race",
    "gender",
    "age",
    "height_cm",
    "weight_kg",
    "smm_kg",
    "pbf_pct",
    "image_path",
    "bbox_x",
    "bbox_y",
    "bbox_w",
    "bbox_h",
    "chin_points_path",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    /// Numeric encoding used everywhere a model or statistic needs a number:
    /// male = 1, female = 0.
    pub fn indicator(self) -> f64 {
        match self {
            Gender::Male => 1.0,
            Gender::Female => 0.0,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Gender::Male => "M",
            Gender::Female => "F",
        }
    }

    pub fn parse(s: &str) -> Option<Gender> {
        match s {
            "M" => Some(Gender::Male),
            "F" => Some(Gender::Female),
            _ => None,
        }
    }
}

/// One subject's structured data, targets and file references.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub race: String,
    pub gender: Gender,
    pub age: u32,
    /// cm
    pub height: f64,
    /// kg
    pub weight: f64,
    /// Skeletal muscle mass, kg.
    pub smm: f64,
    /// Body fat, percent.
    pub pbf: f64,
    pub image_path: PathBuf,
    pub face_bbox: BBox,
    pub chin_points_path: PathBuf,
}

impl SubjectRecord {
    /// Check the per-record invariants; the message names the offending column.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive = |col: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err((col, format!("must be positive, got {v}")))
            }
        };
        if self.id.is_empty() {
            return Err(("id", "empty id".into()));
        }
        positive("height_cm", self.height)?;
        positive("weight_kg", self.weight)?;
        positive("smm_kg", self.smm)?;
        if !(self.pbf > 0.0 && self.pbf < 100.0) {
            return Err(("pbf_pct", format!("must lie in (0, 100), got {}", self.pbf)));
        }
        if self.smm >= self.weight {
            return Err((
                "smm_kg",
                format!(
                    "skeletal muscle mass {} is not below body weight {}",
                    self.smm, self.weight
                ),
            ));
        }
        let b = &self.face_bbox;
        if !(b.x >= 0.0 && b.y >= 0.0) {
            return Err(("bbox_x", "face box corner must be non-negative".into()));
        }
        if !(b.w >= 1.0 && b.h >= 1.0) {
            return Err(("bbox_w", "face box must be at least 1x1".into()));
        }
        Ok(())
    }

    /// `[height, gender, age, weight]`, the structured-only feature set.
    pub fn basic_features(&self) -> [f64; 4] {
        [self.height, self.gender.indicator(), self.age as f64, self.weight]
    }
}

pub fn load_dataset(csv_path: impl AsRef<Path>) -> Result<Vec<SubjectRecord>> {
    let path = csv_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Vec<SubjectRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::format("header", e.to_string()))?
        .clone();
    let columns: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    for name in CSV_HEADER {
        if !columns.contains_key(name) {
            return Err(Error::Csv {
                row: 0,
                column: name.into(),
                message: "missing column".into(),
            });
        }
    }

    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Csv {
            row: row_no,
            column: "*".into(),
            message: e.to_string(),
        })?;
        let field = |name: &str| -> &str { row.get(columns[name]).unwrap_or("") };
        let csv_err = |name: &str, message: String| Error::Csv {
            row: row_no,
            column: name.into(),
            message,
        };
        let num = |name: &str| -> Result<f64> {
            let s = field(name);
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| csv_err(name, format!("cannot parse {s:?} as a number")))
        };
        let gender = Gender::parse(field("gender"))
            .ok_or_else(|| csv_err("gender", format!("expected M or F, got {:?}", field("gender"))))?;
        let age = field("age")
            .trim()
            .parse::<u32>()
            .map_err(|_| csv_err("age", format!("expected a whole number, got {:?}", field("age"))))?;
        let rec = SubjectRecord {
            id: field("id").to_string(),
            race: field("race").to_string(),
            gender,
            age,
            height: num("height_cm")?,
            weight: num("weight_kg")?,
            smm: num("smm_kg")?,
            pbf: num("pbf_pct")?,
            image_path: PathBuf::from(field("image_path")),
            face_bbox: BBox::new(num("bbox_x")?, num("bbox_y")?, num("bbox_w")?, num("bbox_h")?),
            chin_points_path: PathBuf::from(field("chin_points_path")),
        };
        rec.validate().map_err(|(col, msg)| csv_err(col, msg))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn format_dataset(records: &[SubjectRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let err = |e: csv::Error| Error::format("csv", e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.race.clone(),
            r.gender.code().to_string(),
            r.age.to_string(),
            r.height.to_string(),
            r.weight.to_string(),
            r.smm.to_string(),
            r.pbf.to_string(),
            r.image_path.to_string_lossy().into_owned(),
            r.face_bbox.x.to_string(),
            r.face_bbox.y.to_string(),
            r.face_bbox.w.to_string(),
            r.face_bbox.h.to_string(),
            r.chin_points_path.to_string_lossy().into_owned(),
        ])
        .map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::format("csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_dataset(records: &[SubjectRecord], csv_path: impl AsRef<Path>) -> Result<()> {
    let path = csv_path.as_ref();
    fs::write(path, format_dataset(records)?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            seed: 2022,
        }
    }
}

/// Indices of the training and validation parts; each part keeps input order.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 records to split, got {n}")));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let perm = rng::permutation(&mut rng::from_seed(spec.seed), n);
    let mut train = perm[..n_train].to_vec();
    let mut val = perm[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn split_dataset<T: Clone>(records: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    let (train, val) = split_indices(records.len(), spec)?;
    Ok((
        train.iter().map(|&i| records[i].clone()).collect(),
        val.iter().map(|&i| records[i].clone()).collect(),
    ))
}

pub fn parse_chin_points(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y)), None) if x.is_finite() && y.is_finite() => pts.push((x, y)),
            _ => {
                return Err(Error::format(
                    format!("chin points line {}", i + 1),
                    format!("expected \"x y\", got {line:?}"),
                ))
            }
        }
    }
    if pts.len() < 3 {
        return Err(Error::format(
            "chin points",
            format!("need at least 3 points, got {}", pts.len()),
        ));
    }
    Ok(pts)
}

pub fn load_chin_points(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_chin_points(&text)
}

pub fn format_chin_points(points: &[(f64, f64)]) -> String {
    points.iter().map(|(x, y)| format!("{x} {y}\n")).collect()
}
