//! Evaluation statistics: Pearson correlation and the cohort correlation
//! matrix, error MAE/SD, and CSV exports for error densities and
//! predicted-vs-actual scatters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::SubjectRecord;
use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "pearson needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson needs at least 2 observations"));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("pearson is undefined for a zero-variance input"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub const MATRIX_LABELS: [&str; 7] = ["race", "height", "gender", "age", "weight", "smm", "pbf"];

/// Pairwise Pearson matrix over the encoded cohort columns. Entries involving
/// a constant column are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Columns whose minority value covers less than 5% of rows.
    pub near_constant: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        self.values[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (label, row) in self.labels.iter().zip(&self.values) {
            s.push_str(label);
            for v in row {
                match v {
                    Some(v) => write!(s, ",{v:.6}").unwrap(),
                    None => s.push_str(",NA"),
                }
            }
            s.push('\n');
        }
        s
    }
}

fn majority_race(records: &[SubjectRecord]) -> String {
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    for r in records {
        *counts.entry(r.race.as_str()).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .map(|(k, _)| k.to_string())
        .unwrap_or_default()
}

/// Columns in [`MATRIX_LABELS`] order; race is 1 for the majority race,
/// gender is 1 for male.
pub fn encoded_columns(records: &[SubjectRecord]) -> Vec<Vec<f64>> {
    let major = majority_race(records);
    let col = |f: &dyn Fn(&SubjectRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    vec![
        col(&|r| if r.race == major { 1.0 } else { 0.0 }),
        col(&|r| r.height),
        col(&|r| r.gender.indicator()),
        col(&|r| r.age as f64),
        col(&|r| r.weight),
        col(&|r| r.smm),
        col(&|r| r.pbf),
    ]
}

pub fn correlation_matrix(records: &[SubjectRecord]) -> Result<CorrelationMatrix> {
    if records.len() < 2 {
        return Err(Error::invalid(format!(
            "correlation matrix needs at least 2 records, got {}",
            records.len()
        )));
    }
    let cols = encoded_columns(records);
    let k = cols.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        values[i][i] = Some(1.0);
        for j in 0..i {
            let r = pearson(&cols[i], &cols[j]).ok();
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    let near_constant = cols
        .iter()
        .map(|c| {
            let first = c[0];
            let differing = c.iter().filter(|&&v| v != first).count();
            let minority = differing.min(c.len() - differing);
            (minority as f64) < 0.05 * c.len() as f64
        })
        .collect();
    Ok(CorrelationMatrix {
        labels: MATRIX_LABELS.iter().map(|s| s.to_string()).collect(),
        values,
        near_constant,
    })
}

/// `actual − predicted`, element-wise.
pub fn errors(actual: &[f64], predicted: &[f64]) -> Vec<f64> {
    actual.iter().zip(predicted).map(|(a, p)| a - p).collect()
}

pub fn mae(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::invalid("MAE of an empty error vector"));
    }
    Ok(errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64)
}

/// Sample standard deviation (n − 1 denominator).
pub fn error_sd(errors: &[f64]) -> Result<f64> {
    if errors.len() < 2 {
        return Err(Error::invalid("error SD needs at least 2 values"));
    }
    let m = mean(errors);
    let ss: f64 = errors.iter().map(|e| (e - m).powi(2)).sum();
    Ok((ss / (errors.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub center: f64,
    pub count: usize,
    pub density: f64,
}

/// Equal-width histogram over `[min, max]` normalised to integrate to 1. A
/// degenerate range is widened to one unit around the value.
pub fn histogram(errors: &[f64], n_bins: usize) -> Result<Vec<DensityBin>> {
    if errors.is_empty() || n_bins == 0 {
        return Err(Error::invalid("histogram needs values and at least one bin"));
    }
    let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &e in errors {
        let b = (((e - lo) / width).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let n = errors.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| DensityBin {
            center: lo + (i as f64 + 0.5) * width,
            count: c,
            density: c as f64 / (n * width),
        })
        .collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn export_density(errors: &[f64], n_bins: usize, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("bin_center,count,density\n");
    for b in histogram(errors, n_bins)? {
        writeln!(s, "{},{},{}", b.center, b.count, b.density).unwrap();
    }
    write_text(path.as_ref(), &s)
}

/// Decade floor of an age, e.g. 37 → 30.
pub fn age_group(age: f64) -> u32 {
    ((age / 10.0).floor() * 10.0).max(0.0) as u32
}

pub fn export_scatter(
    actual: &[f64],
    predicted: &[f64],
    ages: &[f64],
    path: impl AsRef<Path>,
) -> Result<()> {
    if actual.len() != predicted.len() || actual.len() != ages.len() {
        return Err(Error::invalid("scatter export needs equal-length vectors"));
    }
    let mut s = String::from("actual,predicted,age_group\n");
    for ((a, p), age) in actual.iter().zip(predicted).zip(ages) {
        writeln!(s, "{a},{p},{}", age_group(*age)).unwrap();
    }
    write_text(path.as_ref(), &s)
}

/// Validation summary for both tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub pbf_mae: f64,
    pub pbf_sd: f64,
    pub pbf_pearson_pred_actual: f64,
    pub smm_mae: f64,
    pub smm_sd: f64,
    pub smm_pearson_pred_actual: f64,
    pub pearson_pred_pbf_vs_pred_smm: f64,
}

impl EvalReport {
    pub fn compute(
        pbf_actual: &[f64],
        pbf_pred: &[f64],
        smm_actual: &[f64],
        smm_pred: &[f64],
    ) -> Result<Self> {
        let pe = errors(pbf_actual, pbf_pred);
        let se = errors(smm_actual, smm_pred);
        Ok(EvalReport {
            n: pbf_actual.len(),
            pbf_mae: mae(&pe)?,
            pbf_sd: error_sd(&pe)?,
            pbf_pearson_pred_actual: pearson(pbf_pred, pbf_actual)?,
            smm_mae: mae(&se)?,
            smm_sd: error_sd(&se)?,
            smm_pearson_pred_actual: pearson(smm_pred, smm_actual)?,
            pearson_pred_pbf_vs_pred_smm: pearson(pbf_pred, smm_pred)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(x: &[f64]) -> Result<Self> {
        let m = mean(x);
        Ok(MeanSd {
            mean: m,
            sd: error_sd(x)?,
        })
    }
}

/// Cohort means and SDs of the demographic and target columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub n: usize,
    pub male_fraction: f64,
    pub age: MeanSd,
    pub height: MeanSd,
    pub weight: MeanSd,
    pub smm: MeanSd,
    pub pbf: MeanSd,
}

pub fn population_summary(records: &[SubjectRecord]) -> Result<PopulationSummary> {
    let col = |f: fn(&SubjectRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    Ok(PopulationSummary {
        n: records.len(),
        male_fraction: mean(&col(|r| r.gender.indicator())),
        age: MeanSd::of(&col(|r| r.age as f64))?,
        height: MeanSd::of(&col(|r| r.height))?,
        weight: MeanSd::of(&col(|r| r.weight))?,
        smm: MeanSd::of(&col(|r| r.smm))?,
        pbf: MeanSd::of(&col(|r| r.pbf))?,
    })
}
