//! Least-squares polynomial fit of the chin contour.
//!
//! Contour points are first mapped into the face box (`u` in [-1, 1] across,
//! `v` in [0, 1] downwards) so the fitted coefficients do not depend on the
//! image resolution. The fit itself is a Householder QR solve of the
//! Vandermonde system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::BBox;

pub const DEFAULT_DEGREE: usize = 2;
pub const MAX_DEGREE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChinFit {
    pub degree: usize,
    /// `c[k]` multiplies `u^k`.
    pub coefficients: Vec<f64>,
    pub rmse: f64,
}

impl ChinFit {
    pub fn eval(&self, u: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }
}

fn check_box(bbox: &BBox) -> Result<()> {
    if bbox.w < 1.0 || bbox.h < 1.0 || !bbox.w.is_finite() || !bbox.h.is_finite() {
        return Err(Error::invalid(format!(
            "degenerate face box {}x{}",
            bbox.w, bbox.h
        )));
    }
    Ok(())
}

pub fn normalize_points(points: &[(f64, f64)], bbox: &BBox) -> Result<Vec<(f64, f64)>> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 chin points, got {}",
            points.len()
        )));
    }
    check_box(bbox)?;
    Ok(points
        .iter()
        .map(|&(x, y)| (2.0 * (x - bbox.x) / bbox.w - 1.0, (y - bbox.y) / bbox.h))
        .collect())
}

pub fn denormalize_points(points: &[(f64, f64)], bbox: &BBox) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|&(u, v)| ((u + 1.0) * 0.5 * bbox.w + bbox.x, v * bbox.h + bbox.y))
        .collect()
}

/// Minimise `sum_i (v_i - sum_k c_k u_i^k)^2`.
pub fn fit_polynomial(points: &[(f64, f64)], degree: usize) -> Result<ChinFit> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::invalid(format!(
            "polynomial degree must be in 1..={MAX_DEGREE}, got {degree}"
        )));
    }
    let cols = degree + 1;
    let rows = points.len();
    if rows < cols {
        return Err(Error::invalid(format!(
            "degree {degree} fit needs at least {cols} points, got {rows}"
        )));
    }

    // Column-major Vandermonde matrix and right-hand side.
    let mut a = vec![0.0; rows * cols];
    let mut b: Vec<f64> = points.iter().map(|p| p.1).collect();
    for (i, &(u, _)) in points.iter().enumerate() {
        let mut p = 1.0;
        for k in 0..cols {
            a[k * rows + i] = p;
            p *= u;
        }
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    for k in 0..cols {
        let col = &mut a[k * rows..(k + 1) * rows];
        let norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * scale * (rows as f64).sqrt() {
            return Err(Error::invalid(
                "rank-deficient design matrix (chin points do not span enough distinct u values)",
            ));
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        // Householder vector stored in col[k..], v = x - alpha e1.
        col[k] -= alpha;
        let vnorm2: f64 = col[k..].iter().map(|v| v * v).sum();
        let v: Vec<f64> = col[k..].to_vec();
        col[k] = alpha;
        for x in &mut col[k + 1..] {
            *x = 0.0;
        }
        let reflect = |target: &mut [f64]| {
            let dot: f64 = v.iter().zip(&target[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vi) in target[k..].iter_mut().zip(&v) {
                *t -= f * vi;
            }
        };
        for j in k + 1..cols {
            reflect(&mut a[j * rows..(j + 1) * rows]);
        }
        reflect(&mut b);
    }

    let mut c = vec![0.0; cols];
    for k in (0..cols).rev() {
        let mut s = b[k];
        for j in k + 1..cols {
            s -= a[j * rows + k] * c[j];
        }
        c[k] = s / a[k * rows + k];
    }

    let mut fit = ChinFit {
        degree,
        coefficients: c,
        rmse: 0.0,
    };
    let sse: f64 = points
        .iter()
        .map(|&(u, v)| (v - fit.eval(u)).powi(2))
        .sum();
    fit.rmse = (sse / rows as f64).sqrt();
    Ok(fit)
}
