use super::model::{LossWeights, NetworkModel};
use crate::error::Result;
use crate::preprocess::PreprocessedSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            rtol: 1e-4,
            atol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub mismatches: Vec<Mismatch>,
    pub max_abs_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.mismatches.is_empty()
    }

    pub fn matched_fraction(&self) -> f64 {
        (self.checked - self.mismatches.len()) as f64 / self.checked.max(1) as f64
    }
}

/// Compares every backpropagated gradient entry with a central difference of
/// the batch loss. Costs two forward passes over `batch` per parameter.
pub fn check_gradients(
    model: &NetworkModel,
    batch: &[PreprocessedSample],
    weights: LossWeights,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport> {
    let (_, grads) = model.backward(batch, weights)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        mismatches: Vec::new(),
        max_abs_error: 0.0,
    };
    for (pi, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let orig = probe.parameters()[pi].data()[k];
            probe.parameters_mut()[pi].data_mut()[k] = orig + cfg.step;
            let up = probe.batch_loss(batch, weights)?;
            probe.parameters_mut()[pi].data_mut()[k] = orig - cfg.step;
            let down = probe.batch_loss(batch, weights)?;
            probe.parameters_mut()[pi].data_mut()[k] = orig;

            let numeric = (up - down) / (2.0 * cfg.step);
            let analytic = g.data()[k];
            let err = (numeric - analytic).abs();
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(err);
            if err > cfg.atol && err > cfg.rtol * numeric.abs().max(analytic.abs()) {
                report.mismatches.push(Mismatch {
                    parameter: model.parameter_names()[pi].clone(),
                    index: k,
                    analytic,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}
