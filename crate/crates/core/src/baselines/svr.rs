use super::{FeatureMatrix, N_FEATURES};
use crate::error::{Error, Result};
use crate::preprocess::FeatureStat;
use crate::rng;

/// Linear epsilon-insensitive regression on standardized targets.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            c: 1.0,
            epsilon: 0.1,
            epochs: 100,
            learning_rate: 0.01,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSvr {
    pub weights: [f64; N_FEATURES],
    pub bias: f64,
    pub target: FeatureStat,
}

impl LinearSvr {
    /// Prediction in standardized target units.
    pub fn decision(&self, x: &[f64; N_FEATURES]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        self.target.mean + self.target.sd * self.decision(x)
    }
}

/// Minimises ½‖w‖² + c·Σ max(0, |w·x + b − y| − ε) by shuffled stochastic
/// subgradient steps of size `learning_rate / √(epoch + 1)` on the objective
/// scaled by 1/(c·n).
pub(crate) fn fit(data: &FeatureMatrix, cfg: &SvrConfig) -> Result<LinearSvr> {
    if !(cfg.c > 0.0 && cfg.epsilon >= 0.0 && cfg.learning_rate > 0.0) {
        return Err(Error::invalid("svr needs c > 0, epsilon >= 0 and learning_rate > 0"));
    }
    let target = FeatureStat::of(data.target().iter().copied()).unwrap_or(FeatureStat {
        mean: data.target()[0],
        sd: 1.0,
    });
    let y: Vec<f64> = data.target().iter().map(|&v| target.z(v)).collect();
    let n = y.len();
    let reg = 1.0 / (cfg.c * n as f64);
    let mut m = LinearSvr {
        weights: [0.0; N_FEATURES],
        bias: 0.0,
        target,
    };
    let mut r = rng::from_seed(cfg.seed);
    for epoch in 0..cfg.epochs {
        let eta = cfg.learning_rate / ((epoch + 1) as f64).sqrt();
        for i in rng::permutation(&mut r, n) {
            let x = &data.rows()[i];
            let resid = m.decision(x) - y[i];
            let g = if resid > cfg.epsilon {
                1.0
            } else if resid < -cfg.epsilon {
                -1.0
            } else {
                0.0
            };
            for (w, v) in m.weights.iter_mut().zip(x) {
                *w -= eta * (reg * *w + g * v);
            }
            m.bias -= eta * g;
        }
        if !(m.bias.is_finite() && m.weights.iter().all(|w| w.is_finite())) {
            return Err(Error::Diverged { epoch, batch: 0 });
        }
    }
    Ok(m)
}
