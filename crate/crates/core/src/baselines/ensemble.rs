use rayon::prelude::*;

use super::tree::{self, DecisionTree, Subsample, TreeParams};
use super::{FeatureMatrix, N_FEATURES};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
    pub bootstrap: bool,
    /// Consider only ⌊√d⌋ random features at each split.
    pub feature_subsample: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: 8,
            min_leaf: 5,
            seed: 31,
            bootstrap: true,
            feature_subsample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_rounds: 300,
            learning_rate: 0.05,
            max_depth: 3,
            min_leaf: 5,
        }
    }
}

pub(crate) fn fit_forest_trees(data: &FeatureMatrix, cfg: &ForestConfig) -> Result<Vec<DecisionTree>> {
    if cfg.n_trees == 0 {
        return Err(Error::invalid("a forest needs at least one tree"));
    }
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
    };
    params.validate()?;
    let n = data.len();
    let mtry = ((N_FEATURES as f64).sqrt().floor() as usize).max(1);
    (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::substream(cfg.seed, &[t as u64]);
            let idx = if cfg.bootstrap {
                let mut idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
                idx.sort_unstable();
                idx
            } else {
                (0..n).collect()
            };
            let sub = cfg.feature_subsample.then_some(Subsample {
                rng: &mut r,
                n_features: mtry,
            });
            tree::fit_on(data.rows(), data.target(), idx, params, sub)
        })
        .collect()
}

/// Mean tree prediction, accumulated relative to the first tree so that
/// agreeing trees give their common value exactly.
pub(crate) fn forest_predict(trees: &[DecisionTree], x: &[f64; N_FEATURES]) -> f64 {
    let p0 = trees[0].predict(x);
    p0 + trees[1..].iter().map(|t| t.predict(x) - p0).sum::<f64>() / trees.len() as f64
}

/// Stagewise boosting on squared error. Returns the base value and the
/// residual trees (unscaled; prediction adds `learning_rate` times each).
pub(crate) fn fit_boost_trees(data: &FeatureMatrix, cfg: &BoostConfig) -> Result<(f64, Vec<DecisionTree>)> {
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::invalid("learning_rate must be positive"));
    }
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
    };
    params.validate()?;
    let y = data.target();
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let mut fitted = vec![base; y.len()];
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    for _ in 0..cfg.n_rounds {
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
        let t = tree::fit_on(data.rows(), &resid, (0..y.len()).collect(), params, None)?;
        for (f, x) in fitted.iter_mut().zip(data.rows()) {
            *f += cfg.learning_rate * t.predict(x);
        }
        trees.push(t);
    }
    Ok((base, trees))
}

pub(crate) fn boost_predict(base: f64, learning_rate: f64, trees: &[DecisionTree], x: &[f64; N_FEATURES]) -> f64 {
    trees.iter().fold(base, |acc, t| acc + learning_rate * t.predict(x))
}
