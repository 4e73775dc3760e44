//! Structured-features-only regressors: linear SVR, random forest and
//! gradient boosting. Each task (PBF, SMM) gets its own independently fitted
//! model.

mod ensemble;
mod io;
mod svr;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SubjectRecord;
use crate::error::{Error, Result};
use crate::preprocess::NormStats;

pub use ensemble::{BoostConfig, ForestConfig};
pub use io::{decode_baseline, encode_baseline, load_baseline, save_baseline, BASELINE_KIND};
pub use svr::{LinearSvr, SvrConfig};
pub use tree::{DecisionTree, Node, TreeParams};

/// ⟨height_z, gender, age_z, weight_z⟩
pub const N_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Pbf,
    Smm,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Pbf, Task::Smm];

    pub fn name(self) -> &'static str {
        match self {
            Task::Pbf => "pbf",
            Task::Smm => "smm",
        }
    }

    pub fn value(self, rec: &SubjectRecord) -> f64 {
        match self {
            Task::Pbf => rec.pbf,
            Task::Smm => rec.smm,
        }
    }
}

/// Design matrix of normalised structured features plus one target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<[f64; N_FEATURES]>,
    target: Vec<f64>,
    norm: NormStats,
}

impl FeatureMatrix {
    /// Rows taken as already normalised.
    pub fn new(rows: Vec<[f64; N_FEATURES]>, target: Vec<f64>) -> Result<Self> {
        Self::with_norm(rows, target, NormStats::IDENTITY)
    }

    fn with_norm(rows: Vec<[f64; N_FEATURES]>, target: Vec<f64>, norm: NormStats) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("feature matrix has no rows"));
        }
        if rows.len() != target.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} targets",
                rows.len(),
                target.len()
            )));
        }
        if let Some(i) = rows.iter().position(|r| !r.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid(format!("feature row {i} is not finite")));
        }
        if let Some(i) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("target {i} is not finite")));
        }
        Ok(FeatureMatrix { rows, target, norm })
    }

    pub fn from_records(records: &[SubjectRecord], norm: &NormStats, task: Task) -> Result<Self> {
        let rows = records.iter().map(|r| normalize(norm, &r.basic_features())).collect();
        let target = records.iter().map(|r| task.value(r)).collect();
        Self::with_norm(rows, target, *norm)
    }

    pub fn rows(&self) -> &[[f64; N_FEATURES]] {
        &self.rows
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Raw ⟨height, gender, age, weight⟩ to the model's feature space.
pub fn normalize(norm: &NormStats, raw: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
    [norm.height.z(raw[0]), raw[1], norm.age.z(raw[2]), norm.weight.z(raw[3])]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Svr,
    RandomForest,
    GradientBoost,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Svr, BaselineKind::RandomForest, BaselineKind::GradientBoost];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Svr => "svr",
            BaselineKind::RandomForest => "random_forest",
            BaselineKind::GradientBoost => "gradient_boost",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let valid: Vec<_> = BaselineKind::ALL.iter().map(|k| k.name()).collect();
            Error::invalid(format!("unknown baseline kind '{s}' (valid: {})", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regressor {
    Svr(LinearSvr),
    RandomForest(Vec<DecisionTree>),
    GradientBoost {
        base: f64,
        learning_rate: f64,
        trees: Vec<DecisionTree>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub norm_stats: NormStats,
    pub regressor: Regressor,
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self.regressor {
            Regressor::Svr(_) => BaselineKind::Svr,
            Regressor::RandomForest(_) => BaselineKind::RandomForest,
            Regressor::GradientBoost { .. } => BaselineKind::GradientBoost,
        }
    }

    /// Prediction from already-normalised features.
    pub fn predict_normalized(&self, x: &[f64; N_FEATURES]) -> f64 {
        match &self.regressor {
            Regressor::Svr(m) => m.predict(x),
            Regressor::RandomForest(trees) => ensemble::forest_predict(trees, x),
            Regressor::GradientBoost {
                base,
                learning_rate,
                trees,
            } => ensemble::boost_predict(*base, *learning_rate, trees, x),
        }
    }

    /// Prediction from raw ⟨height, gender indicator, age, weight⟩.
    pub fn predict(&self, raw: &[f64; N_FEATURES]) -> f64 {
        self.predict_normalized(&normalize(&self.norm_stats, raw))
    }

    pub fn predict_records(&self, records: &[SubjectRecord]) -> Vec<f64> {
        records.par_iter().map(|r| self.predict(&r.basic_features())).collect()
    }
}

pub fn fit_tree(data: &FeatureMatrix, params: TreeParams) -> Result<DecisionTree> {
    if data.len() < 2 * params.min_leaf {
        return Err(Error::invalid(format!(
            "{} rows cannot be split with min_leaf {}",
            data.len(),
            params.min_leaf
        )));
    }
    tree::fit_on(data.rows(), data.target(), (0..data.len()).collect(), params, None)
}

pub fn fit_random_forest(data: &FeatureMatrix, cfg: &ForestConfig) -> Result<BaselineModel> {
    Ok(BaselineModel {
        norm_stats: data.norm,
        regressor: Regressor::RandomForest(ensemble::fit_forest_trees(data, cfg)?),
    })
}

pub fn fit_gradient_boost(data: &FeatureMatrix, cfg: &BoostConfig) -> Result<BaselineModel> {
    let (base, trees) = ensemble::fit_boost_trees(data, cfg)?;
    Ok(BaselineModel {
        norm_stats: data.norm,
        regressor: Regressor::GradientBoost {
            base,
            learning_rate: cfg.learning_rate,
            trees,
        },
    })
}

pub fn fit_svr(data: &FeatureMatrix, cfg: &SvrConfig) -> Result<BaselineModel> {
    Ok(BaselineModel {
        norm_stats: data.norm,
        regressor: Regressor::Svr(svr::fit(data, cfg)?),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesConfig {
    pub svr: SvrConfig,
    pub random_forest: ForestConfig,
    pub gradient_boost: BoostConfig,
}

pub fn fit_baseline(kind: BaselineKind, data: &FeatureMatrix, cfg: &BaselinesConfig) -> Result<BaselineModel> {
    match kind {
        BaselineKind::Svr => fit_svr(data, &cfg.svr),
        BaselineKind::RandomForest => fit_random_forest(data, &cfg.random_forest),
        BaselineKind::GradientBoost => fit_gradient_boost(data, &cfg.gradient_boost),
    }
}

/// Independent PBF and SMM models of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPair {
    pub pbf: BaselineModel,
    pub smm: BaselineModel,
}

pub fn fit_task_pair(
    kind: BaselineKind,
    records: &[SubjectRecord],
    norm: &NormStats,
    cfg: &BaselinesConfig,
) -> Result<TaskPair> {
    let fit = |task| fit_baseline(kind, &FeatureMatrix::from_records(records, norm, task)?, cfg);
    Ok(TaskPair {
        pbf: fit(Task::Pbf)?,
        smm: fit(Task::Smm)?,
    })
}
