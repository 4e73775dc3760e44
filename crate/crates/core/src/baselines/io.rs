use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Node};
use super::{BaselineKind, BaselineModel, LinearSvr, Regressor, N_FEATURES};
use crate::container;
use crate::error::{Error, Result};
use crate::nnet::Tensor;
use crate::preprocess::{FeatureStat, NormStats};

pub const BASELINE_KIND: &str = "baseline_model";

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: BaselineKind,
    norm_stats: NormStats,
    n_trees: usize,
}

/// One row per node: feature (−1 for a leaf), threshold, left, right, value.
fn tree_tensor(t: &DecisionTree) -> Tensor {
    let mut data = Vec::with_capacity(t.nodes().len() * 5);
    for n in t.nodes() {
        match *n {
            Node::Leaf { value } => data.extend([-1.0, 0.0, 0.0, 0.0, value]),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => data.extend([feature as f64, threshold, left as f64, right as f64, 0.0]),
        }
    }
    Tensor::from_vec(vec![t.nodes().len(), 5], data).expect("shape matches")
}

fn as_index(v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::format("tree", format!("bad node index {v}")))
    }
}

fn tensor_tree(t: &Tensor) -> Result<DecisionTree> {
    if t.shape().len() != 2 || t.shape()[1] != 5 {
        return Err(Error::format("tree", "tensor must be n×5"));
    }
    let nodes = t
        .data()
        .chunks(5)
        .map(|r| {
            Ok(if r[0] == -1.0 {
                Node::Leaf { value: r[4] }
            } else {
                Node::Split {
                    feature: as_index(r[0])?,
                    threshold: r[1],
                    left: as_index(r[2])?,
                    right: as_index(r[3])?,
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DecisionTree::from_nodes(nodes)
}

fn scalars(v: &[f64]) -> Tensor {
    Tensor::from_vec(vec![v.len()], v.to_vec()).expect("shape matches")
}

pub fn encode_baseline(model: &BaselineModel) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let trees: &[DecisionTree] = match &model.regressor {
        Regressor::Svr(m) => {
            tensors.push(("weights".to_string(), scalars(&m.weights)));
            tensors.push(("bias".to_string(), scalars(&[m.bias])));
            tensors.push(("target_stats".to_string(), scalars(&[m.target.mean, m.target.sd])));
            &[]
        }
        Regressor::RandomForest(trees) => trees,
        Regressor::GradientBoost {
            base,
            learning_rate,
            trees,
        } => {
            tensors.push(("base".to_string(), scalars(&[*base, *learning_rate])));
            trees
        }
    };
    for (i, t) in trees.iter().enumerate() {
        tensors.push((format!("tree{i}"), tree_tensor(t)));
    }
    let meta = serde_json::to_value(Meta {
        kind: model.kind(),
        norm_stats: model.norm_stats,
        n_trees: trees.len(),
    })?;
    container::encode(BASELINE_KIND, meta, &tensors)
}

pub fn decode_baseline(bytes: &[u8]) -> Result<BaselineModel> {
    let (meta, tensors) = container::decode(bytes, BASELINE_KIND)?;
    let meta: Meta = serde_json::from_value(meta)?;
    let get = |name: &str, len: Option<usize>| -> Result<&Tensor> {
        let t = tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::format(name.to_string(), "missing tensor"))?;
        if len.is_some_and(|l| t.len() != l) {
            return Err(Error::format(name.to_string(), "wrong length"));
        }
        Ok(t)
    };
    let trees = || -> Result<Vec<DecisionTree>> {
        (0..meta.n_trees).map(|i| tensor_tree(get(&format!("tree{i}"), None)?)).collect()
    };
    let regressor = match meta.kind {
        BaselineKind::Svr => {
            let w = get("weights", Some(N_FEATURES))?.data();
            let ts = get("target_stats", Some(2))?.data();
            Regressor::Svr(LinearSvr {
                weights: [w[0], w[1], w[2], w[3]],
                bias: get("bias", Some(1))?.data()[0],
                target: FeatureStat {
                    mean: ts[0],
                    sd: ts[1],
                },
            })
        }
        BaselineKind::RandomForest => {
            if meta.n_trees == 0 {
                return Err(Error::format("n_trees", "a forest needs at least one tree"));
            }
            Regressor::RandomForest(trees()?)
        }
        BaselineKind::GradientBoost => {
            let b = get("base", Some(2))?.data();
            Regressor::GradientBoost {
                base: b[0],
                learning_rate: b[1],
                trees: trees()?,
            }
        }
    };
    Ok(BaselineModel {
        norm_stats: meta.norm_stats,
        regressor,
    })
}

pub fn save_baseline(model: &BaselineModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_baseline(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_baseline(path: impl AsRef<Path>) -> Result<BaselineModel> {
    let path = path.as_ref();
    decode_baseline(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
