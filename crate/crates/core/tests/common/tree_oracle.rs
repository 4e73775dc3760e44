//! Brute-force greedy tree builder: every (feature, threshold) pair is scored
//! by recomputing both children's squared error from scratch.

use bodycomp::baselines::tree::SPLIT_TOLERANCE;
use bodycomp::baselines::{DecisionTree, Node};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleTree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleTree>,
        right: Box<OracleTree>,
    },
}

fn mean(y: &[f64], s: &[usize]) -> f64 {
    let y0 = y[s[0]];
    y0 + s.iter().map(|&i| y[i] - y0).sum::<f64>() / s.len() as f64
}

fn sse(y: &[f64], s: &[usize]) -> f64 {
    let m = s.iter().map(|&i| y[i]).sum::<f64>() / s.len() as f64;
    s.iter().map(|&i| (y[i] - m).powi(2)).sum()
}

pub fn fit(rows: &[[f64; 4]], y: &[f64], max_depth: usize, min_leaf: usize) -> OracleTree {
    grow(rows, y, &(0..rows.len()).collect::<Vec<_>>(), 0, max_depth, min_leaf)
}

fn grow(rows: &[[f64; 4]], y: &[f64], s: &[usize], depth: usize, max_depth: usize, min_leaf: usize) -> OracleTree {
    let leaf = OracleTree::Leaf(mean(y, s));
    if depth >= max_depth || s.len() < 2 * min_leaf || s.iter().all(|&i| y[i] == y[s[0]]) {
        return leaf;
    }
    let parent = sse(y, s);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..4 {
        let mut vals: Vec<f64> = s.iter().map(|&i| rows[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = s.iter().partition(|&&i| rows[i][f] <= t);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let gain = parent - (sse(y, &l) + sse(y, &r));
            if gain > best.map_or(0.0, |b| b.0) + SPLIT_TOLERANCE * parent {
                best = Some((gain, f, t));
            }
        }
    }
    match best {
        None => leaf,
        Some((_, feature, threshold)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = s.iter().partition(|&&i| rows[i][feature] <= threshold);
            OracleTree::Split {
                feature,
                threshold,
                left: Box::new(grow(rows, y, &l, depth + 1, max_depth, min_leaf)),
                right: Box::new(grow(rows, y, &r, depth + 1, max_depth, min_leaf)),
            }
        }
    }
}

/// Structural equality with exact float comparison.
pub fn same(t: &DecisionTree, node: usize, o: &OracleTree) -> bool {
    match (t.node(node), o) {
        (Node::Leaf { value }, OracleTree::Leaf(v)) => value.to_bits() == v.to_bits(),
        (
            Node::Split {
                feature,
                threshold,
                left,
                right,
            },
            OracleTree::Split {
                feature: f,
                threshold: th,
                left: l,
                right: r,
            },
        ) => feature == f && threshold.to_bits() == th.to_bits() && same(t, *left, l) && same(t, *right, r),
        _ => false,
    }
}

/// Recursive evaluation of the nested form.
pub fn eval(o: &OracleTree, x: &[f64; 4]) -> f64 {
    match o {
        OracleTree::Leaf(v) => *v,
        OracleTree::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if x[*feature] <= *threshold {
                eval(left, x)
            } else {
                eval(right, x)
            }
        }
    }
}

/// Pre-order flattening into the arena form.
pub fn flatten(o: &OracleTree) -> DecisionTree {
    fn go(o: &OracleTree, out: &mut Vec<Node>) -> usize {
        let id = out.len();
        match o {
            OracleTree::Leaf(v) => out.push(Node::Leaf { value: *v }),
            OracleTree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push(Node::Leaf { value: 0.0 });
                let l = go(left, out);
                let r = go(right, out);
                out[id] = Node::Split {
                    feature: *feature,
                    threshold: *threshold,
                    left: l,
                    right: r,
                };
            }
        }
        id
    }
    let mut nodes = Vec::new();
    go(o, &mut nodes);
    DecisionTree::from_nodes(nodes).unwrap()
}
