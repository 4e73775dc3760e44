use super::N_FEATURES;
use crate::error::{Error, Result};
use crate::rng::{Prng, Rng};

/// Arena node; children always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::invalid("min_leaf must be at least 1"));
        }
        Ok(())
    }
}

impl DecisionTree {
    /// Validates that children follow their parent and all values are finite.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::format("tree", "no nodes"));
        }
        for (i, n) in nodes.iter().enumerate() {
            match *n {
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(Error::format("tree", format!("node {i} has a non-finite value")))
                }
                Node::Split { feature, threshold, left, right } => {
                    let ok = feature < N_FEATURES
                        && threshold.is_finite()
                        && left > i
                        && right > i
                        && left < nodes.len()
                        && right < nodes.len();
                    if !ok {
                        return Err(Error::format("tree", format!("node {i} is malformed")));
                    }
                }
                _ => {}
            }
        }
        Ok(DecisionTree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match *t.node(i) {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Mean of the targets, accumulated relative to the first one so that a
/// constant node reproduces its value exactly.
pub(crate) fn leaf_value(y: &[f64], idx: &[usize]) -> f64 {
    let y0 = y[idx[0]];
    y0 + idx.iter().map(|&i| y[i] - y0).sum::<f64>() / idx.len() as f64
}

/// Midpoint between two distinct sorted values, kept strictly below `b`.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let t = 0.5 * (a + b);
    if a <= t && t < b {
        t
    } else {
        a
    }
}

/// Random feature subsampling at each split.
pub(crate) struct Subsample<'a> {
    pub rng: &'a mut Prng,
    pub n_features: usize,
}

struct Builder<'a, 'r> {
    rows: &'a [[f64; N_FEATURES]],
    y: &'a [f64],
    params: TreeParams,
    subsample: Option<Subsample<'r>>,
    nodes: Vec<Node>,
}

/// Fits a tree on the (possibly repeated) rows listed in `idx`, which must be
/// in ascending order.
pub(crate) fn fit_on(
    rows: &[[f64; N_FEATURES]],
    y: &[f64],
    idx: Vec<usize>,
    params: TreeParams,
    subsample: Option<Subsample<'_>>,
) -> Result<DecisionTree> {
    params.validate()?;
    if idx.is_empty() {
        return Err(Error::invalid("cannot fit a tree on no rows"));
    }
    let mut b = Builder {
        rows,
        y,
        params,
        subsample,
        nodes: Vec::new(),
    };
    b.build(idx, 0);
    Ok(DecisionTree { nodes: b.nodes })
}

impl Builder<'_, '_> {
    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: leaf_value(self.y, &idx),
        });
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.rows[i][feature] <= threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn features(&mut self) -> Vec<usize> {
        match &mut self.subsample {
            None => (0..N_FEATURES).collect(),
            Some(s) => {
                let mut all: Vec<usize> = (0..N_FEATURES).collect();
                let k = s.n_features.clamp(1, N_FEATURES);
                for i in 0..k {
                    let j = s.rng.gen_range(i..N_FEATURES);
                    all.swap(i, j);
                }
                let mut chosen = all[..k].to_vec();
                chosen.sort_unstable();
                chosen
            }
        }
    }

    /// Greedy variance reduction; a later candidate must beat the current
    /// best by a relative margin, so near-ties go to the lowest feature and
    /// then the lowest threshold.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let y0 = self.y[idx[0]];
        if idx.iter().all(|&i| self.y[i] == y0) {
            return None;
        }
        let n = idx.len();
        let (sum, sq) = idx.iter().fold((0.0, 0.0), |(s, q), &i| {
            let d = self.y[i] - y0;
            (s + d, q + d * d)
        });
        let parent = sq - sum * sum / n as f64;
        let tol = SPLIT_TOLERANCE * parent;
        let mut best: Option<(f64, usize, f64)> = None;
        let min_leaf = self.params.min_leaf;
        for f in self.features() {
            let mut order = idx.to_vec();
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let (mut sl, mut ql) = (0.0, 0.0);
            for k in 0..n - 1 {
                let d = self.y[order[k]] - y0;
                sl += d;
                ql += d * d;
                let (nl, nr) = (k + 1, n - k - 1);
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let (a, b) = (self.rows[order[k]][f], self.rows[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let (sr, qr) = (sum - sl, sq - ql);
                let sse = (ql - sl * sl / nl as f64) + (qr - sr * sr / nr as f64);
                let gain = parent - sse;
                let bar = best.map_or(0.0, |b| b.0);
                if gain > bar + tol {
                    best = Some((gain, f, midpoint(a, b)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Relative gain margin used to break near-ties deterministically.
pub const SPLIT_TOLERANCE: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(rows: &[[f64; 4]], y: &[f64], depth: usize, min_leaf: usize) -> DecisionTree {
        let p = TreeParams {
            max_depth: depth,
            min_leaf,
        };
        fit_on(rows, y, (0..rows.len()).collect(), p, None).unwrap()
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let rows: Vec<[f64; 4]> = (0..10).map(|i| [i as f64, 0.0, 1.0, -(i as f64)]).collect();
        let t = fit(&rows, &[0.1; 10], 5, 1);
        assert_eq!(t.nodes(), &[Node::Leaf { value: 0.1 }]);
    }

    #[test]
    fn step_function_recovered_at_depth_one() {
        let rows: Vec<[f64; 4]> = (0..12).map(|i| [0.0, 0.0, i as f64, 0.0]).collect();
        let y: Vec<f64> = (0..12).map(|i| if i < 5 { 2.0 } else { 7.0 }).collect();
        let t = fit(&rows, &y, 1, 1);
        assert_eq!(
            t.root(),
            &Node::Split {
                feature: 2,
                threshold: 4.5,
                left: 1,
                right: 2
            }
        );
        for (r, v) in rows.iter().zip(&y) {
            assert_eq!(t.predict(r), *v);
        }
    }

    #[test]
    fn ties_go_to_lowest_feature() {
        let rows: Vec<[f64; 4]> = (0..6).map(|i| [0.0, i as f64, i as f64, 0.0]).collect();
        let y = [1.0, 1.0, 1.0, 5.0, 5.0, 5.0];
        let t = fit(&rows, &y, 1, 1);
        assert!(matches!(t.root(), Node::Split { feature: 1, .. }));
    }

    #[test]
    fn min_leaf_and_depth_respected() {
        let rows: Vec<[f64; 4]> = (0..40).map(|i| [i as f64, (i * 7 % 11) as f64, 0.0, 0.0]).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 13) % 17) as f64).collect();
        let t = fit(&rows, &y, 3, 4);
        assert!(t.depth() <= 3);
        let mut counts = vec![0usize; t.nodes().len()];
        for r in &rows {
            let mut i = 0;
            while let Node::Split { feature, threshold, left, right } = *t.node(i) {
                i = if r[feature] <= threshold { left } else { right };
            }
            counts[i] += 1;
        }
        for (i, n) in t.nodes().iter().enumerate() {
            if let Node::Leaf { .. } = n {
                assert!(counts[i] >= 4);
            }
        }
    }

    #[test]
    fn midpoint_stays_between() {
        assert_eq!(midpoint(1.0, 2.0), 1.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(a <= t && t < b);
    }
}
