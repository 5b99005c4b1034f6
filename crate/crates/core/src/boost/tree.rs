//! Best-first least-squares CART with exact split search.

use super::BoostError;
use crate::features::FeatureMatrix;

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
    },
}

impl Node {
    pub fn n_samples(&self) -> usize {
        match self {
            Node::Leaf { n_samples, .. } | Node::Split { n_samples, .. } => *n_samples,
        }
    }
}

/// Nodes are stored in creation order; the root is node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64, n_samples: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, n_samples }],
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Evaluates the tree with `feature(j)` returning the value of column j.
    pub fn eval(&self, feature: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature: f,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if feature(*f) <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.eval(|j| x.get(i, j))).collect()
    }
}

/// Row indices of every column sorted by value (ties by row index).
pub(crate) fn presort(x: &FeatureMatrix) -> Vec<Vec<u32>> {
    (0..x.n_cols())
        .map(|j| {
            let col = x.column(j);
            let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct OpenLeaf {
    node: usize,
    sorted: Vec<Vec<u32>>,
    best: Option<Candidate>,
}

fn best_split(x: &FeatureMatrix, r: &[f64], sorted: &[Vec<u32>], min_parent: usize) -> Option<Candidate> {
    let n = sorted.first().map_or(0, Vec::len);
    if n < min_parent.max(2) {
        return None;
    }
    let first = r[sorted[0][0] as usize];
    if sorted[0].iter().all(|&i| r[i as usize] == first) {
        return None;
    }
    let total: f64 = sorted[0].iter().map(|&i| r[i as usize]).sum();
    let base = total * total / n as f64;
    let mut best: Option<Candidate> = None;
    for (f, order) in sorted.iter().enumerate() {
        let col = x.column(f);
        let mut left = 0.0;
        for k in 0..n - 1 {
            let i = order[k] as usize;
            left += r[i];
            let v = col[i];
            if v == col[order[k + 1] as usize] {
                continue;
            }
            let nl = (k + 1) as f64;
            let right = total - left;
            let gain = left * left / nl + right * right / (n as f64 - nl) - base;
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Candidate {
                    gain,
                    feature: f,
                    threshold: v,
                });
            }
        }
    }
    best
}

fn mean_of(r: &[f64], idx: &[u32]) -> f64 {
    idx.iter().map(|&i| r[i as usize]).sum::<f64>() / idx.len() as f64
}

pub(crate) fn fit_presorted(
    x: &FeatureMatrix,
    presorted: &[Vec<u32>],
    r: &[f64],
    max_splits: usize,
    min_parent: usize,
) -> RegressionTree {
    let n = r.len();
    if x.n_cols() == 0 {
        return RegressionTree::leaf(r.iter().sum::<f64>() / n as f64, n);
    }
    let root_sorted = presorted.to_vec();
    let mut tree = RegressionTree::leaf(mean_of(r, &root_sorted[0]), n);
    let mut open = vec![OpenLeaf {
        node: 0,
        best: best_split(x, r, &root_sorted, min_parent),
        sorted: root_sorted,
    }];
    let mut goes_left = vec![false; n];
    for _ in 0..max_splits {
        // Largest gain wins; among equal gains the earliest leaf.
        let mut pick: Option<usize> = None;
        for (k, leaf) in open.iter().enumerate() {
            if let Some(c) = &leaf.best {
                if pick.is_none_or(|p| c.gain > open[p].best.as_ref().unwrap().gain) {
                    pick = Some(k);
                }
            }
        }
        let Some(k) = pick else { break };
        let leaf = open.swap_remove(k);
        let c = leaf.best.unwrap();
        let col = x.column(c.feature);
        for &i in &leaf.sorted[0] {
            goes_left[i as usize] = col[i as usize] <= c.threshold;
        }
        let (mut ls, mut rs) = (Vec::with_capacity(leaf.sorted.len()), Vec::with_capacity(leaf.sorted.len()));
        for order in &leaf.sorted {
            let (l, rr): (Vec<u32>, Vec<u32>) = order.iter().partition(|&&i| goes_left[i as usize]);
            ls.push(l);
            rs.push(rr);
        }
        let left_id = tree.nodes.len();
        let right_id = left_id + 1;
        tree.nodes.push(Node::Leaf {
            value: mean_of(r, &ls[0]),
            n_samples: ls[0].len(),
        });
        tree.nodes.push(Node::Leaf {
            value: mean_of(r, &rs[0]),
            n_samples: rs[0].len(),
        });
        tree.nodes[leaf.node] = Node::Split {
            feature: c.feature,
            threshold: c.threshold,
            left: left_id,
            right: right_id,
            n_samples: leaf.sorted[0].len(),
        };
        let lb = best_split(x, r, &ls, min_parent);
        let rb = best_split(x, r, &rs, min_parent);
        open.push(OpenLeaf {
            node: left_id,
            sorted: ls,
            best: lb,
        });
        open.push(OpenLeaf {
            node: right_id,
            sorted: rs,
            best: rb,
        });
        // Keep creation order so gain ties resolve to the earliest leaf.
        open.sort_by_key(|l| l.node);
    }
    tree
}

/// Fits one least-squares tree to `target`. A node is split only when it
/// holds at least `min_parent` samples; both children get at least one.
pub fn fit_tree(
    x: &FeatureMatrix,
    target: &[f64],
    max_splits: usize,
    min_parent: usize,
) -> Result<RegressionTree, BoostError> {
    if target.is_empty() || x.n_rows() == 0 {
        return Err(BoostError::EmptyInput);
    }
    if x.n_rows() != target.len() {
        return Err(BoostError::LengthMismatch {
            rows: x.n_rows(),
            targets: target.len(),
        });
    }
    Ok(fit_presorted(x, &presort(x), target, max_splits, min_parent))
}
