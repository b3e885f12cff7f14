//! CART regression trees grown level by level over presorted columns.
//!
//! Each level walks every candidate feature's presorted order exactly once and
//! evaluates splits for all open nodes at the same time, so a tree costs
//! `O(depth * features * samples)` after a single up-front sort. Samples carry
//! a non-negative weight (bootstrap multiplicity; 0 means "not drawn").

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::matrix::Matrix;
use crate::seed::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
        /// Total training weight that reached this leaf.
        weight: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize, gain: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

impl RegressionTree {
    /// Builds a tree from a node list (root first), checking child links.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidConfig("tree has no nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Split { feature, left, right, .. } = *n {
                if feature >= n_features || left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::InvalidConfig(alloc::format!("node {i} has invalid links")));
                }
            }
        }
        Ok(Self { nodes, n_features })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// `(feature, gain)` for every split node.
    pub fn split_gains(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Split { feature, gain, .. } => Some((feature, gain)),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum total weight on each side of a split.
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    /// L2 penalty on leaf values: leaf = sum / (weight + penalty).
    pub leaf_penalty: f64,
}

impl TreeParams {
    pub fn new(max_depth: usize, min_leaf: usize) -> Self {
        Self { max_depth, min_leaf: min_leaf.max(1), max_features: None, leaf_penalty: 0.0 }
    }
}

/// Per-column sample orders, shared by every tree fit on the same matrix.
#[derive(Debug, Clone)]
pub struct SortedColumns {
    rows: usize,
    cols: usize,
    order: Vec<u32>,
    values: Vec<f64>,
}

impl SortedColumns {
    pub fn new(x: &Matrix) -> Self {
        let (rows, cols) = (x.rows(), x.cols());
        let mut order = Vec::with_capacity(rows * cols);
        let mut values = Vec::with_capacity(rows * cols);
        let mut idx: Vec<u32> = (0..rows as u32).collect();
        for j in 0..cols {
            idx.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)).then(a.cmp(&b)));
            order.extend_from_slice(&idx);
            values.extend(idx.iter().map(|&i| x.get(i as usize, j)));
        }
        Self { rows, cols, order, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn column(&self, j: usize) -> (&[u32], &[f64]) {
        let r = j * self.rows..(j + 1) * self.rows;
        (&self.order[r.clone()], &self.values[r])
    }
}

/// Midpoint that stays strictly below `hi`.
fn threshold_between(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

#[derive(Clone)]
struct OpenNode {
    id: usize,
    depth: usize,
    weight: f64,
    sum: f64,
    sumsq: f64,
    splittable: bool,
    best: Option<(usize, f64, f64)>,
}

impl OpenNode {
    fn new(id: usize, depth: usize) -> Self {
        Self { id, depth, weight: 0.0, sum: 0.0, sumsq: 0.0, splittable: false, best: None }
    }

    fn score(&self, penalty: f64) -> f64 {
        self.sum * self.sum / (self.weight + penalty)
    }
}

const INACTIVE: u32 = u32::MAX;

struct SlotScan {
    total_w: f64,
    total_s: f64,
    parent: f64,
    best_gain: f64,
    left_w: f64,
    left_s: f64,
    last: f64,
}

#[derive(Clone, Copy)]
struct Row {
    slot: u32,
    w: f64,
    wy: f64,
}

/// Grows one tree on `targets` with per-sample `weights`.
pub(crate) fn grow(
    x: &Matrix,
    sorted: &SortedColumns,
    targets: &[f64],
    weights: &[f64],
    params: &TreeParams,
    mut rng: Option<&mut Rng>,
) -> RegressionTree {
    let (n, f) = (sorted.rows, sorted.cols);
    let min_leaf = params.min_leaf.max(1) as f64;
    let penalty = params.leaf_penalty;
    let mut nodes = vec![Node::Leaf { value: 0.0, weight: 0.0 }];
    let mut node_of = vec![INACTIVE; n];
    let mut root = OpenNode::new(0, 0);
    for i in 0..n {
        if weights[i] > 0.0 {
            node_of[i] = 0;
            root.weight += weights[i];
            root.sum += weights[i] * targets[i];
            root.sumsq += weights[i] * targets[i] * targets[i];
        }
    }
    let mut open = vec![root];
    let mut feature_pool: Vec<usize> = (0..f).collect();
    let mut rows = vec![Row { slot: INACTIVE, w: 0.0, wy: 0.0 }; n];

    while !open.is_empty() {
        for o in &mut open {
            o.splittable = o.depth < params.max_depth && o.weight >= 2.0 * min_leaf && f > 0;
        }
        // Which features each open node may split on.
        let subset = params.max_features.filter(|&k| k < f);
        let mut allowed: Vec<bool> = Vec::new();
        let mut feature_in_use = vec![subset.is_none(); f];
        if let Some(k) = subset {
            allowed = vec![false; open.len() * f];
            let rng = rng.as_deref_mut().expect("feature subsetting needs an rng");
            for (s, o) in open.iter().enumerate() {
                if !o.splittable {
                    continue;
                }
                for t in 0..k.max(1) {
                    let pick = rng.random_range(t..f);
                    feature_pool.swap(t, pick);
                    allowed[s * f + feature_pool[t]] = true;
                    feature_in_use[feature_pool[t]] = true;
                }
            }
        }

        if open.iter().any(|o| o.splittable) {
            let slots = open.len();
            // Per-row state for this level; rows in unsplittable nodes drop out.
            for i in 0..n {
                let s = node_of[i];
                rows[i] = if s != INACTIVE && open[s as usize].splittable {
                    Row { slot: s, w: weights[i], wy: weights[i] * targets[i] }
                } else {
                    Row { slot: INACTIVE, w: 0.0, wy: 0.0 }
                };
            }
            let mut acc: Vec<SlotScan> = open
                .iter()
                .map(|o| SlotScan {
                    total_w: o.weight,
                    total_s: o.sum,
                    parent: o.score(penalty),
                    // Relative floor below which gains are treated as rounding noise.
                    best_gain: 1e-12 * o.sumsq,
                    left_w: 0.0,
                    left_s: 0.0,
                    last: f64::NAN,
                })
                .collect();
            let mut best: Vec<Option<(usize, f64, f64)>> = vec![None; slots];
            for j in 0..f {
                if !feature_in_use[j] {
                    continue;
                }
                for a in &mut acc {
                    a.left_w = 0.0;
                    a.left_s = 0.0;
                    a.last = f64::NAN;
                }
                let (order, values) = sorted.column(j);
                for (&i, &v) in order.iter().zip(values) {
                    let row = rows[i as usize];
                    if row.slot == INACTIVE {
                        continue;
                    }
                    let s = row.slot as usize;
                    if subset.is_some() && !allowed[s * f + j] {
                        continue;
                    }
                    let a = &mut acc[s];
                    if v > a.last {
                        let (lw, ls) = (a.left_w, a.left_s);
                        let (rw, rs) = (a.total_w - lw, a.total_s - ls);
                        if lw >= min_leaf && rw >= min_leaf {
                            let gain = ls * ls / (lw + penalty) + rs * rs / (rw + penalty) - a.parent;
                            if gain > a.best_gain + 1e-12 * a.best_gain.abs() {
                                a.best_gain = gain;
                                best[s] = Some((j, threshold_between(a.last, v), gain));
                            }
                        }
                    }
                    a.left_w += row.w;
                    a.left_s += row.wy;
                    a.last = v;
                }
            }
            for (o, b) in open.iter_mut().zip(best) {
                o.best = b;
            }
        }

        // Materialize splits and leaves, then route samples to the next level.
        let mut next: Vec<OpenNode> = Vec::new();
        let mut child_slots: Vec<Option<(usize, f64, u32)>> = Vec::with_capacity(open.len());
        for o in &open {
            match o.best {
                Some((feature, threshold, gain)) if o.splittable => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0, weight: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0, weight: 0.0 });
                    nodes[o.id] = Node::Split { feature, threshold, left, right: left + 1, gain };
                    child_slots.push(Some((feature, threshold, next.len() as u32)));
                    next.push(OpenNode::new(left, o.depth + 1));
                    next.push(OpenNode::new(left + 1, o.depth + 1));
                }
                _ => {
                    nodes[o.id] = Node::Leaf { value: o.sum / (o.weight + penalty), weight: o.weight };
                    child_slots.push(None);
                }
            }
        }
        for i in 0..n {
            let s = node_of[i];
            if s == INACTIVE {
                continue;
            }
            match child_slots[s as usize] {
                None => node_of[i] = INACTIVE,
                Some((feature, threshold, first)) => {
                    let xv = x.get(i, feature);
                    let slot = if xv <= threshold { first } else { first + 1 };
                    node_of[i] = slot;
                    let c = &mut next[slot as usize];
                    c.weight += weights[i];
                    c.sum += weights[i] * targets[i];
                    c.sumsq += weights[i] * targets[i] * targets[i];
                }
            }
        }
        open = next;
    }
    RegressionTree { nodes, n_features: f }
}

pub fn fit_tree(x: &Matrix, y: &[f64], max_depth: usize, min_leaf: usize) -> Result<RegressionTree> {
    if x.rows() == 0 {
        return Err(Error::EmptyTraining);
    }
    if y.len() != x.rows() {
        return Err(Error::LengthMismatch { left: x.rows(), right: y.len() });
    }
    let sorted = SortedColumns::new(x);
    let weights = vec![1.0; x.rows()];
    Ok(grow(x, &sorted, y, &weights, &TreeParams::new(max_depth, min_leaf), None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn sse(tree: &RegressionTree, x: &Matrix, y: &[f64]) -> f64 {
        x.iter_rows().zip(y).map(|(r, t)| (tree.predict_row(r) - t).powi(2)).sum()
    }

    fn random_data(seed: u64, n: usize, f: usize) -> (Matrix, Vec<f64>) {
        let mut rng = seed::rng(seed);
        let x: Vec<f64> = (0..n * f).map(|_| libm::round(rng.random::<f64>() * 8.0) / 2.0).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0).collect();
        (Matrix::from_vec(n, f, x).unwrap(), y)
    }

    #[test]
    fn depth_zero_is_mean() {
        let (x, y) = random_data(1, 10, 2);
        let t = fit_tree(&x, &y, 0, 1).unwrap();
        assert_eq!(t.nodes().len(), 1);
        let mean = y.iter().sum::<f64>() / 10.0;
        assert!((t.predict_row(x.row(0)) - mean).abs() < 1e-12);
    }

    #[test]
    fn separable_threshold_fits_exactly() {
        let x = Matrix::from_vec(6, 2, alloc::vec![0.3, 1.0, 0.1, 0.0, 0.9, 1.0, 0.7, 0.0, 0.2, 1.0, 0.8, 0.0]).unwrap();
        let y = [0.0, 0.0, 4.0, 4.0, 0.0, 4.0];
        let t = fit_tree(&x, &y, 1, 1).unwrap();
        assert_eq!(sse(&t, &x, &y), 0.0);
        match t.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn deeper_tree_never_worse_than_mean() {
        for s in 0..5 {
            let (x, y) = random_data(100 + s, 50, 3);
            let stump = fit_tree(&x, &y, 0, 1).unwrap();
            let deep = fit_tree(&x, &y, 4, 1).unwrap();
            assert!(deep.depth() <= 4);
            assert!(sse(&deep, &x, &y) <= sse(&stump, &x, &y) + 1e-9);
            let leaf_weight: f64 = deep
                .nodes()
                .iter()
                .map(|n| match n {
                    Node::Leaf { weight, .. } => *weight,
                    _ => 0.0,
                })
                .sum();
            assert_eq!(leaf_weight, 50.0);
        }
    }

    /// Exhaustive search over every (feature, midpoint) pair by direct SSE.
    fn best_root_split(x: &Matrix, y: &[f64]) -> Option<(usize, f64, f64)> {
        let total = {
            let m = y.iter().sum::<f64>() / y.len() as f64;
            y.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        };
        let side_sse = |idx: &[usize]| {
            let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
            idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
        };
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..x.cols() {
            let mut vals = x.column(j);
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = (w[0] + w[1]) / 2.0;
                let (l, r): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| x.get(i, j) <= thr);
                let gain = total - side_sse(&l) - side_sse(&r);
                if best.map_or(gain > 1e-9, |b| gain > b.2 + 1e-9) {
                    best = Some((j, thr, gain));
                }
            }
        }
        best
    }

    #[test]
    fn root_split_matches_exhaustive_search() {
        for s in 0..300 {
            let mut rng = seed::rng(s);
            let n = rng.random_range(2..=12);
            let f = rng.random_range(1..=2);
            let (x, y) = random_data(1000 + s, n, f);
            let t = fit_tree(&x, &y, 1, 1).unwrap();
            match (best_root_split(&x, &y), &t.nodes()[0]) {
                (None, Node::Leaf { .. }) => {}
                (Some((bj, bt, bg)), Node::Split { feature, threshold, gain, .. }) => {
                    assert!((gain - bg).abs() < 1e-9, "case {s}: gain {gain} vs {bg}");
                    assert_eq!((*feature, *threshold), (bj, bt), "case {s}");
                }
                (b, n) => panic!("case {s}: oracle {b:?} vs tree {n:?}"),
            }
        }
    }

    #[test]
    fn ties_prefer_lower_feature() {
        let x = Matrix::from_vec(4, 2, alloc::vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        let t = fit_tree(&x, &[0.0, 0.0, 1.0, 1.0], 1, 1).unwrap();
        assert!(matches!(t.nodes()[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn adjacent_floats_still_separate() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let x = Matrix::from_vec(2, 1, alloc::vec![a, b]).unwrap();
        let t = fit_tree(&x, &[0.0, 1.0], 1, 1).unwrap();
        assert_eq!(t.predict_row(&[a]), 0.0);
        assert_eq!(t.predict_row(&[b]), 1.0);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert_eq!(fit_tree(&Matrix::zeros(0, 2), &[], 2, 1), Err(Error::EmptyTraining));
        assert!(matches!(fit_tree(&Matrix::zeros(2, 2), &[1.0], 2, 1), Err(Error::LengthMismatch { .. })));
    }
}
