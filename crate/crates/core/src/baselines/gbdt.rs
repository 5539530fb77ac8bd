use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};
use crate::neural::ClassWeights;
use crate::rng::rng_from;

/// Minimum summed Hessian in a child for a split to be admissible.
pub const MIN_CHILD_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtHyperparams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub l1_reg: f64,
    pub l2_reg: f64,
}

impl Default for GbdtHyperparams {
    fn default() -> Self {
        Self { n_estimators: 100, max_depth: 4, learning_rate: 0.1, subsample: 1.0, l1_reg: 0.0, l2_reg: 1.0 }
    }
}

impl GbdtHyperparams {
    pub const N_ESTIMATORS: (usize, usize) = (50, 500);
    pub const MAX_DEPTH: (usize, usize) = (2, 15);
    pub const LEARNING_RATE: (f64, f64) = (0.001, 0.3);
    pub const SUBSAMPLE: (f64, f64) = (0.5, 1.0);

    /// Accepts any sane values; the tuning ranges are enforced by
    /// [`in_search_space`](Self::in_search_space).
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_estimators >= 1
            && self.max_depth >= 1
            && self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.subsample > 0.0
            && self.subsample <= 1.0
            && self.l1_reg >= 0.0
            && self.l2_reg >= 0.0
            && self.l1_reg.is_finite()
            && self.l2_reg.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid boosting hyperparameters {self:?}")))
        }
    }

    pub fn in_search_space(&self) -> bool {
        (Self::N_ESTIMATORS.0..=Self::N_ESTIMATORS.1).contains(&self.n_estimators)
            && (Self::MAX_DEPTH.0..=Self::MAX_DEPTH.1).contains(&self.max_depth)
            && (Self::LEARNING_RATE.0..=Self::LEARNING_RATE.1).contains(&self.learning_rate)
            && (Self::SUBSAMPLE.0..=Self::SUBSAMPLE.1).contains(&self.subsample)
            && self.l1_reg >= 0.0
            && self.l2_reg >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Logit increment, learning rate already applied.
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] < threshold { left } else { right };
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub initial_logit: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

impl TreeEnsemble {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.initial_logit + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features {
            return Err(Error::Shape(format!("{} columns, ensemble expects {}", x.cols(), self.n_features)));
        }
        Ok((0..x.rows()).map(|i| self.decision(x.row(i))).collect())
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict_logits(x)?.into_iter().map(sigmoid).collect())
    }
}

/// Each feature's rows mapped to the rank of their value among the
/// feature's sorted distinct values; splits are searched between
/// consecutive distinct values, which is the exact greedy search.
struct Binned {
    /// `bins[f][i]` for row `i`.
    bins: Vec<Vec<u32>>,
    /// Sorted distinct values per feature.
    values: Vec<Vec<f64>>,
}

impl Binned {
    fn new(x: &Matrix) -> Self {
        let mut bins = Vec::with_capacity(x.cols());
        let mut values = Vec::with_capacity(x.cols());
        for f in 0..x.cols() {
            let col = x.column(f);
            let mut distinct = col.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            bins.push(
                col.iter()
                    .map(|v| distinct.binary_search_by(|d| d.total_cmp(v)).unwrap() as u32)
                    .collect(),
            );
            values.push(distinct);
        }
        Self { bins, values }
    }
}

fn soft_threshold(g: f64, l1: f64) -> f64 {
    if g > l1 {
        g - l1
    } else if g < -l1 {
        g + l1
    } else {
        0.0
    }
}

struct Builder<'a> {
    binned: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    hp: &'a GbdtHyperparams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let t = soft_threshold(g, self.hp.l1_reg);
        t * t / (h + self.hp.l2_reg)
    }

    fn leaf(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.hp.l2_reg;
        if denom <= 0.0 {
            return 0.0;
        }
        -self.hp.learning_rate * soft_threshold(g, self.hp.l1_reg) / denom
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf(g, h) });
        if depth >= self.hp.max_depth || rows.len() < 2 {
            return id;
        }
        let parent = self.score(g, h);
        // (gain, feature, left bin upper index)
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, bins) in self.binned.bins.iter().enumerate() {
            let k = self.binned.values[f].len();
            if k < 2 {
                continue;
            }
            let mut gs = vec![0.0; k];
            let mut hs = vec![0.0; k];
            for &i in &rows {
                let b = bins[i] as usize;
                gs[b] += self.grad[i];
                hs[b] += self.hess[i];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..k - 1 {
                gl += gs[b];
                hl += hs[b];
                let (gr, hr) = (g - gl, h - hl);
                if hl < MIN_CHILD_WEIGHT || hr < MIN_CHILD_WEIGHT {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((_, feature, b)) = best else {
            return id;
        };
        let vals = &self.binned.values[feature];
        let threshold = 0.5 * (vals[b] + vals[b + 1]);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.binned.bins[feature][i] as usize <= b);
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

/// Second-order gradient boosting on class-weighted logistic loss.
pub fn train_gbdt(
    x: &Matrix,
    y: &[u8],
    hp: &GbdtHyperparams,
    class_weights: ClassWeights,
    seed: u64,
) -> Result<TreeEnsemble> {
    hp.validate()?;
    if x.rows() == 0 {
        return Err(Error::Empty("training set"));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    let n = x.rows();
    let w: Vec<f64> = y.iter().map(|&l| class_weights.of(l)).collect();
    let pos: f64 = y.iter().zip(&w).filter(|(&l, _)| l == 1).map(|(_, w)| w).sum();
    let neg: f64 = w.iter().sum::<f64>() - pos;
    let initial_logit = if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass);
    } else {
        (pos / neg).ln()
    };
    let binned = Binned::new(x);
    let mut logits = vec![initial_logit; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut rng = rng_from(seed, &[0x9bd7]);
    let take = ((n as f64 * hp.subsample).round() as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(hp.n_estimators);
    for _ in 0..hp.n_estimators {
        for i in 0..n {
            let p = sigmoid(logits[i]);
            grad[i] = w[i] * (p - y[i] as f64);
            hess[i] = w[i] * p * (1.0 - p);
        }
        let mut rows: Vec<usize> = if take == n { (0..n).collect() } else { sample(&mut rng, n, take).into_vec() };
        rows.sort_unstable();
        let mut builder = Builder { binned: &binned, grad: &grad, hess: &hess, hp, nodes: Vec::new() };
        builder.build(rows, 0);
        let tree = Tree { nodes: builder.nodes };
        for (i, l) in logits.iter_mut().enumerate() {
            *l += tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble { initial_logit, learning_rate: hp.learning_rate, trees, n_features: x.cols() })
}
