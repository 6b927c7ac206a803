//! C4.5-style decision tree.
//!
//! Growth picks, among features whose information gain is at least the
//! average gain of all admissible splits, the one with the highest gain
//! ratio. Continuous and ordinal features split on a midpoint threshold and
//! pay the usual `log2(#tested thresholds) / N` penalty; symbolic features
//! split multiway. Unknown values are spread over the branches in proportion
//! to the known weight that went down each one, at training and at
//! prediction time. Symbolic categories holding less than `min_leaf` weight
//! at a node get no branch of their own and are treated as unknown there,
//! so every leaf keeps at least `min_leaf` weight.
//!
//! Pruning replaces a subtree with a leaf when the leaf's upper-confidence
//! error estimate is no worse than the subtree's.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{Dataset, FeatureKind, FeatureSchema, Value};
use crate::error::{Error, Result};
use crate::infogain::entropy_of_counts;

use super::Prediction;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Pruning confidence factor, in (0, 0.5].
    pub confidence: f64,
    pub min_leaf: usize,
    pub prune: bool,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            confidence: 0.2,
            min_leaf: 6,
            prune: true,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence <= 0.5) {
            return Err(Error::invalid(format!(
                "pruning confidence must lie in (0, 0.5], got {}",
                self.confidence
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid("min instances per leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTest {
    /// Branch 0 when `value <= threshold`, branch 1 otherwise.
    Threshold(f64),
    /// Branch per category; `None` marks categories routed as unknown.
    Categories(Vec<Option<u32>>),
}

impl SplitTest {
    fn route(&self, v: &Value) -> Option<usize> {
        match (self, v) {
            (_, Value::Missing) => None,
            (SplitTest::Threshold(t), v) => v.as_f64().map(|x| usize::from(x > *t)),
            (SplitTest::Categories(routes), Value::Cat(c)) => routes
                .get(*c as usize)
                .copied()
                .flatten()
                .map(|b| b as usize),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        dist: Vec<f64>,
    },
    Split {
        feature: usize,
        test: SplitTest,
        /// Share of the node's known weight sent down each branch.
        fractions: Vec<f64>,
        branches: Vec<Node>,
        dist: Vec<f64>,
    },
}

impl Node {
    pub fn dist(&self) -> &[f64] {
        match self {
            Node::Leaf { dist } | Node::Split { dist, .. } => dist,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { branches, .. } => {
                1 + branches.iter().map(Node::node_count).sum::<usize>()
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { branches, .. } => 1 + branches.iter().map(Node::depth).max().unwrap_or(0),
        }
    }

    pub fn leaves(&self) -> Vec<&Node> {
        match self {
            Node::Leaf { .. } => vec![self],
            Node::Split { branches, .. } => branches.iter().flat_map(Node::leaves).collect(),
        }
    }

    fn probabilities(&self, x: &[Value]) -> Vec<f64> {
        match self {
            Node::Leaf { dist } => {
                let total: f64 = dist.iter().sum();
                if total > 0.0 {
                    dist.iter().map(|w| w / total).collect()
                } else {
                    vec![1.0 / dist.len() as f64; dist.len()]
                }
            }
            Node::Split {
                feature,
                test,
                fractions,
                branches,
                dist,
            } => match test.route(&x[*feature]) {
                Some(b) => branches[b].probabilities(x),
                None => {
                    let mut acc = vec![0.0; dist.len()];
                    for (frac, child) in fractions.iter().zip(branches) {
                        for (a, p) in acc.iter_mut().zip(child.probabilities(x)) {
                            *a += frac * p;
                        }
                    }
                    acc
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: Node,
    pub schema: FeatureSchema,
    pub classes: Vec<String>,
    /// Training class frequencies; break ties between equally likely classes.
    pub priors: Vec<f64>,
    pub fingerprint: String,
}

impl DecisionTree {
    pub fn predict(&self, x: &[Value]) -> Prediction {
        let probabilities = self.root.probabilities(x);
        let class = pick_class(&probabilities, &self.priors);
        Prediction {
            class,
            probabilities,
        }
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }
}

/// Highest probability; ties go to the globally more frequent class, then
/// to the lower class index.
fn pick_class(probs: &[f64], priors: &[f64]) -> u32 {
    let mut best = 0;
    for i in 1..probs.len() {
        let better =
            probs[i] > probs[best] || (probs[i] == probs[best] && priors[i] > priors[best]);
        if better {
            best = i;
        }
    }
    best as u32
}

type Items = Vec<(usize, f64)>;

struct Candidate {
    feature: usize,
    gain: f64,
    ratio: f64,
    test: SplitTest,
    fractions: Vec<f64>,
}

struct Grower<'a> {
    d: &'a Dataset,
    min_leaf: f64,
    /// Apply the threshold-count penalty to continuous gains.
    penalize: bool,
}

impl Grower<'_> {
    fn distribution(&self, items: &[(usize, f64)]) -> Vec<f64> {
        let mut dist = vec![0.0; self.d.classes.len()];
        for &(i, w) in items {
            dist[self.d.labels[i] as usize] += w;
        }
        dist
    }

    fn grow(&self, items: &[(usize, f64)]) -> Node {
        let dist = self.distribution(items);
        let total: f64 = dist.iter().sum();
        let populated = dist.iter().filter(|&&w| w > 0.0).count();
        if populated <= 1 || total < 2.0 * self.min_leaf {
            return Node::Leaf { dist };
        }
        let Some(best) = self.best_split(items, total) else {
            return Node::Leaf { dist };
        };
        let children = self.partition(items, &best);
        let branches = children.iter().map(|c| self.grow(c)).collect();
        Node::Split {
            feature: best.feature,
            test: best.test,
            fractions: best.fractions,
            branches,
            dist,
        }
    }

    fn candidates(&self, items: &[(usize, f64)], total: f64) -> Vec<Candidate> {
        (0..self.d.m())
            .filter_map(|q| match self.d.schema.features[q].kind {
                FeatureKind::Continuous | FeatureKind::Ordinal => {
                    self.threshold_split(q, items, total)
                }
                FeatureKind::Symbolic => self.category_split(q, items, total),
            })
            .collect()
    }

    fn best_split(&self, items: &[(usize, f64)], total: f64) -> Option<Candidate> {
        let cands: Vec<Candidate> = self
            .candidates(items, total)
            .into_iter()
            .filter(|c| c.gain > EPS)
            .collect();
        if cands.is_empty() {
            return None;
        }
        let average = cands.iter().map(|c| c.gain).sum::<f64>() / cands.len() as f64;
        let mut best: Option<Candidate> = None;
        for c in cands {
            if c.gain < average - EPS {
                continue;
            }
            if best.as_ref().is_none_or(|b| c.ratio > b.ratio) {
                best = Some(c);
            }
        }
        best
    }

    fn threshold_split(&self, q: usize, items: &[(usize, f64)], total: f64) -> Option<Candidate> {
        let mut known: Vec<(f64, usize, f64)> = items
            .iter()
            .filter_map(|&(i, w)| {
                self.d.rows[i][q]
                    .as_f64()
                    .map(|v| (v, self.d.labels[i] as usize, w))
            })
            .collect();
        if known.len() < 2 {
            return None;
        }
        known.sort_by(|a, b| a.0.total_cmp(&b.0));
        let c = self.d.classes.len();
        let mut known_dist = vec![0.0; c];
        for &(_, l, w) in &known {
            known_dist[l] += w;
        }
        let known_w: f64 = known_dist.iter().sum();
        let base = entropy_of_counts(known_dist.iter().copied());

        let mut left = vec![0.0; c];
        let mut left_w = 0.0;
        let mut tested = 0usize;
        let mut best: Option<(f64, usize, f64)> = None;
        for i in 0..known.len() - 1 {
            let (v, l, w) = known[i];
            left[l] += w;
            left_w += w;
            if v >= known[i + 1].0 {
                continue;
            }
            let right_w = known_w - left_w;
            if left_w < self.min_leaf - EPS || right_w < self.min_leaf - EPS {
                continue;
            }
            tested += 1;
            let right = known_dist.iter().zip(&left).map(|(k, l)| (k - l).max(0.0));
            let info = (left_w / known_w) * entropy_of_counts(left.iter().copied())
                + (right_w / known_w) * entropy_of_counts(right);
            let g = base - info;
            if best.is_none_or(|(bg, _, _)| g > bg) {
                best = Some((g, i, left_w));
            }
        }
        let (g, i, left_w) = best?;
        let mut gain = (known_w / total) * g;
        if self.penalize {
            gain -= (tested as f64).log2() / total;
        }
        let right_w = known_w - left_w;
        let split_info = entropy_of_counts([left_w, right_w, total - known_w]);
        let (lo, hi) = (known[i].0, known[i + 1].0);
        let mut threshold = lo + (hi - lo) / 2.0;
        if threshold >= hi {
            threshold = lo;
        }
        Some(Candidate {
            feature: q,
            gain,
            ratio: if split_info > EPS {
                gain / split_info
            } else {
                0.0
            },
            test: SplitTest::Threshold(threshold),
            fractions: vec![left_w / known_w, right_w / known_w],
        })
    }

    fn category_split(&self, q: usize, items: &[(usize, f64)], total: f64) -> Option<Candidate> {
        let card = self.d.schema.features[q].cardinality();
        let c = self.d.classes.len();
        let mut per_cat = vec![vec![0.0; c]; card];
        for &(i, w) in items {
            if let Value::Cat(v) = self.d.rows[i][q] {
                per_cat[v as usize][self.d.labels[i] as usize] += w;
            }
        }
        let weights: Vec<f64> = per_cat.iter().map(|d| d.iter().sum()).collect();
        let mut routes = vec![None; card];
        let mut branch_w = Vec::new();
        let mut branch_dists = Vec::new();
        for (cat, &w) in weights.iter().enumerate() {
            if w >= self.min_leaf - EPS && w > 0.0 {
                routes[cat] = Some(branch_w.len() as u32);
                branch_w.push(w);
                branch_dists.push(&per_cat[cat]);
            }
        }
        if branch_w.len() < 2 {
            return None;
        }
        let known_w: f64 = branch_w.iter().sum();
        let mut known_dist = vec![0.0; c];
        for d in &branch_dists {
            for (k, v) in known_dist.iter_mut().zip(d.iter()) {
                *k += v;
            }
        }
        let base = entropy_of_counts(known_dist);
        let info: f64 = branch_dists
            .iter()
            .zip(&branch_w)
            .map(|(d, w)| (w / known_w) * entropy_of_counts(d.iter().copied()))
            .sum();
        let gain = (known_w / total) * (base - info);
        let split_info = entropy_of_counts(branch_w.iter().copied().chain([total - known_w]));
        Some(Candidate {
            feature: q,
            gain,
            ratio: if split_info > EPS {
                gain / split_info
            } else {
                0.0
            },
            test: SplitTest::Categories(routes),
            fractions: branch_w.iter().map(|w| w / known_w).collect(),
        })
    }

    fn partition(&self, items: &[(usize, f64)], split: &Candidate) -> Vec<Items> {
        let mut children: Vec<Items> = vec![Vec::new(); split.fractions.len()];
        for &(i, w) in items {
            match split.test.route(&self.d.rows[i][split.feature]) {
                Some(b) => children[b].push((i, w)),
                None => {
                    for (child, f) in children.iter_mut().zip(&split.fractions) {
                        if *f > 0.0 {
                            child.push((i, w * f));
                        }
                    }
                }
            }
        }
        children
    }
}

/// Upper-confidence-limit extra errors for `e` observed errors in `n`
/// instances (C4.5's binomial approximation).
pub fn added_errors(n: f64, e: f64, confidence: f64) -> f64 {
    if e < 1.0 {
        let base = n * (1.0 - confidence.powf(1.0 / n));
        if e == 0.0 {
            return base;
        }
        return base + e * (added_errors(n, 1.0, confidence) - base);
    }
    if e + 0.5 >= n {
        return (n - e).max(0.0);
    }
    let z = Normal::standard().inverse_cdf(1.0 - confidence);
    let f = (e + 0.5) / n;
    let r = (f + z * z / (2.0 * n) + z * (f / n - f * f / n + z * z / (4.0 * n * n)).sqrt())
        / (1.0 + z * z / n);
    r * n - e
}

fn leaf_estimate(dist: &[f64], confidence: f64) -> f64 {
    let n: f64 = dist.iter().sum();
    if n <= 0.0 {
        return 0.0;
    }
    let e = n - dist.iter().copied().fold(0.0, f64::max);
    e + added_errors(n, e, confidence)
}

/// Bottom-up pessimistic pruning; returns the node's estimated errors.
fn prune(node: &mut Node, confidence: f64) -> f64 {
    match node {
        Node::Leaf { dist } => leaf_estimate(dist, confidence),
        Node::Split { branches, dist, .. } => {
            let subtree: f64 = branches.iter_mut().map(|b| prune(b, confidence)).sum();
            let as_leaf = leaf_estimate(dist, confidence);
            if as_leaf <= subtree + 0.1 {
                *node = Node::Leaf {
                    dist: std::mem::take(dist),
                };
                as_leaf
            } else {
                subtree
            }
        }
    }
}

pub(crate) fn grow_unpruned(d: &Dataset, p: &TreeParams) -> Node {
    let items: Items = (0..d.n()).map(|i| (i, 1.0)).collect();
    Grower {
        d,
        min_leaf: p.min_leaf as f64,
        penalize: true,
    }
    .grow(&items)
}

pub(crate) fn grow(d: &Dataset, p: &TreeParams) -> Result<DecisionTree> {
    let mut root = grow_unpruned(d, p);
    if p.prune {
        prune(&mut root, p.confidence);
    }
    Ok(DecisionTree {
        root,
        schema: d.schema.clone(),
        classes: d.classes.clone(),
        priors: d.class_counts().iter().map(|&c| c as f64).collect(),
        fingerprint: d.schema.fingerprint(),
    })
}

/// Best unpenalized information gain of every feature at the root, with a
/// minimum branch weight of one instance. Features with no admissible split
/// report 0.
pub fn root_gains(d: &Dataset) -> Vec<f64> {
    let g = Grower {
        d,
        min_leaf: 1.0,
        penalize: false,
    };
    let items: Items = (0..d.n()).map(|i| (i, 1.0)).collect();
    let total = d.n() as f64;
    let mut gains = vec![0.0; d.m()];
    for c in g.candidates(&items, total) {
        gains[c.feature] = c.gain.max(0.0);
    }
    gains
}
