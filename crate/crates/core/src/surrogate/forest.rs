use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SurrogateError, TrainingSet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn count(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (d as f64).log2().floor() as usize,
            MaxFeatures::All => d,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    fn impurity(self, n1: usize, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let p = n1 as f64 / n as f64;
        match self {
            Criterion::Gini => 2.0 * p * (1.0 - p),
            Criterion::Entropy => {
                let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
                h(p) + h(1.0 - p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
    /// Fit each tree on a bootstrap resample; otherwise on the whole split.
    pub bootstrap: bool,
}

impl Default for RfParams {
    fn default() -> Self {
        Self { n_estimators: 100, max_depth: 1000, max_features: MaxFeatures::Log2, criterion: Criterion::Gini, bootstrap: true }
    }
}

impl RfParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.n_estimators == 0 || self.max_depth == 0 {
            return Err(SurrogateError::InvalidHyperParams("n_estimators and max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf { failed: bool },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// 1 if the tree votes failed.
    pub fn vote(&self, row: &[f64]) -> u8 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { failed } => return u8::from(failed),
                Node::Split { feature, threshold, left, right } => {
                    k = if row[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub(crate) trees: Vec<Tree>,
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Fraction of trees voting failed.
    pub fn proba(&self, row: &[f64]) -> f64 {
        let votes: usize = self.trees.iter().map(|t| t.vote(row) as usize).sum();
        votes as f64 / self.trees.len() as f64
    }
}

pub(crate) fn fit(set: &TrainingSet, hp: &RfParams, seed: u64) -> Forest {
    let trees = (0..hp.n_estimators as u64)
        .into_par_iter()
        .map(|t| fit_tree(set, hp, rng::derive_seed(seed, t)))
        .collect();
    Forest { trees }
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn fit_tree(set: &TrainingSet, hp: &RfParams, seed: u64) -> Tree {
    let mut r = rng::stream(seed);
    let n = set.n();
    let rows: Vec<usize> = if hp.bootstrap { (0..n).map(|_| r.random_range(0..n)).collect() } else { (0..n).collect() };
    let mtry = hp.max_features.count(set.d);
    let mut features: Vec<usize> = (0..set.d).collect();
    let mut nodes = vec![Node::Leaf { failed: false }];
    let mut stack = vec![(0usize, rows, 0usize)];
    let mut buf: Vec<(f64, u8)> = Vec::with_capacity(n);

    while let Some((slot, idx, depth)) = stack.pop() {
        let n1 = idx.iter().filter(|&&i| set.y[i] == 1).count();
        let leaf = Node::Leaf { failed: 2 * n1 >= idx.len() };
        if depth >= hp.max_depth || n1 == 0 || n1 == idx.len() || idx.len() < 2 {
            nodes[slot] = leaf;
            continue;
        }
        let mut best: Option<Split> = None;
        for j in 0..set.d {
            if j >= mtry && best.is_some() {
                break;
            }
            let pick = r.random_range(j..set.d);
            features.swap(j, pick);
            let f = features[j];
            buf.clear();
            buf.extend(idx.iter().map(|&i| (set.x[i * set.d + f], set.y[i])));
            buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            let m = buf.len();
            let mut left1 = 0;
            for k in 0..m - 1 {
                left1 += buf[k].1 as usize;
                let (lo, hi) = (buf[k].0, buf[k + 1].0);
                if lo >= hi {
                    continue;
                }
                let nl = k + 1;
                let score = nl as f64 * hp.criterion.impurity(left1, nl)
                    + (m - nl) as f64 * hp.criterion.impurity(n1 - left1, m - nl);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some(Split { feature: f, threshold: if mid < hi { mid } else { lo }, score });
                }
            }
        }
        let Some(split) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| set.x[i * set.d + split.feature] <= split.threshold);
        let (l, rt) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { failed: false });
        nodes.push(Node::Leaf { failed: false });
        nodes[slot] = Node::Split { feature: split.feature as u32, threshold: split.threshold, left: l as u32, right: rt as u32 };
        stack.push((rt, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{train_random_forest, Fitted};
    use super::*;
    use crate::rng;

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(795), 28);
        assert_eq!(MaxFeatures::Log2.count(795), 9);
        assert_eq!(MaxFeatures::All.count(795), 795);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
    }

    #[test]
    fn separable_toy_set_is_fit_exactly() {
        let s = samples((0..20).map(|i| (vec![i as f64, (i * 7 % 5) as f64], u8::from(i >= 10))).collect());
        let m = train_random_forest(&view(&s), &RfParams::default(), 3).unwrap();
        assert_eq!(m.predict(&view(&s)).unwrap(), view(&s).labels());
    }

    fn brute_force_stump(x: &[f64], y: &[u8]) -> (f64, f64) {
        let mut vals = x.to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let gini = |ys: Vec<u8>| {
            let n = ys.len() as f64;
            let p = ys.iter().filter(|&&l| l == 1).count() as f64 / n;
            n * (2.0 * p * (1.0 - p))
        };
        let mut best = (f64::INFINITY, f64::NAN);
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left = x.iter().zip(y).filter(|(v, _)| **v <= t).map(|(_, &l)| l).collect();
            let right = x.iter().zip(y).filter(|(v, _)| **v > t).map(|(_, &l)| l).collect();
            let score = gini(left) + gini(right);
            if score < best.0 {
                best = (score, t);
            }
        }
        best
    }

    #[test]
    fn depth_one_tree_is_the_best_stump() {
        use rand::Rng;
        for seed in 0..20u64 {
            let mut r = rng::stream(seed);
            let rows: Vec<(Vec<f64>, u8)> = (0..30)
                .map(|_| {
                    let v: f64 = r.random_range(0.0..10.0);
                    let noisy = r.random_bool(0.2);
                    (vec![(v * 4.0).round() / 4.0], u8::from((v > 4.0) ^ noisy))
                })
                .collect();
            let x: Vec<f64> = rows.iter().map(|r| r.0[0]).collect();
            let y: Vec<u8> = rows.iter().map(|r| r.1).collect();
            let s = samples(rows);
            let hp = RfParams { n_estimators: 1, max_depth: 1, max_features: MaxFeatures::All, bootstrap: false, ..RfParams::default() };
            let m = train_random_forest(&view(&s), &hp, seed).unwrap();
            let Fitted::Rf(forest) = &m.fitted else { unreachable!() };
            let (_, t) = brute_force_stump(&x, &y);
            match forest.trees[0].nodes[0] {
                Node::Split { threshold, .. } => assert_eq!(threshold, t, "seed {seed}"),
                Node::Leaf { .. } => panic!("expected a split"),
            }
            for (xi, pi) in x.iter().zip(m.predict(&view(&s)).unwrap()) {
                let side: Vec<u8> = x.iter().zip(&y).filter(|(v, _)| (**v <= t) == (*xi <= t)).map(|(_, &l)| l).collect();
                let n1 = side.iter().filter(|&&l| l == 1).count();
                assert_eq!(pi, u8::from(2 * n1 >= side.len()));
            }
        }
    }

    #[test]
    fn probability_is_per_tree_vote_fraction() {
        let s = blobs(20, 5, 0.3, 2);
        let m = train_random_forest(&view(&s), &RfParams { n_estimators: 37, ..RfParams::default() }, 4).unwrap();
        let forest = m.forest().unwrap();
        for row in view(&s).features() {
            let votes = forest.trees().iter().filter(|t| t.vote(row) == 1).count();
            assert_eq!(m.proba_row(row).unwrap(), votes as f64 / 37.0);
        }
    }

    #[test]
    fn unanimous_forest_gives_probability_one() {
        let s = blobs(10, 2, 3.0, 1);
        let m = train_random_forest(&view(&s), &RfParams { n_estimators: 9, ..RfParams::default() }, 0).unwrap();
        assert_eq!(m.proba_row(&[20.0, 20.0]).unwrap(), 1.0);
        assert_eq!(m.proba_row(&[-20.0, -20.0]).unwrap(), 0.0);
    }

    #[test]
    fn depth_limit_and_entropy() {
        let s = xor(15, 3);
        let hp = RfParams { max_depth: 2, criterion: Criterion::Entropy, n_estimators: 5, ..RfParams::default() };
        let m = train_random_forest(&view(&s), &hp, 1).unwrap();
        assert!(m.forest().unwrap().trees().iter().all(|t| t.depth() <= 2));
    }
}
