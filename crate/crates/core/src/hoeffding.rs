//! Incremental Hoeffding tree over numeric features.
//!
//! Leaves keep per-class weights and, for each candidate feature, one
//! Gaussian estimator per class. Once a leaf has seen `grace_period` new
//! weight, binary threshold splits are scored by information gain and the
//! leaf splits when the best candidate beats the runner-up by more than the
//! Hoeffding bound (or the bound falls under the tie threshold).
//!
//! With a nonzero subspace size every leaf draws its own random subset of
//! candidate features when it is created.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::stats::{entropy, normal_cdf};

/// `sqrt(R^2 ln(1/delta) / 2n)`.
pub fn hoeffding_bound(range: f64, delta: f64, n: f64) -> Result<f64> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::input(format!("range must be positive, got {range}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::input(format!("count must be positive, got {n}")));
    }
    Ok((range * range * (1.0 / delta).ln() / (2.0 * n)).sqrt())
}

/// Number of features each leaf considers for splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Subspace {
    /// Every feature.
    #[default]
    All,
    /// `round(sqrt(M)) + 1` of the `M` features.
    Sqrt,
    /// A fixed number of features; 0 means all.
    Fixed(usize),
}

impl Subspace {
    pub fn resolve(self, feature_count: usize) -> usize {
        let k = match self {
            Subspace::All | Subspace::Fixed(0) => feature_count,
            Subspace::Sqrt => (feature_count as f64).sqrt().round() as usize + 1,
            Subspace::Fixed(k) => k,
        };
        k.min(feature_count)
    }
}

/// How a leaf turns its statistics into a class vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafPrediction {
    /// Normalized class weights.
    #[default]
    MajorityClass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub grace_period: f64,
    pub split_confidence: f64,
    pub tie_threshold: f64,
    pub subspace: Subspace,
    pub leaf_prediction: LeafPrediction,
    /// Candidate thresholds per feature, evenly spaced over the observed range.
    pub split_points: usize,
    /// Minimum weight fraction both branches of a split must receive.
    pub min_branch_fraction: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            grace_period: 200.0,
            split_confidence: 1e-7,
            tie_threshold: 0.05,
            subspace: Subspace::All,
            leaf_prediction: LeafPrediction::MajorityClass,
            split_points: 10,
            min_branch_fraction: 0.01,
        }
    }
}

/// Weighted running mean and variance (West's update) with range tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEstimator {
    weight: f64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Default for GaussianEstimator {
    fn default() -> Self {
        GaussianEstimator {
            weight: 0.0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl GaussianEstimator {
    pub fn add(&mut self, value: f64, weight: f64) {
        let new_weight = self.weight + weight;
        let delta = value - self.mean;
        let r = delta * weight / new_weight;
        self.mean += r;
        self.m2 += self.weight * delta * r;
        self.weight = new_weight;
        self.min = self.min.min(value);
        self.max = self.max.max(value);
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased (frequency-weight) variance, 0 below two units of weight.
    pub fn variance(&self) -> f64 {
        if self.weight > 1.0 {
            (self.m2 / (self.weight - 1.0)).max(0.0)
        } else {
            0.0
        }
    }

    /// Estimated weight of observations `<= t`.
    fn weight_at_or_below(&self, t: f64) -> f64 {
        if self.weight <= 0.0 || t < self.min {
            return 0.0;
        }
        if t >= self.max {
            return self.weight;
        }
        let sd = self.variance().sqrt();
        if sd <= 0.0 {
            return if t >= self.mean { self.weight } else { 0.0 };
        }
        self.weight * normal_cdf((t - self.mean) / sd)
    }
}

#[derive(Debug, Clone)]
struct FeatureObserver {
    per_class: Vec<GaussianEstimator>,
}

impl FeatureObserver {
    fn new(classes: usize) -> Self {
        FeatureObserver {
            per_class: vec![GaussianEstimator::default(); classes],
        }
    }

    fn range(&self) -> Option<(f64, f64)> {
        let lo = self.per_class.iter().map(|g| g.min).fold(f64::INFINITY, f64::min);
        let hi = self
            .per_class
            .iter()
            .map(|g| g.max)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo < hi).then_some((lo, hi))
    }

    /// Best threshold and its gain, with the resulting branch class weights.
    fn best_split(
        &self,
        parent: &[f64],
        points: usize,
        min_frac: f64,
    ) -> Option<(f64, f64, Vec<f64>, Vec<f64>)> {
        let (lo, hi) = self.range()?;
        let parent_entropy = entropy(parent);
        let total: f64 = parent.iter().sum();
        let mut best: Option<(f64, f64, Vec<f64>, Vec<f64>)> = None;
        for i in 1..=points {
            let t = lo + (hi - lo) * i as f64 / (points + 1) as f64;
            let left: Vec<f64> = self.per_class.iter().map(|g| g.weight_at_or_below(t)).collect();
            let right: Vec<f64> = self
                .per_class
                .iter()
                .zip(&left)
                .map(|(g, l)| (g.weight - l).max(0.0))
                .collect();
            let wl: f64 = left.iter().sum();
            let wr: f64 = right.iter().sum();
            if wl < min_frac * total || wr < min_frac * total {
                continue;
            }
            let after = (wl * entropy(&left) + wr * entropy(&right)) / (wl + wr);
            let gain = parent_entropy - after;
            if best.as_ref().is_none_or(|b| gain > b.1) {
                best = Some((t, gain, left, right));
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
struct Leaf {
    class_weights: Vec<f64>,
    candidates: Vec<usize>,
    observers: Vec<FeatureObserver>,
    weight_at_last_attempt: f64,
}

impl Leaf {
    fn total(&self) -> f64 {
        self.class_weights.iter().sum()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Box<Leaf>),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        candidates: Vec<usize>,
    },
}

/// A split recorded in the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitInfo {
    pub feature: usize,
    pub threshold: f64,
    pub depth: usize,
    /// Candidate features the split leaf was allowed to use.
    pub candidates: Vec<usize>,
}

/// `(max depth, node count, leaf count)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepthStats {
    pub max_depth: usize,
    pub nodes: usize,
    pub leaves: usize,
}

/// `(feature, threshold, gain, left class weights, right class weights)`.
type SplitCandidate = (usize, f64, f64, Vec<f64>, Vec<f64>);

#[derive(Debug, Clone)]
pub struct HoeffdingTree {
    config: TreeConfig,
    class_count: usize,
    feature_count: usize,
    subspace_size: usize,
    nodes: Vec<Node>,
    depths: Vec<usize>,
    rng: ChaCha8Rng,
    seed: u64,
}

impl HoeffdingTree {
    pub fn new(config: TreeConfig, feature_count: usize, class_count: usize, seed: u64) -> Self {
        assert!(class_count >= 1, "a tree needs at least one class");
        let mut tree = HoeffdingTree {
            config,
            class_count,
            feature_count,
            subspace_size: config.subspace.resolve(feature_count),
            nodes: Vec::new(),
            depths: Vec::new(),
            rng: rng_from(seed),
            seed,
        };
        let root = tree.new_leaf(vec![0.0; class_count]);
        tree.nodes.push(Node::Leaf(Box::new(root)));
        tree.depths.push(0);
        tree
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn new_leaf(&mut self, class_weights: Vec<f64>) -> Leaf {
        let candidates: Vec<usize> = if self.subspace_size >= self.feature_count {
            (0..self.feature_count).collect()
        } else {
            let mut idx = sample(&mut self.rng, self.feature_count, self.subspace_size).into_vec();
            idx.sort_unstable();
            idx
        };
        let observers = candidates
            .iter()
            .map(|_| FeatureObserver::new(self.class_count))
            .collect();
        let weight_at_last_attempt = class_weights.iter().sum();
        Leaf {
            class_weights,
            candidates,
            observers,
            weight_at_last_attempt,
        }
    }

    fn check_arity(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_count {
            return Err(Error::input(format!(
                "tree expects {} features, got {}",
                self.feature_count,
                x.len()
            )));
        }
        Ok(())
    }

    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(_) => return idx,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    fn leaf(&self, idx: usize) -> &Leaf {
        match &self.nodes[idx] {
            Node::Leaf(l) => l,
            Node::Split { .. } => unreachable!("index routed to a leaf"),
        }
    }

    /// Class weights of the leaf `x` is routed to.
    pub fn leaf_class_weights(&self, x: &[f64]) -> Result<&[f64]> {
        self.check_arity(x)?;
        Ok(&self.leaf(self.leaf_index(x)).class_weights)
    }

    /// Trains on one observation with a positive weight.
    pub fn train(&mut self, x: &[f64], label: usize, weight: f64) -> Result<()> {
        self.check_arity(x)?;
        if label >= self.class_count {
            return Err(Error::input(format!(
                "label {label} not below class count {}",
                self.class_count
            )));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::input(format!("weight must be positive, got {weight}")));
        }
        let idx = self.leaf_index(x);
        let attempt = {
            let Node::Leaf(leaf) = &mut self.nodes[idx] else {
                unreachable!()
            };
            leaf.class_weights[label] += weight;
            for (obs, &f) in leaf.observers.iter_mut().zip(&leaf.candidates) {
                obs.per_class[label].add(x[f], weight);
            }
            leaf.total() - leaf.weight_at_last_attempt >= self.config.grace_period
        };
        if attempt {
            self.attempt_split(idx);
        }
        Ok(())
    }

    fn attempt_split(&mut self, idx: usize) {
        let config = self.config;
        let range = (self.class_count.max(2) as f64).log2();
        let decision = {
            let Node::Leaf(leaf) = &mut self.nodes[idx] else {
                unreachable!()
            };
            let total = leaf.total();
            leaf.weight_at_last_attempt = total;
            if leaf.class_weights.iter().filter(|&&w| w > 0.0).count() < 2 {
                return;
            }
            // the "no split" candidate has zero gain
            let mut best: Option<SplitCandidate> = None;
            let mut second_gain = 0.0f64;
            for (obs, &feature) in leaf.observers.iter().zip(&leaf.candidates) {
                let Some((t, gain, l, r)) = obs.best_split(
                    &leaf.class_weights,
                    config.split_points,
                    config.min_branch_fraction,
                ) else {
                    continue;
                };
                match &best {
                    Some(b) if gain <= b.2 => second_gain = second_gain.max(gain),
                    _ => {
                        if let Some(b) = &best {
                            second_gain = second_gain.max(b.2);
                        }
                        best = Some((feature, t, gain, l, r));
                    }
                }
            }
            let Some((feature, threshold, gain, left, right)) = best else {
                return;
            };
            let eps = hoeffding_bound(range, config.split_confidence, total).expect("positive leaf weight");
            if gain > 0.0 && (gain - second_gain > eps || eps < config.tie_threshold) {
                Some((feature, threshold, left, right, leaf.candidates.clone()))
            } else {
                None
            }
        };
        let Some((feature, threshold, left_w, right_w, candidates)) = decision else {
            return;
        };
        let depth = self.depths[idx] + 1;
        let left_leaf = self.new_leaf(left_w);
        let right_leaf = self.new_leaf(right_w);
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf(Box::new(left_leaf)));
        self.depths.push(depth);
        let right = self.nodes.len();
        self.nodes.push(Node::Leaf(Box::new(right_leaf)));
        self.depths.push(depth);
        self.nodes[idx] = Node::Split {
            feature,
            threshold,
            left,
            right,
            candidates,
        };
    }

    /// Normalized class weights at the routed leaf; uniform when empty.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_arity(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let leaf = self.leaf(self.leaf_index(x));
        match self.config.leaf_prediction {
            LeafPrediction::MajorityClass => {
                let total = leaf.total();
                if total > 0.0 {
                    leaf.class_weights.iter().map(|w| w / total).collect()
                } else {
                    vec![1.0 / self.class_count as f64; self.class_count]
                }
            }
        }
    }

    pub fn depth_stats(&self) -> DepthStats {
        let leaves = self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count();
        DepthStats {
            max_depth: self.depths.iter().copied().max().unwrap_or(0),
            nodes: self.nodes.len(),
            leaves,
        }
    }

    pub fn splits(&self) -> Vec<SplitInfo> {
        self.nodes
            .iter()
            .zip(&self.depths)
            .filter_map(|(n, &depth)| match n {
                Node::Split {
                    feature,
                    threshold,
                    candidates,
                    ..
                } => Some(SplitInfo {
                    feature: *feature,
                    threshold: *threshold,
                    depth,
                    candidates: candidates.clone(),
                }),
                Node::Leaf(_) => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn bound_matches_formula() {
        let e = hoeffding_bound(1.0, 1e-7, 200.0).unwrap();
        assert!((e - 0.200_74).abs() < 1e-5, "{e}");
        let q = hoeffding_bound(1.0, 1e-7, 800.0).unwrap();
        assert!((q - e / 2.0).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for n in [1.0, 10.0, 1e3, 1e6, 1e12] {
            let b = hoeffding_bound(2.0, 0.01, n).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn bound_domain_errors() {
        assert!(hoeffding_bound(0.0, 0.1, 10.0).is_err());
        assert!(hoeffding_bound(1.0, 0.0, 10.0).is_err());
        assert!(hoeffding_bound(1.0, 1.0, 10.0).is_err());
        assert!(hoeffding_bound(1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn empty_tree_is_uniform() {
        let t = HoeffdingTree::new(TreeConfig::default(), 3, 4, 0);
        assert_eq!(t.predict_proba(&[0.0, 1.0, 2.0]).unwrap(), vec![0.25; 4]);
        assert_eq!(
            t.depth_stats(),
            DepthStats {
                max_depth: 0,
                nodes: 1,
                leaves: 1
            }
        );
    }

    #[test]
    fn leaf_counts_normalize() {
        let mut t = HoeffdingTree::new(TreeConfig::default(), 1, 2, 0);
        for _ in 0..3 {
            t.train(&[0.0], 0, 1.0).unwrap();
        }
        t.train(&[0.0], 1, 1.0).unwrap();
        assert_eq!(t.predict_proba(&[0.0]).unwrap(), vec![0.75, 0.25]);
        assert_eq!(t.predict_proba(&[0.0]).unwrap(), t.predict_proba(&[0.0]).unwrap());
    }

    #[test]
    fn weight_is_additive() {
        let mut a = HoeffdingTree::new(TreeConfig::default(), 2, 2, 1);
        let mut b = HoeffdingTree::new(TreeConfig::default(), 2, 2, 1);
        a.train(&[0.3, 0.7], 1, 2.0).unwrap();
        b.train(&[0.3, 0.7], 1, 1.0).unwrap();
        b.train(&[0.3, 0.7], 1, 1.0).unwrap();
        assert_eq!(
            a.leaf_class_weights(&[0.3, 0.7]).unwrap(),
            b.leaf_class_weights(&[0.3, 0.7]).unwrap()
        );
    }

    #[test]
    fn arity_and_label_errors() {
        let mut t = HoeffdingTree::new(TreeConfig::default(), 2, 2, 0);
        assert!(t.train(&[0.0], 0, 1.0).is_err());
        assert!(t.train(&[0.0, 0.0], 2, 1.0).is_err());
        assert!(t.train(&[0.0, 0.0], 0, 0.0).is_err());
        assert!(t.predict_proba(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn gaussian_matches_two_pass() {
        let mut rng = rng_from(2);
        let values: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 10.0 - 3.0).collect();
        let mut g = GaussianEstimator::default();
        for &v in &values {
            g.add(v, 1.0);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((g.mean() - mean).abs() < 1e-9);
        assert!(((g.variance() - var) / var).abs() < 1e-6);
    }

    #[test]
    fn learns_threshold_and_keeps_structure() {
        let mut rng = rng_from(4);
        let mut t = HoeffdingTree::new(TreeConfig::default(), 1, 2, 0);
        for _ in 0..10_000 {
            let v: f64 = rng.random();
            t.train(&[v], usize::from(v > 0.5), 1.0).unwrap();
        }
        let splits = t.splits();
        assert!(
            splits.iter().any(|s| (s.threshold - 0.5).abs() <= 0.05),
            "{splits:?}"
        );
        let stats = t.depth_stats();
        assert_eq!(stats.nodes, 2 * stats.leaves - 1);
        assert!(stats.max_depth >= 1);
    }

    #[test]
    fn one_split_shape() {
        let mut rng = rng_from(8);
        let cfg = TreeConfig {
            grace_period: 5000.0,
            ..TreeConfig::default()
        };
        let mut t = HoeffdingTree::new(cfg, 1, 2, 0);
        for _ in 0..5000 {
            let v: f64 = rng.random();
            t.train(&[v], usize::from(v > 0.5), 1.0).unwrap();
        }
        assert_eq!(
            t.depth_stats(),
            DepthStats {
                max_depth: 1,
                nodes: 3,
                leaves: 2
            }
        );
    }

    #[test]
    fn subspace_sizes() {
        assert_eq!(Subspace::Sqrt.resolve(64), 9);
        assert_eq!(Subspace::Sqrt.resolve(4), 3);
        assert_eq!(Subspace::Sqrt.resolve(1), 1);
        assert_eq!(Subspace::Fixed(0).resolve(7), 7);
        assert_eq!(Subspace::Fixed(3).resolve(7), 3);
        assert_eq!(Subspace::All.resolve(7), 7);
    }
}
