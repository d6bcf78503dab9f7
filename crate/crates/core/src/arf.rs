//! Adaptive random forest: online-bagged Hoeffding trees with per-tree
//! warning and drift monitors and background-tree replacement.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::adwin::Adwin;
use crate::error::{Error, Result};
use crate::hoeffding::{DepthStats, HoeffdingTree, Subspace, TreeConfig};
use crate::seed::{derive_seed, rng_from};
use crate::vote::{argmax, weighted_average, WEIGHT_FLOOR};

/// Member trees default to a grace period of 50 and split confidence 0.01,
/// the usual settings for trees grown inside an adaptive random forest;
/// standalone trees keep the stricter [`TreeConfig`] defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    /// Poisson rate of the online bagging weights.
    pub lambda: f64,
    pub warning_delta: f64,
    pub drift_delta: f64,
    /// When off, trees are never replaced and no background trees grow.
    pub drift_detection: bool,
    /// Train trees on the rayon pool.
    pub parallel: bool,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 10,
            lambda: 6.0,
            warning_delta: 0.01,
            drift_delta: 0.001,
            drift_detection: true,
            parallel: false,
            tree: TreeConfig {
                grace_period: 50.0,
                split_confidence: 0.01,
                subspace: Subspace::Sqrt,
                ..TreeConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeEventKind {
    Warning,
    Replacement,
}

/// A monitor signal raised for one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeEvent {
    /// Zero-based count of training calls before this one.
    pub instance: u64,
    pub tree: usize,
    pub kind: TreeEventKind,
}

/// Poisson sampler for online bagging weights.
pub fn poisson_weight(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    let p = Poisson::new(lambda).expect("positive lambda");
    let w: f64 = p.sample(rng);
    w as u32
}

#[derive(Debug, Clone)]
struct TreeSlot {
    tree: HoeffdingTree,
    background: Option<HoeffdingTree>,
    accuracy: Adwin,
    warning: Adwin,
    drift: Adwin,
    rng: ChaCha8Rng,
    spawned: u64,
}

/// Feeds a score in [0, 1] and reports whether the window cut away an
/// older, better scoring segment.
fn accuracy_dropped(window: &mut Adwin, score: f64) -> bool {
    let before = window.estimate();
    window.add(score).expect("score in [0, 1]") && window.estimate() < before
}

impl TreeSlot {
    fn new(config: &ForestConfig, features: usize, classes: usize, seed: u64) -> Self {
        TreeSlot {
            tree: HoeffdingTree::new(config.tree, features, classes, derive_seed(seed, 0)),
            background: None,
            accuracy: Adwin::default(),
            warning: Adwin::with_delta(config.warning_delta),
            drift: Adwin::with_delta(config.drift_delta),
            rng: rng_from(derive_seed(seed, u64::MAX)),
            spawned: 0,
        }
    }

    fn spawn_tree(&mut self, seed: u64) -> HoeffdingTree {
        self.spawned += 1;
        HoeffdingTree::new(
            *self.tree.config(),
            self.tree.feature_count(),
            self.tree.class_count(),
            derive_seed(seed, self.spawned),
        )
    }

    /// Test-then-train over a group of instances sharing `label`; the
    /// monitors receive one observation, the fraction predicted correctly.
    fn train<X: AsRef<[f64]>>(
        &mut self,
        config: &ForestConfig,
        seed: u64,
        group: &[X],
        label: usize,
    ) -> (bool, bool) {
        let mut hits = 0usize;
        for x in group {
            let x = x.as_ref();
            if argmax(&self.tree.predict_unchecked(x)) == label {
                hits += 1;
            }
            let k = poisson_weight(&mut self.rng, config.lambda);
            if k > 0 {
                let w = f64::from(k);
                self.tree.train(x, label, w).expect("validated by the forest");
                if let Some(bg) = self.background.as_mut() {
                    bg.train(x, label, w).expect("validated by the forest");
                }
            }
        }
        let score = hits as f64 / group.len() as f64;
        self.accuracy.add(score).expect("score in [0, 1]");

        if !config.drift_detection {
            return (false, false);
        }
        let mut warned = false;
        if accuracy_dropped(&mut self.warning, score) {
            warned = true;
            let bg = self.spawn_tree(seed);
            self.background = Some(bg);
            self.warning.reset();
        }
        if accuracy_dropped(&mut self.drift, score) {
            let replacement = match self.background.take() {
                Some(bg) => bg,
                None => {
                    warned = true;
                    self.spawn_tree(seed)
                }
            };
            self.tree = replacement;
            self.accuracy.reset();
            self.warning.reset();
            self.drift.reset();
            return (warned, true);
        }
        (warned, false)
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveRandomForest {
    config: ForestConfig,
    feature_count: usize,
    class_count: usize,
    seed: u64,
    slots: Vec<TreeSlot>,
    seen: u64,
    events: Vec<TreeEvent>,
}

impl AdaptiveRandomForest {
    pub fn new(config: ForestConfig, feature_count: usize, class_count: usize, seed: u64) -> Self {
        assert!(config.trees >= 1, "a forest needs at least one tree");
        assert!(config.lambda > 0.0, "lambda must be positive");
        let slots = (0..config.trees)
            .map(|i| TreeSlot::new(&config, feature_count, class_count, derive_seed(seed, i as u64)))
            .collect();
        AdaptiveRandomForest {
            config,
            feature_count,
            class_count,
            seed,
            slots,
            seen: 0,
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_count {
            return Err(Error::input(format!(
                "forest expects {} features, got {}",
                self.feature_count,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn train(&mut self, x: &[f64], label: usize) -> Result<()> {
        self.train_group(&[x], label)
    }

    /// Trains every tree on each member of `group` in order. Drift
    /// monitors and vote weights see the group as a single observation:
    /// the fraction of members a tree classified correctly before learning
    /// them. Events count groups, not members.
    pub fn train_group<X: AsRef<[f64]> + Sync>(&mut self, group: &[X], label: usize) -> Result<()> {
        if group.is_empty() {
            return Err(Error::input("cannot train on an empty group"));
        }
        for x in group {
            self.check(x.as_ref())?;
        }
        if label >= self.class_count {
            return Err(Error::input(format!(
                "label {label} not below class count {}",
                self.class_count
            )));
        }
        let config = self.config;
        let base = self.seed;
        let signals: Vec<(bool, bool)> = if config.parallel && self.slots.len() > 1 {
            self.slots
                .par_iter_mut()
                .enumerate()
                .map(|(i, s)| s.train(&config, derive_seed(base, i as u64), group, label))
                .collect()
        } else {
            self.slots
                .iter_mut()
                .enumerate()
                .map(|(i, s)| s.train(&config, derive_seed(base, i as u64), group, label))
                .collect()
        };
        for (tree, (warned, replaced)) in signals.into_iter().enumerate() {
            if warned {
                self.events.push(TreeEvent {
                    instance: self.seen,
                    tree,
                    kind: TreeEventKind::Warning,
                });
            }
            if replaced {
                self.events.push(TreeEvent {
                    instance: self.seen,
                    tree,
                    kind: TreeEventKind::Replacement,
                });
            }
        }
        self.seen += 1;
        Ok(())
    }

    /// Current vote weight of every tree.
    pub fn tree_weights(&self) -> Vec<f64> {
        self.slots
            .iter()
            .map(|s| s.accuracy.estimate().max(WEIGHT_FLOOR))
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let votes: Vec<Vec<f64>> = self.slots.iter().map(|s| s.tree.predict_unchecked(x)).collect();
        weighted_average(votes.iter().map(Vec::as_slice), &self.tree_weights())
            .expect("floored weights and equal-length votes")
    }

    /// Re-creates every tree and monitor from the original seed.
    pub fn reset(&mut self) {
        *self = AdaptiveRandomForest::new(self.config, self.feature_count, self.class_count, self.seed);
    }

    pub fn depth_stats(&self) -> Vec<DepthStats> {
        self.slots.iter().map(|s| s.tree.depth_stats()).collect()
    }

    pub fn trees(&self) -> impl Iterator<Item = &HoeffdingTree> {
        self.slots.iter().map(|s| &s.tree)
    }

    pub fn has_background(&self, tree: usize) -> bool {
        self.slots[tree].background.is_some()
    }

    pub fn events(&self) -> &[TreeEvent] {
        &self.events
    }

    pub fn replacements(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == TreeEventKind::Replacement)
            .count()
    }

    pub fn instances_seen(&self) -> u64 {
        self.seen
    }
}
