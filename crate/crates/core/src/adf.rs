//! Adaptive deep forest.
//!
//! An input layer of `d` sublayers turns disjoint scanning windows of the
//! (zero padded) instance into per-depth class-vector representations. A
//! cascade of `d` sublayers consumes, in order, the previous sublayer's
//! output, the representation for its depth and optionally the original
//! instance. Every cascade sublayer carries an ADWIN accuracy weight and
//! each of its forests another one; the output of the sublayer with the
//! best weight, aggregated by forest weights, is the prediction.
//!
//! Depth indices in this module are 0-based: sublayer `i` here is depth
//! `i + 1` in the usual 1-based numbering, so depth 0 holds the finest
//! windows.
//!
//! With `carf` set the input layer is absent and every cascade sublayer
//! sees the original instance.

use rayon::prelude::*;
use serde::Serialize;

use crate::adwin::{Adwin, AdwinConfig};
use crate::arf::{AdaptiveRandomForest, ForestConfig};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::stream::{pad_instance, Instance, Shape};
use crate::vote::{aggregate_output, argmax, floored};

#[derive(Debug, Clone, PartialEq)]
pub struct AdfConfig {
    /// Number of input and cascade sublayers.
    pub depth: usize,
    /// Forests per input sublayer.
    pub input_forests: usize,
    /// Forests per cascade sublayer.
    pub cascade_forests: usize,
    pub forest: ForestConfig,
    /// Append the original instance to cascade sublayers after the first.
    pub append_original_inner: bool,
    pub carf: bool,
    pub class_count: usize,
    /// Shape of incoming (unpadded) instances.
    pub shape: Shape,
    pub seed: u64,
    /// ADWIN confidence of the sublayer and forest weights.
    pub weight_delta: f64,
    /// Spread forest work of one call over the rayon pool.
    pub parallel: bool,
}

impl AdfConfig {
    /// Defaults by input kind: images get depth 4 with 25 trees, long
    /// vectors depth 5 (4 under 256 features) with 40 trees, and inputs of
    /// at most 32 features depth 2. Two forests per sublayer; depth is
    /// capped so the finest window keeps at least one value.
    pub fn for_stream(shape: Shape, class_count: usize) -> AdfConfig {
        let (depth, trees) = match shape {
            Shape::Mat(_) => (4, 25),
            Shape::Vec(l) if l >= 256 => (5, 40),
            Shape::Vec(l) if l > 32 => (4, 40),
            Shape::Vec(_) => (2, 40),
        };
        let max_depth = shape.padded().extent().trailing_zeros() as usize;
        AdfConfig {
            depth: depth.min(max_depth).max(1),
            input_forests: 2,
            cascade_forests: 2,
            forest: ForestConfig {
                trees,
                ..ForestConfig::default()
            },
            append_original_inner: false,
            carf: false,
            class_count,
            shape,
            seed: 1,
            weight_delta: AdwinConfig::default().delta,
            parallel: true,
        }
    }

    /// The same settings as a cascade-only model.
    pub fn into_carf(mut self) -> AdfConfig {
        self.carf = true;
        self.append_original_inner = true;
        self
    }

    pub fn padded_shape(&self) -> Shape {
        self.shape.padded()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("depth must be at least 1"));
        }
        if self.class_count == 0 {
            return Err(Error::config("class count must be positive"));
        }
        if self.cascade_forests == 0 || (!self.carf && self.input_forests == 0) {
            return Err(Error::config("sublayers need at least one forest"));
        }
        if self.forest.trees == 0 {
            return Err(Error::config("forests need at least one tree"));
        }
        if self.shape.is_empty() {
            return Err(Error::config("input shape has no features"));
        }
        let extent = self.padded_shape().extent();
        let scale = 1usize.checked_shl(self.depth as u32).unwrap_or(usize::MAX);
        if !self.carf && extent / scale < 1 {
            return Err(Error::config(format!(
                "depth {} leaves scanning windows below one value for {}",
                self.depth,
                self.padded_shape()
            )));
        }
        if !(self.weight_delta > 0.0 && self.weight_delta < 1.0) {
            return Err(Error::config("weight delta must lie in (0, 1)"));
        }
        Ok(())
    }

    fn divisions(&self, sublayer: usize) -> usize {
        1 << (self.depth - sublayer)
    }

    /// Subinstances produced at `sublayer`: `2^(D (d - i + 1))`.
    pub fn subinstance_count(&self, sublayer: usize) -> usize {
        self.divisions(sublayer).pow(self.shape.dims() as u32)
    }

    /// Window length (vectors) or tile side (matrices) at `sublayer`.
    pub fn window_extent(&self, sublayer: usize) -> usize {
        self.padded_shape().extent() / self.divisions(sublayer)
    }

    /// Number of values in one subinstance at `sublayer`.
    pub fn window_len(&self, sublayer: usize) -> usize {
        self.window_extent(sublayer).pow(self.shape.dims() as u32)
    }

    /// `|R_i| = |X_i| c n`, zero in cascade-only mode.
    pub fn representation_len(&self, sublayer: usize) -> usize {
        if self.carf {
            0
        } else {
            self.subinstance_count(sublayer) * self.class_count * self.input_forests
        }
    }

    pub fn appends_original(&self, sublayer: usize) -> bool {
        sublayer == 0 || self.append_original_inner || self.carf
    }

    /// `|x_in| = c m [i > 1] + |R_i| + |X| [appended]`.
    pub fn cascade_input_len(&self, sublayer: usize) -> usize {
        let previous = if sublayer > 0 {
            self.class_count * self.cascade_forests
        } else {
            0
        };
        let original = if self.appends_original(sublayer) {
            self.padded_shape().len()
        } else {
            0
        };
        previous + self.representation_len(sublayer) + original
    }
}

/// Cuts a padded instance into the disjoint windows of every depth.
///
/// Entry `i` of the result lists the subinstances of sublayer `i` in scan
/// order: consecutive windows for vectors, row-major tiles (each flattened
/// row-major) for matrices.
pub fn scan(x: &Instance, depth: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let extent = x.shape.extent();
    if !extent.is_power_of_two() {
        return Err(Error::config(format!(
            "scan needs a padded instance, got {}",
            x.shape
        )));
    }
    if depth == 0 || depth as u32 > extent.trailing_zeros() {
        return Err(Error::config(format!(
            "depth {depth} gives windows below one value for {}",
            x.shape
        )));
    }
    Ok((0..depth)
        .map(|i| {
            let parts = 1usize << (depth - i);
            let size = extent / parts;
            match x.shape {
                Shape::Vec(_) => x.features.chunks(size).map(<[f64]>::to_vec).collect(),
                Shape::Mat(side) => {
                    let mut tiles = Vec::with_capacity(parts * parts);
                    for tr in 0..parts {
                        for tc in 0..parts {
                            let mut tile = Vec::with_capacity(size * size);
                            for r in 0..size {
                                let start = (tr * size + r) * side + tc * size;
                                tile.extend_from_slice(&x.features[start..start + size]);
                            }
                            tiles.push(tile);
                        }
                    }
                    tiles
                }
            }
        })
        .collect())
}

/// Concatenates the pieces a cascade sublayer consumes.
pub fn cascade_input(previous: &[f64], representation: &[f64], original: Option<&[f64]>) -> Vec<f64> {
    let mut out =
        Vec::with_capacity(previous.len() + representation.len() + original.map_or(0, <[f64]>::len));
    out.extend_from_slice(previous);
    out.extend_from_slice(representation);
    if let Some(x) = original {
        out.extend_from_slice(x);
    }
    out
}

/// Index of the best sublayer weight. Only a strictly larger weight
/// replaces the current best, so the shallowest sublayer wins ties.
pub fn select_depth(alphas: &[f64]) -> usize {
    let mut best = 0;
    let mut best_alpha = f64::NEG_INFINITY;
    for (i, &a) in alphas.iter().enumerate() {
        if a > best_alpha {
            best = i;
            best_alpha = a;
        }
    }
    best
}

/// Everything one prediction computes, kept for training and inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub padded: Vec<f64>,
    /// Subinstances per depth (empty in cascade-only mode).
    pub subinstances: Vec<Vec<Vec<f64>>>,
    /// Depth representations `R_i`.
    pub representations: Vec<Vec<f64>>,
    /// Input of every cascade sublayer.
    pub cascade_inputs: Vec<Vec<f64>>,
    /// Class vector of every cascade forest, per sublayer.
    pub forest_outputs: Vec<Vec<Vec<f64>>>,
    /// Concatenated forest outputs `y_i` per sublayer.
    pub sublayer_outputs: Vec<Vec<f64>>,
    /// Weight-aggregated class vector per sublayer.
    pub sublayer_predictions: Vec<Vec<f64>>,
    /// Sublayer weights the selection used.
    pub alphas: Vec<f64>,
    pub best: usize,
    pub prediction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdfModel {
    config: AdfConfig,
    input: Vec<Vec<AdaptiveRandomForest>>,
    cascade: Vec<Vec<AdaptiveRandomForest>>,
    alpha: Vec<Adwin>,
    beta: Vec<Vec<Adwin>>,
}

impl AdfModel {
    pub fn new(config: AdfConfig) -> Result<Self> {
        config.validate()?;
        let c = config.class_count;
        let input_seed = derive_seed(config.seed, 1);
        let cascade_seed = derive_seed(config.seed, 2);
        let input = if config.carf {
            Vec::new()
        } else {
            (0..config.depth)
                .map(|i| {
                    (0..config.input_forests)
                        .map(|j| {
                            AdaptiveRandomForest::new(
                                config.forest,
                                config.window_len(i),
                                c,
                                derive_seed(input_seed, (i * config.input_forests + j) as u64),
                            )
                        })
                        .collect()
                })
                .collect()
        };
        let cascade = (0..config.depth)
            .map(|i| {
                (0..config.cascade_forests)
                    .map(|j| {
                        AdaptiveRandomForest::new(
                            config.forest,
                            config.cascade_input_len(i),
                            c,
                            derive_seed(cascade_seed, (i * config.cascade_forests + j) as u64),
                        )
                    })
                    .collect()
            })
            .collect();
        let weights = AdwinConfig::with_delta(config.weight_delta);
        Ok(AdfModel {
            alpha: (0..config.depth).map(|_| Adwin::new(weights)).collect(),
            beta: (0..config.depth)
                .map(|_| (0..config.cascade_forests).map(|_| Adwin::new(weights)).collect())
                .collect(),
            config,
            input,
            cascade,
        })
    }

    pub fn config(&self) -> &AdfConfig {
        &self.config
    }

    pub fn alpha_estimates(&self) -> Vec<f64> {
        self.alpha.iter().map(Adwin::estimate).collect()
    }

    pub fn beta_estimates(&self, sublayer: usize) -> Vec<f64> {
        self.beta[sublayer].iter().map(Adwin::estimate).collect()
    }

    pub fn alpha_windows(&self) -> &[Adwin] {
        &self.alpha
    }

    pub fn beta_windows(&self) -> &[Vec<Adwin>] {
        &self.beta
    }

    pub fn input_layer(&self) -> &[Vec<AdaptiveRandomForest>] {
        &self.input
    }

    pub fn cascade_layer(&self) -> &[Vec<AdaptiveRandomForest>] {
        &self.cascade
    }

    fn padded(&self, x: &Instance) -> Result<Instance> {
        if x.shape != self.config.shape || x.features.len() != x.shape.len() {
            return Err(Error::input(format!(
                "model expects {}, got {}",
                self.config.shape, x.shape
            )));
        }
        Ok(pad_instance(x))
    }

    /// Depth representations of a padded instance's subinstances.
    pub fn input_layer_transform(&self, subinstances: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
        if self.config.carf {
            return Err(Error::config("cascade-only model has no input layer"));
        }
        if subinstances.len() != self.config.depth {
            return Err(Error::input("subinstance sets do not match model depth"));
        }
        let n = self.config.input_forests;
        Ok(subinstances
            .iter()
            .zip(&self.input)
            .map(|(windows, forests)| {
                let predict = |k: usize| forests[k % n].predict_unchecked(&windows[k / n]);
                let vectors: Vec<Vec<f64>> = if self.config.parallel {
                    (0..windows.len() * n).into_par_iter().map(predict).collect()
                } else {
                    (0..windows.len() * n).map(predict).collect()
                };
                vectors.concat()
            })
            .collect())
    }

    /// Runs the cascade on a padded instance and its representations.
    fn cascade_forward(&self, original: &[f64], representations: &[Vec<f64>]) -> ForwardPass {
        let c = self.config.class_count;
        let mut cascade_inputs = Vec::with_capacity(self.config.depth);
        let mut forest_outputs = Vec::with_capacity(self.config.depth);
        let mut sublayer_outputs: Vec<Vec<f64>> = Vec::with_capacity(self.config.depth);
        let mut sublayer_predictions = Vec::with_capacity(self.config.depth);
        for (i, forests) in self.cascade.iter().enumerate() {
            let previous = sublayer_outputs.last().map_or(&[][..], Vec::as_slice);
            let representation = representations.get(i).map_or(&[][..], Vec::as_slice);
            let x_in = cascade_input(
                previous,
                representation,
                self.config.appends_original(i).then_some(original),
            );
            let outputs: Vec<Vec<f64>> = if self.config.parallel {
                forests.par_iter().map(|f| f.predict_unchecked(&x_in)).collect()
            } else {
                forests.iter().map(|f| f.predict_unchecked(&x_in)).collect()
            };
            let y = outputs.concat();
            let betas = floored(self.beta[i].iter().map(Adwin::estimate));
            sublayer_predictions.push(aggregate_output(&y, &betas, c).expect("floored betas, full output"));
            cascade_inputs.push(x_in);
            forest_outputs.push(outputs);
            sublayer_outputs.push(y);
        }
        let alphas = self.alpha_estimates();
        let best = select_depth(&alphas);
        ForwardPass {
            padded: original.to_vec(),
            subinstances: Vec::new(),
            representations: representations.to_vec(),
            prediction: sublayer_predictions[best].clone(),
            cascade_inputs,
            forest_outputs,
            sublayer_outputs,
            sublayer_predictions,
            alphas,
            best,
        }
    }

    /// Full forward pass on the current state; pure.
    pub fn forward(&self, x: &Instance) -> Result<ForwardPass> {
        let padded = self.padded(x)?;
        if self.config.carf {
            return Ok(self.cascade_forward(&padded.features, &[]));
        }
        let subinstances = scan(&padded, self.config.depth)?;
        let representations = self.input_layer_transform(&subinstances)?;
        let mut pass = self.cascade_forward(&padded.features, &representations);
        pass.subinstances = subinstances;
        Ok(pass)
    }

    pub fn predict(&self, x: &Instance) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.prediction)
    }

    pub fn train(&mut self, x: &Instance) -> Result<()> {
        self.train_traced(x).map(|_| ())
    }

    /// Test-then-train step; returns the forward pass computed on the
    /// state before the update.
    pub fn train_traced(&mut self, x: &Instance) -> Result<ForwardPass> {
        let label = x.label;
        if label >= self.config.class_count {
            return Err(Error::input(format!(
                "label {label} not below class count {}",
                self.config.class_count
            )));
        }
        let pass = self.forward(x)?;

        for (i, prediction) in pass.sublayer_predictions.iter().enumerate() {
            self.alpha[i].add_bool(argmax(prediction) == label);
        }
        for (windows, outputs) in self.beta.iter_mut().zip(&pass.forest_outputs) {
            for (w, out) in windows.iter_mut().zip(outputs) {
                w.add_bool(argmax(out) == label);
            }
        }

        let subinstances = &pass.subinstances;
        let cascade_inputs = &pass.cascade_inputs;
        let train_input = |(i, forest): (usize, &mut AdaptiveRandomForest)| -> Result<()> {
            forest.train_group(&subinstances[i], label)
        };
        let train_cascade =
            |(i, forest): (usize, &mut AdaptiveRandomForest)| forest.train(&cascade_inputs[i], label);
        if self.config.parallel {
            let input = self
                .input
                .par_iter_mut()
                .enumerate()
                .flat_map(|(i, layer)| layer.par_iter_mut().map(move |f| (i, f)))
                .map(train_input);
            let cascade = self
                .cascade
                .par_iter_mut()
                .enumerate()
                .flat_map(|(i, layer)| layer.par_iter_mut().map(move |f| (i, f)))
                .map(train_cascade);
            let (a, b): (Result<()>, Result<()>) = rayon::join(|| input.collect(), || cascade.collect());
            a?;
            b?;
        } else {
            for (i, layer) in self.input.iter_mut().enumerate() {
                for f in layer {
                    train_input((i, f))?;
                }
            }
            for (i, layer) in self.cascade.iter_mut().enumerate() {
                for f in layer {
                    train_cascade((i, f))?;
                }
            }
        }
        Ok(pass)
    }

    /// Mean tree depth per sublayer: input sublayers first, then cascade.
    pub fn depth_report(&self) -> DepthReport {
        let mean_depth = |forests: &Vec<AdaptiveRandomForest>| {
            let depths: Vec<usize> = forests
                .iter()
                .flat_map(|f| f.depth_stats().into_iter().map(|d| d.max_depth))
                .collect();
            if depths.is_empty() {
                0.0
            } else {
                depths.iter().sum::<usize>() as f64 / depths.len() as f64
            }
        };
        DepthReport {
            input: self.input.iter().map(mean_depth).collect(),
            cascade: self.cascade.iter().map(mean_depth).collect(),
        }
    }

    /// Tree replacements summed over every forest.
    pub fn replacements(&self) -> usize {
        self.input
            .iter()
            .chain(&self.cascade)
            .flatten()
            .map(AdaptiveRandomForest::replacements)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthReport {
    pub input: Vec<f64>,
    pub cascade: Vec<f64>,
}

impl DepthReport {
    /// All entries, input sublayers first.
    pub fn entries(&self) -> Vec<f64> {
        self.input.iter().chain(&self.cascade).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.input.len() + self.cascade.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(shape: Shape, depth: usize) -> AdfConfig {
        AdfConfig {
            depth,
            input_forests: 2,
            cascade_forests: 2,
            forest: ForestConfig {
                trees: 2,
                ..ForestConfig::default()
            },
            parallel: false,
            ..AdfConfig::for_stream(shape, 3)
        }
    }

    #[test]
    fn image_input_sizes() {
        let cfg = AdfConfig {
            depth: 3,
            input_forests: 20,
            ..AdfConfig::for_stream(Shape::Mat(32), 10)
        };
        let sizes: Vec<usize> = (0..3).map(|i| cfg.representation_len(i)).collect();
        assert_eq!(sizes, vec![12800, 3200, 800]);
        let counts: Vec<usize> = (0..3).map(|i| cfg.subinstance_count(i)).collect();
        assert_eq!(counts, vec![64, 16, 4]);
    }

    #[test]
    fn scan_vector_halves() {
        let x = Instance::vector((0..16).map(f64::from).collect(), 0);
        let sets = scan(&x, 1).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0], vec![x.features[..8].to_vec(), x.features[8..].to_vec()]);
    }

    #[test]
    fn scan_padded_text_windows() {
        let x = pad_instance(&Instance::vector(vec![1.0; 1000], 0));
        let sets = scan(&x, 5).unwrap();
        assert_eq!(sets[0].len(), 32);
        assert!(sets[0].iter().all(|w| w.len() == 32));
        let last = &sets[0][31];
        assert!(last[..8].iter().all(|&v| v == 1.0));
        assert!(last[8..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scan_matrix_tiles() {
        let side = 4;
        let x = Instance::new((0..16).map(f64::from).collect(), Shape::Mat(side), 0).unwrap();
        let sets = scan(&x, 1).unwrap();
        assert_eq!(
            sets[0],
            vec![
                vec![0.0, 1.0, 4.0, 5.0],
                vec![2.0, 3.0, 6.0, 7.0],
                vec![8.0, 9.0, 12.0, 13.0],
                vec![10.0, 11.0, 14.0, 15.0],
            ]
        );
        assert!(scan(&x, 3).is_err());
        let odd = Instance::vector(vec![0.0; 12], 0);
        assert!(scan(&odd, 1).is_err());
    }

    #[test]
    fn depth_selection_prefers_shallow_ties() {
        assert_eq!(select_depth(&[0.5, 0.9, 0.7]), 1);
        assert_eq!(select_depth(&[0.0, 0.0]), 0);
        assert_eq!(select_depth(&[0.3, 0.8, 0.8]), 1);
    }

    #[test]
    fn fresh_model_predicts_uniform() {
        let m = AdfModel::new(small(Shape::Mat(8), 2)).unwrap();
        let x = Instance::new(vec![0.5; 64], Shape::Mat(8), 1).unwrap();
        let pass = m.forward(&x).unwrap();
        for r in &pass.representations {
            for slice in r.chunks(3) {
                assert!(slice.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));
            }
        }
        assert!(pass.prediction.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
    }

    #[test]
    fn input_sizes_match_formulas() {
        let cfg = small(Shape::Vec(20), 2);
        let m = AdfModel::new(cfg.clone()).unwrap();
        let x = Instance::vector(vec![0.1; 20], 0);
        let pass = m.forward(&x).unwrap();
        assert_eq!(pass.padded.len(), 32);
        for i in 0..2 {
            assert_eq!(pass.representations[i].len(), cfg.representation_len(i));
            assert_eq!(pass.cascade_inputs[i].len(), cfg.cascade_input_len(i));
        }
        assert_eq!(pass.cascade_inputs[0].len(), pass.representations[0].len() + 32);
    }

    #[test]
    fn train_updates_every_weight_once() {
        let mut m = AdfModel::new(small(Shape::Vec(8), 2)).unwrap();
        m.train(&Instance::vector(vec![0.2; 8], 1)).unwrap();
        assert!(m.alpha_windows().iter().all(|w| w.width() == 1));
        assert!(m.beta_windows().iter().flatten().all(|w| w.width() == 1));
        assert!(m.train(&Instance::vector(vec![0.2; 8], 3)).is_err());
        assert!(m.predict(&Instance::vector(vec![0.2; 9], 1)).is_err());
    }

    #[test]
    fn carf_has_no_input_layer() {
        let cfg = small(Shape::Vec(8), 3).into_carf();
        let mut m = AdfModel::new(cfg).unwrap();
        assert!(m.input_layer().is_empty());
        let x = Instance::vector((0..8).map(f64::from).collect(), 2);
        let pass = m.train_traced(&x).unwrap();
        assert!(pass.subinstances.is_empty());
        assert_eq!(pass.cascade_inputs[0], x.features);
        for i in 1..3 {
            assert_eq!(
                pass.cascade_inputs[i],
                cascade_input(&pass.sublayer_outputs[i - 1], &[], Some(&x.features))
            );
        }
        assert_eq!(m.depth_report().len(), 3);
        assert!(m.input_layer().is_empty());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(Shape::Vec(4), 3);
        assert!(AdfModel::new(cfg.clone()).is_err());
        cfg.depth = 0;
        assert!(AdfModel::new(cfg).is_err());
    }

    #[test]
    fn default_depths() {
        assert_eq!(AdfConfig::for_stream(Shape::Mat(28), 10).depth, 4);
        assert_eq!(AdfConfig::for_stream(Shape::Vec(1000), 10).depth, 5);
        assert_eq!(AdfConfig::for_stream(Shape::Vec(60), 10).depth, 4);
        assert_eq!(AdfConfig::for_stream(Shape::Vec(10), 2).depth, 2);
        assert_eq!(AdfConfig::for_stream(Shape::Mat(8), 10).depth, 3);
        assert!(!AdfConfig::for_stream(Shape::Mat(8), 10).append_original_inner);
    }
}
