//! Prequential evaluation, agreement metrics and rank statistics.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::adf::AdfModel;
use crate::adwin::Adwin;
use crate::arf::AdaptiveRandomForest;
use crate::error::{Error, Result};
use crate::hoeffding::HoeffdingTree;
use crate::stats::normal_quantile;
use crate::stream::{Instance, Stream, StreamMeta};
use crate::vote::argmax;

/// Anything that can be evaluated test-then-train.
pub trait Learner {
    fn class_count(&self) -> usize;

    /// Errors when instances of `meta` cannot be consumed.
    fn check_stream(&self, meta: &StreamMeta) -> Result<()>;

    fn predict_proba(&self, x: &Instance) -> Result<Vec<f64>>;

    fn train(&mut self, x: &Instance) -> Result<()>;
}

fn flat_check(expected_features: usize, classes: usize, meta: &StreamMeta) -> Result<()> {
    if meta.shape.len() != expected_features {
        return Err(Error::config(format!(
            "learner expects {expected_features} features, stream has {}",
            meta.shape.len()
        )));
    }
    if meta.class_count != classes {
        return Err(Error::config(format!(
            "learner has {classes} classes, stream has {}",
            meta.class_count
        )));
    }
    Ok(())
}

impl Learner for HoeffdingTree {
    fn class_count(&self) -> usize {
        HoeffdingTree::class_count(self)
    }

    fn check_stream(&self, meta: &StreamMeta) -> Result<()> {
        flat_check(self.feature_count(), HoeffdingTree::class_count(self), meta)
    }

    fn predict_proba(&self, x: &Instance) -> Result<Vec<f64>> {
        HoeffdingTree::predict_proba(self, &x.features)
    }

    fn train(&mut self, x: &Instance) -> Result<()> {
        HoeffdingTree::train(self, &x.features, x.label, 1.0)
    }
}

impl Learner for AdaptiveRandomForest {
    fn class_count(&self) -> usize {
        AdaptiveRandomForest::class_count(self)
    }

    fn check_stream(&self, meta: &StreamMeta) -> Result<()> {
        flat_check(
            self.feature_count(),
            AdaptiveRandomForest::class_count(self),
            meta,
        )
    }

    fn predict_proba(&self, x: &Instance) -> Result<Vec<f64>> {
        AdaptiveRandomForest::predict_proba(self, &x.features)
    }

    fn train(&mut self, x: &Instance) -> Result<()> {
        AdaptiveRandomForest::train(self, &x.features, x.label)
    }
}

impl Learner for AdfModel {
    fn class_count(&self) -> usize {
        self.config().class_count
    }

    fn check_stream(&self, meta: &StreamMeta) -> Result<()> {
        let cfg = self.config();
        if meta.shape != cfg.shape || meta.class_count != cfg.class_count {
            return Err(Error::config(format!(
                "model expects {} classes / {}, stream has {} / {}",
                cfg.class_count, cfg.shape, meta.class_count, meta.shape
            )));
        }
        Ok(())
    }

    fn predict_proba(&self, x: &Instance) -> Result<Vec<f64>> {
        self.predict(x)
    }

    fn train(&mut self, x: &Instance) -> Result<()> {
        AdfModel::train(self, x)
    }
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn class_count(&self) -> usize {
        (**self).class_count()
    }

    fn check_stream(&self, meta: &StreamMeta) -> Result<()> {
        (**self).check_stream(meta)
    }

    fn predict_proba(&self, x: &Instance) -> Result<Vec<f64>> {
        (**self).predict_proba(x)
    }

    fn train(&mut self, x: &Instance) -> Result<()> {
        (**self).train(x)
    }
}

/// Counts indexed `[true label][predicted label]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    cells: Vec<u64>,
    total: u64,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            cells: vec![0; classes * classes],
            total: 0,
        }
    }

    /// Builds a matrix from rows of counts (row = true class).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        let mut cm = ConfusionMatrix::new(classes);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != classes {
                return Err(Error::input("confusion matrix must be square"));
            }
            for (p, &n) in row.iter().enumerate() {
                cm.cells[t * classes + p] = n;
                cm.total += n;
            }
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.cells[truth * self.classes + predicted] += 1;
        self.total += 1;
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.cells[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.trace() as f64 / self.total as f64
        }
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        (0..self.classes).map(|p| self.get(k, p)).sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, k)).sum()
    }
}

/// Cohen's kappa of a confusion matrix; 0 when chance agreement is total.
///
/// Evaluated as `(N trace - S) / (N^2 - S)` with `S = sum_k row_k col_k`
/// in integers, so the only rounding is the final division.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::input("kappa of an empty confusion matrix"));
    }
    let n = u128::from(cm.total());
    let chance: u128 = (0..cm.classes())
        .map(|k| u128::from(cm.row_sum(k)) * u128::from(cm.col_sum(k)))
        .sum();
    let denominator = n * n - chance;
    if denominator == 0 {
        return Ok(0.0);
    }
    let numerator = n as i128 * u128::from(cm.trace()) as i128 - chance as i128;
    Ok(numerator as f64 / denominator as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrequentialRecord {
    /// Zero-based index of the instance that triggered the emission.
    pub index: u64,
    pub windowed_accuracy: f64,
    pub cumulative_accuracy: f64,
    pub predicted: usize,
    pub truth: usize,
    /// Cumulative training time in milliseconds.
    pub update_ms: f64,
    /// Cumulative prediction time in milliseconds.
    pub predict_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PrequentialOptions {
    pub emit_every: usize,
    /// Measure wall-clock time; when off every timing reads zero.
    pub timing: bool,
}

impl Default for PrequentialOptions {
    fn default() -> Self {
        PrequentialOptions {
            emit_every: 100,
            timing: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrequentialOutcome {
    pub confusion: ConfusionMatrix,
    pub records: Vec<PrequentialRecord>,
    pub update_ms: f64,
    pub predict_ms: f64,
}

impl PrequentialOutcome {
    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }

    pub fn kappa(&self) -> f64 {
        kappa(&self.confusion).unwrap_or(0.0)
    }

    pub fn instances(&self) -> u64 {
        self.confusion.total()
    }
}

fn millis(d: Duration) -> f64 {
    d.as_nanos() as f64 / 1e6
}

/// Test-then-train over the whole stream.
pub fn run_prequential<L: Learner + ?Sized>(
    learner: &mut L,
    stream: Stream,
    options: &PrequentialOptions,
) -> Result<PrequentialOutcome> {
    let meta = stream.meta();
    learner.check_stream(&meta)?;
    if options.emit_every == 0 {
        return Err(Error::config("emit_every must be positive"));
    }
    let mut confusion = ConfusionMatrix::new(meta.class_count);
    let mut window = Adwin::default();
    let mut records = Vec::new();
    let mut update = Duration::ZERO;
    let mut predict = Duration::ZERO;
    let mut last: Option<(u64, usize, usize)> = None;
    let mut emitted_last = false;
    let timed = |f: &mut dyn FnMut() -> Result<()>, acc: &mut Duration| -> Result<()> {
        if options.timing {
            let start = Instant::now();
            f()?;
            *acc += start.elapsed();
            Ok(())
        } else {
            f()
        }
    };

    for (idx, x) in stream.enumerate() {
        if x.label >= meta.class_count {
            return Err(Error::input(format!(
                "instance {idx}: label {} not below class count {}",
                x.label, meta.class_count
            )));
        }
        let mut proba = Vec::new();
        timed(
            &mut || {
                proba = learner.predict_proba(&x)?;
                Ok(())
            },
            &mut predict,
        )?;
        let predicted = argmax(&proba);
        confusion.record(x.label, predicted);
        window.add_bool(predicted == x.label);
        timed(&mut || learner.train(&x), &mut update)?;

        last = Some((idx as u64, predicted, x.label));
        emitted_last = false;
        if (idx + 1) % options.emit_every == 0 {
            records.push(PrequentialRecord {
                index: idx as u64,
                windowed_accuracy: window.estimate(),
                cumulative_accuracy: confusion.accuracy(),
                predicted,
                truth: x.label,
                update_ms: millis(update),
                predict_ms: millis(predict),
            });
            emitted_last = true;
        }
    }
    if let (Some((index, predicted, truth)), false) = (last, emitted_last) {
        records.push(PrequentialRecord {
            index,
            windowed_accuracy: window.estimate(),
            cumulative_accuracy: confusion.accuracy(),
            predicted,
            truth,
            update_ms: millis(update),
            predict_ms: millis(predict),
        });
    }
    Ok(PrequentialOutcome {
        confusion,
        records,
        update_ms: millis(update),
        predict_ms: millis(predict),
    })
}

/// ADWIN mean after each correctness value.
pub fn windowed_series(correct: impl IntoIterator<Item = bool>) -> Vec<f64> {
    let mut window = Adwin::default();
    correct
        .into_iter()
        .map(|c| {
            window.add_bool(c);
            window.estimate()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSummary {
    pub algorithms: Vec<String>,
    pub average_ranks: Vec<f64>,
    pub streams: usize,
}

impl RankSummary {
    pub fn algorithm_count(&self) -> usize {
        self.algorithms.len()
    }
}

/// Ranks of one column; ties share the mean of the positions they span.
pub fn rank_column(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        if higher_is_better {
            ord.reverse()
        } else {
            ord
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let shared = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = shared;
        }
        start = end;
    }
    ranks
}

/// Average ranks over streams. `scores[a][s]` is algorithm `a` on stream
/// `s`; a `None` cell is an error naming the hole.
pub fn average_ranks(
    algorithms: &[String],
    scores: &[Vec<Option<f64>>],
    higher_is_better: bool,
) -> Result<RankSummary> {
    if algorithms.len() != scores.len() || algorithms.is_empty() {
        return Err(Error::input("one score row per algorithm is required"));
    }
    let streams = scores[0].len();
    if streams == 0 || scores.iter().any(|r| r.len() != streams) {
        return Err(Error::input("score rows must cover the same nonempty stream set"));
    }
    let mut missing = Vec::new();
    for (a, row) in scores.iter().enumerate() {
        for (s, cell) in row.iter().enumerate() {
            if cell.is_none_or(|v| !v.is_finite()) {
                missing.push(format!("({}, stream {s})", algorithms[a]));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::input(format!("missing scores: {}", missing.join(", "))));
    }
    let mut totals = vec![0.0; algorithms.len()];
    for s in 0..streams {
        let column: Vec<f64> = scores.iter().map(|r| r[s].expect("checked")).collect();
        for (t, r) in totals.iter_mut().zip(rank_column(&column, higher_is_better)) {
            *t += r;
        }
    }
    Ok(RankSummary {
        algorithms: algorithms.to_vec(),
        average_ranks: totals.into_iter().map(|t| t / streams as f64).collect(),
        streams,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairVerdict {
    pub algorithm: String,
    pub rank_difference: f64,
    pub z: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BonferroniDunn {
    pub control: String,
    pub alpha: f64,
    pub critical_value: f64,
    pub critical_difference: f64,
    pub comparisons: Vec<PairVerdict>,
}

/// Control-versus-others comparison of average ranks at level `alpha`.
pub fn bonferroni_dunn(summary: &RankSummary, alpha: f64, control: usize) -> Result<BonferroniDunn> {
    let k = summary.algorithm_count();
    let n = summary.streams;
    if k < 2 || n < 2 {
        return Err(Error::input(format!(
            "Bonferroni-Dunn needs at least 2 algorithms and 2 streams, got {k} and {n}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if control >= k {
        return Err(Error::input(format!("control index {control} out of range")));
    }
    let kf = k as f64;
    let se = (kf * (kf + 1.0) / (6.0 * n as f64)).sqrt();
    let critical_value = normal_quantile(1.0 - alpha / (2.0 * (kf - 1.0)))?;
    let base = summary.average_ranks[control];
    let comparisons = summary
        .algorithms
        .iter()
        .zip(&summary.average_ranks)
        .enumerate()
        .filter(|&(i, _)| i != control)
        .map(|(_, (name, &rank))| {
            let z = (rank - base) / se;
            PairVerdict {
                algorithm: name.clone(),
                rank_difference: rank - base,
                z,
                significant: z.abs() > critical_value,
            }
        })
        .collect();
    Ok(BonferroniDunn {
        control: summary.algorithms[control].clone(),
        alpha,
        critical_value,
        critical_difference: critical_value * se,
        comparisons,
    })
}
