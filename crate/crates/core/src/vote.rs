//! Weighted combination of class vectors.

use crate::error::{Error, Result};

/// Lower bound applied to vote and aggregation weights.
pub const WEIGHT_FLOOR: f64 = 0.01;

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Weighted per-class average of equally long class vectors.
pub fn weighted_average<'a, I>(vectors: I, weights: &[f64]) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::input("weights must be finite and non-negative"));
    }
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum <= 0.0 {
        return Err(Error::input("weights sum to zero"));
    }
    let mut out: Vec<f64> = Vec::new();
    let mut count = 0;
    for (v, &w) in vectors.into_iter().zip(weights) {
        if count == 0 {
            out = vec![0.0; v.len()];
        } else if v.len() != out.len() {
            return Err(Error::input("class vectors differ in length"));
        }
        let share = w / weight_sum;
        for (o, &p) in out.iter_mut().zip(v) {
            *o += share * p;
        }
        count += 1;
    }
    if count != weights.len() {
        return Err(Error::input("vector and weight counts differ"));
    }
    Ok(out)
}

/// Folds a sublayer output (`betas.len()` class vectors of length
/// `class_count`, concatenated) into one class vector, weighting forest `j`
/// by `betas[j]`.
pub fn aggregate_output(output: &[f64], betas: &[f64], class_count: usize) -> Result<Vec<f64>> {
    if class_count == 0 || output.len() != class_count * betas.len() {
        return Err(Error::input(format!(
            "sublayer output of length {} does not hold {} vectors of {class_count} classes",
            output.len(),
            betas.len()
        )));
    }
    weighted_average(output.chunks(class_count), betas)
}

/// Applies [`WEIGHT_FLOOR`] to raw quality estimates.
pub fn floored(estimates: impl IntoIterator<Item = f64>) -> Vec<f64> {
    estimates.into_iter().map(|e| e.max(WEIGHT_FLOOR)).collect()
}
