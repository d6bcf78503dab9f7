//! Oracles and fixtures shared by the integration tests. Every oracle here
//! recomputes its quantity from first principles, independently of the
//! library code it checks.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use driftforest::config::{compose_drift, DriftConfig, DriftMode};
use driftforest::stream::{double_dataset, load_csv_stream};
use driftforest::{Instance, Shape, Stream, StreamMeta};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

/// Cohen's kappa through observed and chance agreement rates.
pub fn kappa_oracle(rows: &[Vec<u64>]) -> f64 {
    let c = rows.len();
    let n: f64 = rows.iter().flatten().map(|&v| v as f64).sum();
    let po = (0..c).map(|k| rows[k][k] as f64).sum::<f64>() / n;
    let mut pe = 0.0;
    for k in 0..c {
        let row: f64 = rows[k].iter().map(|&v| v as f64).sum();
        let col: f64 = rows.iter().map(|r| r[k] as f64).sum();
        pe += (row / n) * (col / n);
    }
    if (1.0 - pe).abs() < 1e-15 {
        0.0
    } else {
        (po - pe) / (1.0 - pe)
    }
}

/// Brute-force `sum_j b_j y[j c + k] / sum_j b_j`.
pub fn aggregate_oracle(y: &[f64], betas: &[f64], c: usize) -> Vec<f64> {
    let total: f64 = betas.iter().sum();
    (0..c)
        .map(|k| {
            let mut acc = 0.0;
            for (j, b) in betas.iter().enumerate() {
                acc += b * y[j * c + k];
            }
            acc / total
        })
        .collect()
}

/// Whether any split of `values` (oldest first) into a nonempty older part
/// and a nonempty newer part has means at least the ADWIN bound apart.
pub fn adwin_cut_oracle(values: &[f64], delta: f64) -> bool {
    let w = values.len();
    let total: f64 = values.iter().sum();
    let mut prefix = 0.0;
    for split in 1..w {
        prefix += values[split - 1];
        let n0 = split as f64;
        let n1 = (w - split) as f64;
        let mu0 = prefix / n0;
        let mu1 = (total - prefix) / n1;
        let harmonic = n0 * n1 / (n0 + n1);
        let eps = ((4.0 * w as f64 / delta).ln() / (2.0 * harmonic)).sqrt();
        if (mu0 - mu1).abs() >= eps {
            return true;
        }
    }
    false
}

/// Fraction of `pairs` whose two entries agree.
pub fn agreement(pairs: impl IntoIterator<Item = (usize, usize)>) -> f64 {
    let mut n = 0usize;
    let mut hit = 0usize;
    for (a, b) in pairs {
        n += 1;
        hit += usize::from(a == b);
    }
    hit as f64 / n as f64
}

pub fn digits_meta() -> StreamMeta {
    StreamMeta::new(10, Shape::Mat(8))
}

/// The 1797 8x8 handwritten digit images (pixel values 0 to 16).
pub fn digits() -> Vec<Instance> {
    load_csv_stream(data_dir().join("digits.csv"), digits_meta(), false, Some(1797)).expect("digits fixture")
}

/// The image moved `dx` columns to the right, vacated columns zeroed.
pub fn shift_columns(x: &Instance, dx: isize) -> Instance {
    let side = x.shape.extent();
    let mut features = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side as isize {
            let from = c - dx;
            if (0..side as isize).contains(&from) {
                features[r * side + c as usize] = x.features[r * side + from as usize];
            }
        }
    }
    Instance {
        features,
        shape: x.shape,
        label: x.label,
    }
}

pub const IMAGE_STREAM_SEED: u64 = 7;

/// 8x8 image stream of 10782 instances: the digits plus their one-pixel
/// left and right translations, doubled with rotated labels in the second
/// copy, joined by a sigmoid drift at the midpoint with width 10%.
pub fn image_drift_stream() -> Stream {
    let base = digits();
    let mut augmented = base.clone();
    augmented.extend(base.iter().map(|x| shift_columns(x, 1)));
    augmented.extend(base.iter().map(|x| shift_columns(x, -1)));
    let mut a = double_dataset(&augmented, 10, IMAGE_STREAM_SEED, true).expect("doubling");
    let b = a.split_off(augmented.len());
    let drift = DriftConfig {
        mode: DriftMode::Sigmoid,
        ..DriftConfig::default()
    };
    compose_drift(digits_meta(), a, b, &drift, IMAGE_STREAM_SEED, None)
        .expect("sigmoid composition")
        .0
}
