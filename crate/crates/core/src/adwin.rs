//! ADWIN adaptive windowing over a bounded signal.
//!
//! The window is kept as an exponential histogram: row `i` holds buckets
//! that each summarize `2^i` consecutive values, at most `max_buckets` per
//! row. Every `clock` insertions all bucket boundaries are tested as cut
//! points; while some split of the window has sub-window means further
//! apart than the Hoeffding-style bound, the oldest bucket is dropped.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdwinConfig {
    /// Confidence of the cut test.
    pub delta: f64,
    /// Buckets per histogram row before two are merged.
    pub max_buckets: usize,
    /// Insertions between cut checks.
    pub clock: usize,
}

impl Default for AdwinConfig {
    fn default() -> Self {
        AdwinConfig {
            delta: 0.002,
            max_buckets: 5,
            clock: 32,
        }
    }
}

impl AdwinConfig {
    pub fn with_delta(delta: f64) -> Self {
        AdwinConfig {
            delta,
            ..AdwinConfig::default()
        }
    }
}

/// Cut threshold for sub-windows of `n0` (older) and `n1` (newer) values
/// inside a window of `width` values.
pub fn cut_threshold(n0: f64, n1: f64, width: f64, delta: f64) -> f64 {
    let m = 1.0 / (1.0 / n0 + 1.0 / n1);
    let delta_prime = delta / width;
    ((4.0 / delta_prime).ln() / (2.0 * m)).sqrt()
}

#[derive(Debug, Clone)]
pub struct Adwin {
    config: AdwinConfig,
    /// Row `i` holds sums of buckets of `2^i` values; front is newest.
    rows: Vec<VecDeque<f64>>,
    width: u64,
    total: f64,
    since_check: usize,
    detections: u64,
}

impl Default for Adwin {
    fn default() -> Self {
        Adwin::new(AdwinConfig::default())
    }
}

impl Adwin {
    pub fn new(config: AdwinConfig) -> Self {
        assert!(
            config.delta > 0.0 && config.delta < 1.0,
            "ADWIN delta must lie in (0, 1)"
        );
        assert!(
            config.max_buckets >= 2,
            "ADWIN needs at least two buckets per row"
        );
        Adwin {
            config: AdwinConfig {
                clock: config.clock.max(1),
                ..config
            },
            rows: Vec::new(),
            width: 0,
            total: 0.0,
            since_check: 0,
            detections: 0,
        }
    }

    pub fn with_delta(delta: f64) -> Self {
        Adwin::new(AdwinConfig::with_delta(delta))
    }

    pub fn config(&self) -> AdwinConfig {
        self.config
    }

    /// Adds a value in `[0, 1]`; returns whether a cut happened.
    pub fn add(&mut self, value: f64) -> Result<bool> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::input(format!("ADWIN value {value} outside [0, 1]")));
        }
        Ok(self.insert(value))
    }

    /// Adds a 0/1 indicator.
    pub fn add_bool(&mut self, hit: bool) -> bool {
        self.insert(if hit { 1.0 } else { 0.0 })
    }

    /// Mean of the current window, 0 when empty.
    pub fn estimate(&self) -> f64 {
        if self.width == 0 {
            0.0
        } else {
            self.total / self.width as f64
        }
    }

    pub fn width(&self) -> u64 {
        self.width
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Number of cut events since creation or the last reset.
    pub fn detections(&self) -> u64 {
        self.detections
    }

    pub fn reset(&mut self) {
        *self = Adwin::new(self.config);
    }

    /// Buckets as `(sum, count)` from oldest to newest.
    pub fn buckets(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .rev()
            .flat_map(|(i, row)| row.iter().rev().map(move |&s| (s, 1u64 << i)))
    }

    fn insert(&mut self, value: f64) -> bool {
        if self.rows.is_empty() {
            self.rows.push(VecDeque::new());
        }
        self.rows[0].push_front(value);
        self.width += 1;
        self.total += value;
        self.compress();

        self.since_check += 1;
        if self.since_check < self.config.clock {
            return false;
        }
        self.since_check = 0;
        let detected = self.shrink_while_cut();
        if detected {
            self.detections += 1;
        }
        detected
    }

    fn compress(&mut self) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.rows[i].len() <= self.config.max_buckets {
                break;
            }
            let older = self.rows[i].pop_back().expect("row over capacity");
            let newer = self.rows[i].pop_back().expect("row over capacity");
            if i + 1 == self.rows.len() {
                self.rows.push(VecDeque::new());
            }
            self.rows[i + 1].push_front(older + newer);
            i += 1;
        }
    }

    fn shrink_while_cut(&mut self) -> bool {
        let mut cut = false;
        while self.width > 1 && self.has_cut_point() {
            self.drop_oldest_bucket();
            cut = true;
        }
        cut
    }

    fn has_cut_point(&self) -> bool {
        let width = self.width as f64;
        let mut n0 = 0.0;
        let mut s0 = 0.0;
        for (sum, count) in self.buckets() {
            n0 += count as f64;
            s0 += sum;
            let n1 = width - n0;
            if n1 <= 0.0 {
                break;
            }
            let s1 = self.total - s0;
            let diff = (s0 / n0 - s1 / n1).abs();
            if diff >= cut_threshold(n0, n1, width, self.config.delta) {
                return true;
            }
        }
        false
    }

    fn drop_oldest_bucket(&mut self) {
        while let Some(row) = self.rows.last() {
            if row.is_empty() {
                self.rows.pop();
            } else {
                break;
            }
        }
        let i = self.rows.len() - 1;
        let sum = self.rows[i].pop_back().expect("nonempty row");
        self.width -= 1u64 << i;
        self.total -= sum;
        if self.rows[i].is_empty() {
            self.rows.pop();
        }
        if self.width == 0 {
            self.total = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn estimate_is_mean() {
        let mut w = Adwin::default();
        assert_eq!(w.estimate(), 0.0);
        assert_eq!(w.width(), 0);
        for v in [1.0, 1.0, 0.0, 0.0] {
            w.add(v).unwrap();
        }
        assert_eq!(w.estimate(), 0.5);
        assert_eq!(w.width(), 4);
    }

    #[test]
    fn rejects_out_of_range() {
        let mut w = Adwin::default();
        assert!(w.add(1.5).is_err());
        assert!(w.add(-0.1).is_err());
        assert!(w.add(f64::NAN).is_err());
        assert_eq!(w.width(), 0);
    }

    #[test]
    fn constant_stream_never_cuts() {
        let mut w = Adwin::default();
        for _ in 0..10_000 {
            assert!(!w.add(1.0).unwrap());
        }
        assert_eq!(w.estimate(), 1.0);
        assert_eq!(w.width(), 10_000);
    }

    #[test]
    fn histogram_shape_invariants() {
        let mut rng = crate::seed::rng_from(3);
        let mut w = Adwin::default();
        for n in 1..=5_000u64 {
            w.add(rng.random::<f64>()).unwrap();
            let counts: Vec<u64> = w.buckets().map(|(_, c)| c).collect();
            assert_eq!(counts.iter().sum::<u64>(), w.width());
            // oldest first: counts never increase towards the newest end
            assert!(counts.windows(2).all(|p| p[0] >= p[1]));
            assert!(counts.iter().all(|c| c.is_power_of_two()));
            for row in &w.rows {
                assert!(row.len() <= w.config.max_buckets);
            }
            if w.detections() == 0 {
                assert_eq!(w.width(), n);
            }
        }
    }

    #[test]
    fn compression_preserves_estimate() {
        let mut rng = crate::seed::rng_from(5);
        let mut w = Adwin::new(AdwinConfig {
            clock: usize::MAX,
            ..AdwinConfig::default()
        });
        let mut sum = 0.0;
        for n in 1..=3_000 {
            let v: f64 = rng.random();
            sum += v;
            w.add(v).unwrap();
            let bucket_sum: f64 = w.buckets().map(|(s, _)| s).sum();
            assert!((w.estimate() - sum / n as f64).abs() < 1e-12);
            assert!((bucket_sum / n as f64 - w.estimate()).abs() < 1e-12);
        }
    }

    #[test]
    fn switch_is_detected_and_window_shrinks() {
        let mut rng = crate::seed::rng_from(17);
        let mut w = Adwin::default();
        for _ in 0..1000 {
            w.add_bool(rng.random::<f64>() < 0.9);
        }
        let mut detected_at = None;
        for i in 0..1000 {
            let before = w.width();
            if w.add_bool(rng.random::<f64>() < 0.1) {
                assert!(w.width() < before + 1);
                detected_at = Some(i);
                break;
            }
        }
        assert!(detected_at.expect("drift missed") < 300);
    }

    #[test]
    fn threshold_shrinks_with_more_data() {
        let a = cut_threshold(100.0, 100.0, 200.0, 0.002);
        let b = cut_threshold(1000.0, 1000.0, 2000.0, 0.002);
        assert!(b < a);
    }

    #[test]
    fn reset_clears_state() {
        let mut w = Adwin::default();
        for _ in 0..100 {
            w.add_bool(true);
        }
        w.reset();
        assert_eq!(w.width(), 0);
        assert_eq!(w.estimate(), 0.0);
    }
}
