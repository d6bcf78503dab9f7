mod common;

use std::sync::{Arc, Mutex};

use driftforest::eval::{
    average_ranks, bonferroni_dunn, rank_column, run_prequential, windowed_series, ConfusionMatrix,
    PrequentialOptions,
};
use driftforest::{kappa, Instance, Learner, Result, Shape, Stream, StreamMeta};

/// Predicts a fixed class regardless of input.
struct Constant(usize, usize);

impl Learner for Constant {
    fn class_count(&self) -> usize {
        self.1
    }
    fn check_stream(&self, _: &StreamMeta) -> Result<()> {
        Ok(())
    }
    fn predict_proba(&self, _: &Instance) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.1];
        p[self.0] = 1.0;
        Ok(p)
    }
    fn train(&mut self, _: &Instance) -> Result<()> {
        Ok(())
    }
}

/// Reads the label off the first feature.
struct Oracle(usize);

impl Learner for Oracle {
    fn class_count(&self) -> usize {
        self.0
    }
    fn check_stream(&self, _: &StreamMeta) -> Result<()> {
        Ok(())
    }
    fn predict_proba(&self, x: &Instance) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.0];
        p[x.features[0] as usize] = 1.0;
        Ok(p)
    }
    fn train(&mut self, _: &Instance) -> Result<()> {
        Ok(())
    }
}

/// Logs every call so the evaluation order can be checked.
struct Spy(Arc<Mutex<Vec<String>>>);

impl Learner for Spy {
    fn class_count(&self) -> usize {
        2
    }
    fn check_stream(&self, _: &StreamMeta) -> Result<()> {
        Ok(())
    }
    fn predict_proba(&self, x: &Instance) -> Result<Vec<f64>> {
        self.0.lock().unwrap().push(format!("p{}", x.features[1]));
        Ok(vec![0.5, 0.5])
    }
    fn train(&mut self, x: &Instance) -> Result<()> {
        self.0.lock().unwrap().push(format!("t{}", x.features[1]));
        Ok(())
    }
}

fn labelled_stream(labels: &[usize], classes: usize) -> Stream {
    let data = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| Instance::vector(vec![l as f64, i as f64], l))
        .collect();
    Stream::from_vec(StreamMeta::new(classes, Shape::Vec(2)), data)
}

fn cycle(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| i * 7 % 11 % classes).collect()
}

#[test]
fn perfect_and_constant_learners() {
    let labels = cycle(1000, 3);
    let opts = PrequentialOptions {
        emit_every: 100,
        timing: false,
    };
    let perfect = run_prequential(&mut Oracle(3), labelled_stream(&labels, 3), &opts).unwrap();
    assert_eq!(perfect.accuracy(), 1.0);
    assert_eq!(perfect.kappa(), 1.0);
    assert!(perfect.records.iter().all(|r| r.cumulative_accuracy == 1.0));

    let constant = run_prequential(&mut Constant(0, 3), labelled_stream(&labels, 3), &opts).unwrap();
    let zeros = labels.iter().filter(|&&l| l == 0).count();
    assert_eq!(constant.accuracy(), zeros as f64 / 1000.0);
    assert_eq!(constant.kappa(), 0.0);
    assert!(constant
        .records
        .iter()
        .all(|r| r.update_ms == 0.0 && r.predict_ms == 0.0));
}

#[test]
fn record_count_is_a_ceiling() {
    for (n, every, expected) in [(1000, 100, 10), (1001, 100, 11), (99, 100, 1), (7, 1, 7)] {
        let out = run_prequential(
            &mut Constant(0, 2),
            labelled_stream(&cycle(n, 2), 2),
            &PrequentialOptions {
                emit_every: every,
                timing: true,
            },
        )
        .unwrap();
        assert_eq!(out.records.len(), expected, "n {n} every {every}");
        assert_eq!(out.records.last().unwrap().index, n as u64 - 1);
        assert_eq!(out.instances(), n as u64);
    }
}

#[test]
fn every_instance_is_tested_before_training() {
    let log = Arc::new(Mutex::new(Vec::new()));
    run_prequential(
        &mut Spy(log.clone()),
        labelled_stream(&cycle(5, 2), 2),
        &PrequentialOptions::default(),
    )
    .unwrap();
    let expected: Vec<String> = (0..5).flat_map(|i| [format!("p{i}"), format!("t{i}")]).collect();
    assert_eq!(*log.lock().unwrap(), expected);
}

#[test]
fn cumulative_accuracy_is_the_running_trace_fraction() {
    // predicts class 1 everywhere: correct exactly where the label is 1
    let labels = cycle(500, 2);
    let out = run_prequential(
        &mut Constant(1, 2),
        labelled_stream(&labels, 2),
        &PrequentialOptions {
            emit_every: 50,
            timing: false,
        },
    )
    .unwrap();
    for r in &out.records {
        let upto = &labels[..=r.index as usize];
        let hits = upto.iter().filter(|&&l| l == 1).count();
        assert_eq!(r.cumulative_accuracy, hits as f64 / upto.len() as f64);
        assert_eq!(r.predicted, 1);
        assert_eq!(r.truth, labels[r.index as usize]);
    }
    assert_eq!(out.confusion.trace() as f64 / 500.0, out.accuracy());
}

#[test]
fn windowed_accuracy_reacts_faster_than_cumulative() {
    let correct: Vec<bool> = (0..4000).map(|t| t < 3000 || t % 5 == 0).collect();
    let windowed = windowed_series(correct.iter().copied());
    let at = 3500;
    let cumulative = correct[..=at].iter().filter(|&&c| c).count() as f64 / (at + 1) as f64;
    assert!(windowed[at] < cumulative, "{} vs {cumulative}", windowed[at]);
    assert!(windowed[at] < 0.5);
}

#[test]
fn timings_accumulate() {
    let data = common::digits();
    let meta = common::digits_meta();
    let mut tree = driftforest::HoeffdingTree::new(Default::default(), 64, 10, 1);
    let out = run_prequential(
        &mut tree,
        Stream::from_vec(meta, data),
        &PrequentialOptions {
            emit_every: 100,
            timing: true,
        },
    )
    .unwrap();
    for pair in out.records.windows(2) {
        assert!(pair[1].update_ms >= pair[0].update_ms);
        assert!(pair[1].predict_ms >= pair[0].predict_ms);
    }
    assert_eq!(out.update_ms, out.records.last().unwrap().update_ms);
    assert!(out.update_ms > 0.0);
}

#[test]
fn mismatched_streams_are_rejected() {
    let mut tree = driftforest::HoeffdingTree::new(Default::default(), 3, 2, 1);
    let err = run_prequential(
        &mut tree,
        labelled_stream(&[0, 1], 2),
        &PrequentialOptions::default(),
    );
    assert!(err.is_err());
    let bad_label = labelled_stream(&[0, 1], 2);
    let meta = StreamMeta::new(1, Shape::Vec(2));
    let out = run_prequential(
        &mut Constant(0, 1),
        Stream::new(meta, bad_label),
        &PrequentialOptions::default(),
    );
    assert!(out.is_err());
    let zero = PrequentialOptions {
        emit_every: 0,
        timing: false,
    };
    assert!(run_prequential(&mut Constant(0, 2), labelled_stream(&[0], 2), &zero).is_err());
}

#[test]
fn kappa_examples() {
    let rows = vec![vec![40, 10], vec![20, 30]];
    let cm = ConfusionMatrix::from_rows(&rows).unwrap();
    assert_eq!(kappa(&cm).unwrap(), 0.4);
    assert!((common::kappa_oracle(&rows) - 0.4).abs() < 1e-12);
    let chance = ConfusionMatrix::from_rows(&[vec![25, 25], vec![25, 25]]).unwrap();
    assert_eq!(kappa(&chance).unwrap(), 0.0);
    assert!(ConfusionMatrix::from_rows(&[vec![1, 2]]).is_err());
}

#[test]
fn rank_examples() {
    assert_eq!(rank_column(&[0.9, 0.5, 0.7], true), vec![1.0, 3.0, 2.0]);
    assert_eq!(rank_column(&[0.9, 0.5, 0.7], false), vec![3.0, 1.0, 2.0]);
    assert_eq!(rank_column(&[0.5, 0.5, 0.1, 0.5], true), vec![2.0, 2.0, 4.0, 2.0]);

    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let scores = vec![
        vec![Some(0.9), Some(0.2)],
        vec![Some(0.8), Some(0.9)],
        vec![Some(0.1), Some(0.5)],
    ];
    let summary = average_ranks(&names, &scores, true).unwrap();
    assert_eq!(summary.average_ranks, vec![2.0, 1.5, 2.5]);
    let mut holed = scores.clone();
    holed[2][1] = None;
    let err = average_ranks(&names, &holed, true).unwrap_err().to_string();
    assert!(err.contains("(c, stream 1)"), "{err}");

    let bd = bonferroni_dunn(&summary, 0.05, 1).unwrap();
    assert_eq!(bd.control, "b");
    assert_eq!(bd.comparisons.len(), 2);
    assert!(bd.comparisons.iter().all(|v| !v.significant));
    assert!(bonferroni_dunn(&summary, 0.05, 3).is_err());
    assert!(bonferroni_dunn(&summary, 1.5, 0).is_err());
}

#[test]
fn dominated_algorithm_ranks_last_everywhere() {
    let names: Vec<String> = (0..4).map(|i| format!("alg{i}")).collect();
    let scores: Vec<Vec<Option<f64>>> = (0..4)
        .map(|a| {
            (0..30)
                .map(|s| {
                    Some(if a == 3 {
                        -1.0
                    } else {
                        ((a * 13 + s * 7) % 10) as f64
                    })
                })
                .collect()
        })
        .collect();
    let summary = average_ranks(&names, &scores, true).unwrap();
    assert_eq!(summary.average_ranks[3], 4.0);
    let total: f64 = summary.average_ranks.iter().sum();
    assert!((total - 10.0).abs() < 1e-12);
}
