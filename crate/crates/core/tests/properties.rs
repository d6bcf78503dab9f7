mod common;

use driftforest::adf::{scan, select_depth};
use driftforest::adwin::{Adwin, AdwinConfig};
use driftforest::eval::{average_ranks, rank_column};
use driftforest::hoeffding::{HoeffdingTree, Subspace, TreeConfig};
use driftforest::stream::pad_instance;
use driftforest::vote::{aggregate_output, floored};
use driftforest::{kappa, AdfConfig, ConfusionMatrix, ForestConfig, Instance, Shape};
use proptest::prelude::*;

fn shape_strategy() -> impl Strategy<Value = Shape> {
    prop_oneof![
        (1usize..300).prop_map(Shape::Vec),
        (1usize..20).prop_map(Shape::Mat)
    ]
}

fn instance_strategy() -> impl Strategy<Value = Instance> {
    shape_strategy().prop_flat_map(|shape| {
        (prop::collection::vec(-5.0f64..5.0, shape.len()), 0usize..7)
            .prop_map(move |(f, label)| Instance::new(f, shape, label).unwrap())
    })
}

/// Reassembles the windows of one depth into a flat padded vector.
fn untile(windows: &[Vec<f64>], shape: Shape) -> Vec<f64> {
    match shape {
        Shape::Vec(_) => windows.concat(),
        Shape::Mat(side) => {
            let per_row = (windows.len() as f64).sqrt() as usize;
            let tile = side / per_row;
            let mut out = vec![f64::NAN; side * side];
            for (t, w) in windows.iter().enumerate() {
                let (tr, tc) = (t / per_row, t % per_row);
                for r in 0..tile {
                    for c in 0..tile {
                        out[(tr * tile + r) * side + tc * tile + c] = w[r * tile + c];
                    }
                }
            }
            out
        }
    }
}

proptest! {
    #[test]
    fn padding_is_idempotent_and_preserves_content(x in instance_strategy()) {
        let p = pad_instance(&x);
        prop_assert_eq!(p.label, x.label);
        prop_assert!(p.shape.extent().is_power_of_two());
        prop_assert!(p.shape.extent() >= x.shape.extent());
        prop_assert!(p.shape.extent() < 2 * x.shape.extent().max(1));
        prop_assert_eq!(&pad_instance(&p), &p);
        match (x.shape, p.shape) {
            (Shape::Vec(l), Shape::Vec(_)) => {
                prop_assert_eq!(&p.features[..l], &x.features[..]);
                prop_assert!(p.features[l..].iter().all(|&v| v == 0.0));
            }
            (Shape::Mat(s), Shape::Mat(t)) => {
                for r in 0..t {
                    for c in 0..t {
                        let v = p.features[r * t + c];
                        if r < s && c < s {
                            prop_assert_eq!(v, x.features[r * s + c]);
                        } else {
                            prop_assert_eq!(v, 0.0);
                        }
                    }
                }
            }
            _ => prop_assert!(false, "dimensionality changed"),
        }
    }

    #[test]
    fn scan_tiles_every_depth(
        dims in 1usize..=2,
        log_extent in 1u32..=6,
        depth_seed in 0usize..100,
        c in 1usize..12,
        n in 1usize..4,
        m in 1usize..4,
        append in any::<bool>(),
    ) {
        let extent = 1usize << log_extent;
        let depth = 1 + depth_seed % log_extent as usize;
        let shape = Shape::from_dims(dims, extent).unwrap();
        let features: Vec<f64> = (0..shape.len()).map(|i| i as f64).collect();
        let x = Instance::new(features.clone(), shape, 0).unwrap();
        let sets = scan(&x, depth).unwrap();
        prop_assert_eq!(sets.len(), depth);

        let mut cfg = AdfConfig::for_stream(shape, c);
        cfg.depth = depth;
        cfg.input_forests = n;
        cfg.cascade_forests = m;
        cfg.append_original_inner = append;
        cfg.validate().unwrap();
        for (i, windows) in sets.iter().enumerate() {
            // 1-based depth i + 1 yields 2^(D (d - (i + 1) + 1)) windows
            let expected = 1usize << (dims * (depth - i));
            prop_assert_eq!(windows.len(), expected);
            prop_assert_eq!(cfg.subinstance_count(i), expected);
            let len = shape.len() / expected;
            prop_assert!(windows.iter().all(|w| w.len() == len));
            prop_assert_eq!(cfg.window_len(i), len);
            prop_assert_eq!(untile(windows, shape), features.clone());
            prop_assert_eq!(cfg.representation_len(i), expected * c * n);
            let previous = if i > 0 { c * m } else { 0 };
            let original = if i == 0 || append { shape.len() } else { 0 };
            prop_assert_eq!(cfg.cascade_input_len(i), previous + expected * c * n + original);
        }
    }

    #[test]
    fn adwin_window_matches_retained_suffix(
        values in prop::collection::vec(prop_oneof![Just(0.0f64), Just(1.0f64), 0.0f64..=1.0], 1..3000),
        delta in prop_oneof![Just(0.002f64), Just(0.05f64), Just(0.3f64)],
    ) {
        let config = AdwinConfig::with_delta(delta);
        let mut w = Adwin::new(config);
        let mut mirror: Vec<f64> = Vec::new();
        for &v in &values {
            mirror.push(v);
            let before = w.width();
            let cut = w.add(v).unwrap();
            if cut {
                prop_assert!(w.width() < before + 1);
                prop_assert!(common::adwin_cut_oracle(&mirror, delta));
            }
            let drop = mirror.len() - w.width() as usize;
            mirror.drain(..drop);

            let buckets: Vec<(f64, u64)> = w.buckets().collect();
            prop_assert_eq!(buckets.iter().map(|b| b.1).sum::<u64>(), w.width());
            prop_assert!(buckets.iter().all(|b| b.1.is_power_of_two()));
            prop_assert!(buckets.windows(2).all(|p| p[0].1 >= p[1].1));
            for size in buckets.iter().map(|b| b.1) {
                let same = buckets.iter().filter(|b| b.1 == size).count();
                prop_assert!(same <= config.max_buckets);
            }
            let suffix_mean = mirror.iter().sum::<f64>() / mirror.len() as f64;
            prop_assert!((w.estimate() - suffix_mean).abs() < 1e-9);
            let bucket_sum: f64 = buckets.iter().map(|b| b.0).sum();
            prop_assert!((bucket_sum - w.total()).abs() < 1e-9);
        }
    }

    #[test]
    fn aggregation_matches_oracle(
        (c, betas, y) in (1usize..=6, 1usize..=5).prop_flat_map(|(c, m)| (
            Just(c),
            prop::collection::vec(0.0f64..1.0, m),
            prop::collection::vec(0.0f64..1.0, c * m),
        ))
    ) {
        let betas = floored(betas);
        let got = aggregate_output(&y, &betas, c).unwrap();
        let want = common::aggregate_oracle(&y, &betas, c);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_of_probability_vectors_is_a_probability_vector(
        (c, betas, raw) in (2usize..=6, 1usize..=5).prop_flat_map(|(c, m)| (
            Just(c),
            prop::collection::vec(0.0f64..1.0, m),
            prop::collection::vec(0.001f64..1.0, c * m),
        ))
    ) {
        let y: Vec<f64> = raw
            .chunks(c)
            .flat_map(|v| {
                let s: f64 = v.iter().sum();
                v.iter().map(move |p| p / s)
            })
            .collect();
        let out = aggregate_output(&y, &floored(betas), c).unwrap();
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(out.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn kappa_matches_oracle(rows in (2usize..6).prop_flat_map(|c| {
        prop::collection::vec(prop::collection::vec(0u64..200, c), c)
    })) {
        prop_assume!(rows.iter().flatten().sum::<u64>() > 0);
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        let k = kappa(&cm).unwrap();
        prop_assert!((k - common::kappa_oracle(&rows)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&k));
        let diagonal = (0..rows.len())
            .all(|t| (0..rows.len()).all(|p| t == p || rows[t][p] == 0));
        prop_assert_eq!(k == 1.0, diagonal);
    }

    #[test]
    fn depth_selection_is_argmax_and_transform_invariant(
        alphas in prop::collection::vec(prop_oneof![0.0f64..=1.0, Just(0.5f64)], 1..8)
    ) {
        let best = select_depth(&alphas);
        let top = alphas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(best, alphas.iter().position(|&a| a == top).unwrap());
        let transformed: Vec<f64> = alphas.iter().map(|a| (3.0 * a).exp() + a.powi(3) - 7.0).collect();
        prop_assert_eq!(select_depth(&transformed), best);
    }

    #[test]
    fn ranks_sum_to_triangular_number(
        (k, scores) in (2usize..8, 1usize..6).prop_flat_map(|(k, s)| (
            Just(k),
            prop::collection::vec(prop::collection::vec(prop_oneof![0.0f64..1.0, Just(0.5f64)], s), k),
        ))
    ) {
        let streams = scores[0].len();
        for s in 0..streams {
            let column: Vec<f64> = scores.iter().map(|r| r[s]).collect();
            let ranks = rank_column(&column, true);
            prop_assert!((ranks.iter().sum::<f64>() - (k * (k + 1)) as f64 / 2.0).abs() < 1e-9);
            prop_assert!(ranks.iter().all(|&r| (1.0..=k as f64).contains(&r)));
        }
        let names: Vec<String> = (0..k).map(|a| format!("a{a}")).collect();
        let cells: Vec<Vec<Option<f64>>> =
            scores.iter().map(|r| r.iter().copied().map(Some).collect()).collect();
        let summary = average_ranks(&names, &cells, true).unwrap();
        let mean: f64 = summary.average_ranks.iter().sum::<f64>() / k as f64;
        prop_assert!((mean - (k + 1) as f64 / 2.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trees_stay_binary_and_respect_subspaces(
        seed in 0u64..1000,
        features in 2usize..12,
        k in 1usize..4,
        classes in 2usize..5,
    ) {
        let k = k.min(features);
        let cfg = TreeConfig {
            grace_period: 30.0,
            split_confidence: 0.05,
            subspace: Subspace::Fixed(k),
            ..TreeConfig::default()
        };
        let mut tree = HoeffdingTree::new(cfg, features, classes, seed);
        let mut rng = driftforest::seed::rng_from(seed ^ 0xabc);
        use rand::Rng;
        for _ in 0..3000 {
            let x: Vec<f64> = (0..features).map(|_| rng.random::<f64>()).collect();
            let label = ((x[0] + x[features - 1]) * classes as f64 / 2.0) as usize % classes;
            tree.train(&x, label, 1.0).unwrap();
            let p = tree.predict_proba(&x).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }
        let stats = tree.depth_stats();
        prop_assert_eq!(stats.nodes, 2 * stats.leaves - 1);
        for split in tree.splits() {
            prop_assert_eq!(split.candidates.len(), k);
            prop_assert!(split.candidates.contains(&split.feature));
            let mut distinct = split.candidates.clone();
            distinct.sort_unstable();
            distinct.dedup();
            prop_assert_eq!(distinct.len(), k);
        }
    }

    #[test]
    fn forest_output_is_a_probability_vector(seed in 0u64..1000, trees in 1usize..6) {
        let mut f = driftforest::AdaptiveRandomForest::new(
            ForestConfig { trees, ..ForestConfig::default() },
            3,
            3,
            seed,
        );
        let g = driftforest::stream::GaussianMixture::separated(3, Shape::Vec(3), 1.0).unwrap();
        for x in g.stream(seed).take(600) {
            let p = f.predict_proba(&x.features).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            f.train(&x.features, x.label).unwrap();
        }
    }
}
