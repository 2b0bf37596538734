//! Property tests for invariants of the statistics, rating and graph code.

use floodrisk_core::clustering::{ancillary_distribution, target_distribution, KernelScale};
use floodrisk_core::graph_learner::{bootstrap_anchor, build_knn_graph};
use floodrisk_core::ingest::zscore_standardize;
use floodrisk_core::metrics::adjusted_rand_index;
use floodrisk_core::risk::{aggregate_risk_components, assign_risk_levels, cluster_feature_means, minmax_scale};
use floodrisk_core::spatial::{gini, global_morans_i, pearson_correlation, MoranWeights};
use floodrisk_core::Matrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn symmetric_weights(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.0..1.0f64, n * n).prop_map(move |d| {
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                w.set(i, j, d[i * n + j]).unwrap();
                w.set(j, i, d[i * n + j]).unwrap();
            }
        }
        w
    })
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn morans_i_is_affine_invariant(
        (values, w) in (3usize..30).prop_flat_map(|n| (prop::collection::vec(0.0..10.0f64, n), symmetric_weights(n))),
        a in 0.1..10.0f64,
        b in -10.0..10.0f64,
        row in any::<bool>(),
    ) {
        prop_assume!(spread(&values) > 0.5 && w.sum() > 0.5);
        let mode = if row { MoranWeights::RowStandardized } else { MoranWeights::Raw };
        let i = global_morans_i(&values, &w, mode).unwrap();
        let moved: Vec<f64> = values.iter().map(|v| a * v + b).collect();
        let j = global_morans_i(&moved, &w, mode).unwrap();
        prop_assert!((i - j).abs() <= 1e-12, "{} vs {}", i, j);
    }

    #[test]
    fn gini_is_scale_invariant_and_zero_only_when_equal(
        values in prop::collection::vec(0.0..100.0f64, 1..40),
        c in 0.01..100.0f64,
    ) {
        let g = gini(&values).unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| c * v).collect();
        prop_assert!((g - gini(&scaled).unwrap()).abs() <= 1e-12);
        prop_assert!((0.0..1.0).contains(&g));
        let equal = values.iter().all(|&v| v == values[0]);
        prop_assert_eq!(g == 0.0, equal);
    }

    #[test]
    fn pearson_is_symmetric_and_bounded(
        (x, y) in (3usize..40).prop_flat_map(|n| (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
        )),
    ) {
        prop_assume!(spread(&x) > 1e-3 && spread(&y) > 1e-3);
        let (r1, p1) = pearson_correlation(&x, &y).unwrap();
        let (r2, p2) = pearson_correlation(&y, &x).unwrap();
        prop_assert!((r1 - r2).abs() <= 1e-12 && (p1 - p2).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r1) && (0.0..=1.0).contains(&p1));
    }

    #[test]
    fn risk_levels_are_rank_invariant(raw in prop::collection::vec(0u32..1000, 1..8)) {
        let values: Vec<f64> = raw.iter().map(|&v| f64::from(v) / 100.0).collect();
        let levels = assign_risk_levels(&values);
        let mut sorted = levels.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (1..=values.len()).collect::<Vec<_>>());
        let transformed: Vec<f64> = values.iter().map(|v| v.exp() + 3.0 * v).collect();
        prop_assert_eq!(&assign_risk_levels(&transformed), &levels);
        for a in 0..values.len() {
            for b in 0..values.len() {
                if values[a] < values[b] {
                    prop_assert!(levels[a] < levels[b]);
                }
            }
        }
    }

    #[test]
    fn adding_a_cell_changes_only_its_cluster(
        (scaled, labels) in (2usize..6).prop_flat_map(|k| (k..40).prop_flat_map(move |m| (
            matrix(m, 10, 0.0, 1.0),
            prop::collection::vec(0..k, m).prop_map(move |mut l| {
                for (c, v) in l.iter_mut().take(k).enumerate() {
                    *v = c;
                }
                l
            }),
        ))),
        extra in prop::collection::vec(0.0..1.0f64, 10),
        target in any::<prop::sample::Index>(),
    ) {
        let k = labels.iter().max().unwrap() + 1;
        let cluster = target.index(k);
        let before = aggregate_risk_components(&cluster_feature_means(&scaled, &labels).unwrap());
        let mut rows = scaled.to_rows();
        rows.push(extra);
        let mut grown_labels = labels.clone();
        grown_labels.push(cluster);
        let grown = Matrix::from_rows(&rows).unwrap();
        let after = aggregate_risk_components(&cluster_feature_means(&grown, &grown_labels).unwrap());
        for c in 0..k {
            if c != cluster {
                let (x, y) = (before[c], after[c]);
                prop_assert_eq!(x.hazard.to_bits(), y.hazard.to_bits());
                prop_assert_eq!(x.exposure.to_bits(), y.exposure.to_bits());
                prop_assert_eq!(x.vulnerability.to_bits(), y.vulnerability.to_bits());
            }
        }
    }

    #[test]
    fn rating_components_are_bounded(fr in (1usize..30).prop_flat_map(|m| matrix(m, 10, -50.0, 50.0))) {
        let scaled = minmax_scale(&fr);
        prop_assert!(scaled.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let labels: Vec<usize> = (0..fr.rows()).map(|i| i % 2.min(fr.rows())).collect();
        for c in aggregate_risk_components(&cluster_feature_means(&scaled, &labels).unwrap()) {
            prop_assert!((0.0..=2.0).contains(&c.hazard));
            prop_assert!((0.0..=2.0).contains(&c.exposure));
            prop_assert!((0.0..=6.0).contains(&c.vulnerability));
        }
    }

    #[test]
    fn knn_graph_is_symmetric_with_zero_diagonal(
        (x, k) in (2usize..25).prop_flat_map(|m| (matrix(m, 6, -1.0, 1.0), 1..m)),
    ) {
        let g = build_knn_graph(&x, k).unwrap();
        prop_assert!(g.is_symmetric());
        for i in 0..g.rows() {
            prop_assert_eq!(g.get(i, i), 0.0);
        }
        prop_assert!(g.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn bootstrap_stays_in_envelope(
        (k, a) in (1usize..15).prop_flat_map(|n| (matrix(n, n, 0.0, 1.0), matrix(n, n, 0.0, 1.0))),
        tau in 0.0..=1.0f64,
    ) {
        let b = bootstrap_anchor(&k, &a, tau).unwrap();
        for ((&x, &y), &v) in k.data().iter().zip(a.data()).zip(b.data()) {
            prop_assert!(x.min(y) <= v && v <= x.max(y));
        }
    }

    #[test]
    fn soft_assignments_are_distributions(
        (h, centers) in (1usize..20).prop_flat_map(|n| (2usize..5).prop_flat_map(move |k| (
            matrix(n, 3, -3.0, 3.0),
            matrix(k, 3, -3.0, 3.0),
        ))),
        dof in 0.5..5.0f64,
    ) {
        let q = ancillary_distribution(&h, &centers, dof, KernelScale::DegreesOfFreedom).unwrap();
        let p = target_distribution(&q).unwrap();
        for m in [&q, &p] {
            for r in 0..m.rows() {
                prop_assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(m.row(r).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn ari_ignores_label_names(
        (a, b) in (2usize..40).prop_flat_map(|n| (
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(0usize..4, n),
        )),
        shift in 1usize..4,
    ) {
        let renamed: Vec<usize> = a.iter().map(|l| (l + shift) % 4).collect();
        let r = adjusted_rand_index(&a, &b).unwrap();
        prop_assert!((r - adjusted_rand_index(&renamed, &b).unwrap()).abs() <= 1e-12);
        prop_assert!((r - adjusted_rand_index(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert!((adjusted_rand_index(&a, &renamed).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn zscore_is_idempotent(x in (2usize..30).prop_flat_map(|m| matrix(m, 4, -100.0, 100.0))) {
        let once = zscore_standardize(&x).unwrap().matrix;
        let twice = zscore_standardize(&once).unwrap().matrix;
        prop_assert!(once.max_abs_diff(&twice) <= 1e-9);
    }
}
