use floodrisk_core::clustering::{
    best_cluster_count, fused_gcn_forward, kmeans_init_centers, pretrain_autoencoder, sweep_cluster_count,
    target_distribution, train_clustering, train_clustering_with, ClusterModelConfig,
};
use floodrisk_core::graph_learner::{train_graph_structure, GraphLearnerConfig};
use floodrisk_core::ingest::{generate_synthetic, zscore_standardize, SynthConfig};
use floodrisk_core::metrics::adjusted_rand_index;
use floodrisk_core::Matrix;

fn planted(seed: u64, m: usize, k: usize) -> (Matrix, Matrix, Vec<usize>) {
    let data = generate_synthetic(&SynthConfig {
        seed,
        cells: m,
        planted_clusters: k,
        ..Default::default()
    })
    .unwrap();
    let graph = train_graph_structure(
        data.bf.matrix(),
        &GraphLearnerConfig {
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    let fr = zscore_standardize(data.fr.matrix()).unwrap().matrix;
    (fr, graph.graph.into_matrix(), data.labels)
}

fn small_cfg(k: usize, seed: u64) -> ClusterModelConfig {
    ClusterModelConfig {
        clusters: k,
        seed,
        pretrain_epochs: 30,
        epochs: 20,
        kmeans_restarts: 3,
        ..Default::default()
    }
}

fn toy(m: usize) -> (Matrix, Matrix) {
    let fr = Matrix::new(m, 10, (0..m * 10).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0).collect()).unwrap();
    let mut a = Matrix::zeros(m, m);
    for i in 0..m - 1 {
        a.set(i, i + 1, 0.8).unwrap();
        a.set(i + 1, i, 0.8).unwrap();
    }
    (fr, a)
}

#[test]
fn planted_clusters_recovered() {
    let (fr, a, labels) = planted(1, 150, 3);
    let out = train_clustering(
        &fr,
        &a,
        &ClusterModelConfig {
            clusters: 3,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let ari = adjusted_rand_index(&out.state.labels, &labels).unwrap();
    eprintln!("ari {ari:.4}");
    assert!(ari >= 0.9);
}

#[test]
fn distributions_stay_normalized_every_epoch() {
    let (fr, a) = toy(12);
    let mut epochs = 0;
    train_clustering_with(&fr, &a, &ClusterModelConfig { epochs: 50, ..small_cfg(3, 2) }, |s| {
        epochs += 1;
        for m in [&s.z, &s.q, &s.p] {
            for r in 0..m.rows() {
                assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    })
    .unwrap();
    assert_eq!(epochs, 50);
}

#[test]
fn state_invariants_and_determinism() {
    let (fr, a) = toy(15);
    let cfg = small_cfg(3, 4);
    let s1 = train_clustering(&fr, &a, &cfg).unwrap().state;
    let s2 = train_clustering(&fr, &a, &cfg).unwrap().state;
    assert_eq!(s1, s2);
    for r in 0..s1.cells() {
        let row = s1.z.row(r);
        let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
        assert_eq!(s1.labels[r], best);
    }
    assert!(s1.centers.data().iter().all(|v| v.is_finite()));
    assert_eq!(s1.kept.len(), s1.clusters());
}

#[test]
fn single_cluster_is_trivial() {
    let (fr, a) = toy(8);
    let out = train_clustering(&fr, &a, &small_cfg(1, 0)).unwrap();
    assert!(out.state.labels.iter().all(|&l| l == 0));
    assert_eq!(out.state.z, Matrix::filled(8, 1, 1.0));
    assert!(out.history.iter().all(|l| l.total.is_finite()));
}

#[test]
fn pretraining_reduces_reconstruction_and_zero_epochs_is_noop() {
    let (fr, _) = toy(20);
    let out = pretrain_autoencoder(&fr, &ClusterModelConfig { pretrain_epochs: 100, ..small_cfg(2, 3) }).unwrap();
    assert!(out.losses.last().unwrap() < &out.losses[0]);
    let again = pretrain_autoencoder(&fr, &ClusterModelConfig { pretrain_epochs: 100, ..small_cfg(2, 3) }).unwrap();
    assert_eq!(out.h, again.h);
    let none = pretrain_autoencoder(&fr, &ClusterModelConfig { pretrain_epochs: 0, ..small_cfg(2, 3) }).unwrap();
    let fresh = floodrisk_core::clustering::ClusterModel::new(10, &small_cfg(2, 3)).unwrap();
    assert_eq!(none.model.params.values(), fresh.params.values());
}

#[test]
fn fused_inputs_ignore_graph_when_fusion_is_zero() {
    let (fr, a) = toy(6);
    let model = floodrisk_core::clustering::ClusterModel::new(10, &small_cfg(2, 1)).unwrap();
    let (hidden, _) = floodrisk_core::clustering::autoencoder_forward(&fr, &model).unwrap();
    let weights: Vec<Matrix> = (0..3)
        .map(|l| model.params.by_name(&format!("cluster.gcn.{l}")).unwrap().value().clone())
        .collect();
    let out_w = model.params.by_name("cluster.gcn.out").unwrap().value().clone();
    let mut b = a.clone();
    b.set(0, 3, 0.4).unwrap();
    b.set(3, 0, 0.4).unwrap();
    b.set(1, 2, 0.1).unwrap();
    b.set(2, 1, 0.1).unwrap();
    let fa = fused_gcn_forward(&fr, &a, &hidden, &weights, &out_w, 0.0).unwrap();
    let fb = fused_gcn_forward(&fr, &b, &hidden, &weights, &out_w, 0.0).unwrap();
    assert_eq!(fa.inputs, fb.inputs);
    for (l, input) in fa.inputs.iter().enumerate().skip(1) {
        assert_eq!(input, &hidden[l - 1]);
    }
    assert_ne!(fa.layers[0], fb.layers[0]);
    let fh = fused_gcn_forward(&fr, &a, &hidden, &weights, &out_w, 0.5).unwrap();
    assert_ne!(fh.inputs[1], fa.inputs[1]);
}

#[test]
fn single_node_gcn_layer_is_plain_dense() {
    let x = Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
    let w = Matrix::from_rows(&[vec![0.5, 1.0], vec![0.25, -1.0]]).unwrap();
    let out_w = Matrix::identity(2);
    let h = vec![Matrix::zeros(1, 2)];
    let f = fused_gcn_forward(&x, &Matrix::zeros(1, 1), &h, &[w], &out_w, 0.5).unwrap();
    // ReLU([1*0.5 - 2*0.25, 1*1 + 2*1]) = [0, 3]
    assert_eq!(f.layers[0], Matrix::from_rows(&[vec![0.0, 3.0]]).unwrap());
}

#[test]
fn two_node_path_layer_matches_hand_normalization() {
    let x = Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
    let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let w = Matrix::from_rows(&[vec![2.0]]).unwrap();
    let f = fused_gcn_forward(&x, &a, &[Matrix::zeros(2, 1)], &[w], &Matrix::identity(1), 0.5).unwrap();
    // degrees 2 → every normalized entry 1/2; each row averages to 2, times 2
    assert!((f.layers[0].get(0, 0) - 4.0).abs() < 1e-12);
    assert!((f.layers[0].get(1, 0) - 4.0).abs() < 1e-12);
}

#[test]
fn kmeans_centers_for_blobs() {
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let off = if i < 20 { -5.0 } else { 5.0 };
            vec![off + ((i * 13 % 7) as f64 - 3.0) * 0.1, ((i * 5 % 9) as f64 - 4.0) * 0.1]
        })
        .collect();
    let h = Matrix::from_rows(&rows).unwrap();
    let mut c = kmeans_init_centers(&h, 2, 5, 0).unwrap().to_rows();
    c.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert!((c[0][0] + 5.0).abs() < 0.9 && (c[1][0] - 5.0).abs() < 0.9);
    let single = kmeans_init_centers(&h, 1, 2, 0).unwrap();
    let mean: f64 = rows.iter().map(|r| r[0]).sum::<f64>() / 40.0;
    assert!((single.get(0, 0) - mean).abs() < 1e-12);
}

#[test]
fn sharpening_fixed_point_on_one_hot() {
    let q = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let p = target_distribution(&target_distribution(&q).unwrap()).unwrap();
    assert_eq!(p, q);
}

#[test]
fn sweep_rows_and_errors() {
    let (fr, a) = toy(12);
    let cfg = small_cfg(2, 0);
    let rows = sweep_cluster_count(&fr, &a, 2..=2, &cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows, sweep_cluster_count(&fr, &a, 2..=2, &cfg).unwrap());
    #[allow(clippy::reversed_empty_ranges)]
    let empty = 3..=2;
    assert!(sweep_cluster_count(&fr, &a, empty, &cfg).is_err());
    assert!(sweep_cluster_count(&fr, &a, 1..=2, &cfg).is_err());
}

#[test]
fn sweep_prefers_planted_count() {
    let (fr, a, _) = planted(2, 150, 3);
    let rows = sweep_cluster_count(
        &fr,
        &a,
        2..=5,
        &ClusterModelConfig {
            seed: 2,
            ..Default::default()
        },
    )
    .unwrap();
    eprintln!("{rows:?}");
    assert_eq!(best_cluster_count(&rows), Some(3));
}
