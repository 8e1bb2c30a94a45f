mod common;

use common::{brute_force_knn_edges, random_points};
use flowgat_core::graph::{
    build_knn_graph, graph_stats, knn_lists, load_graph, pairwise_distance, save_graph, KnnGraph,
    Metric,
};
use flowgat_core::FeatureMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn padded(xs: &[f64]) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            let mut r = vec![0.0; 8];
            r[0] = x;
            r
        })
        .collect();
    FeatureMatrix::from_rows(&rows).unwrap()
}

#[test]
fn line_points_k1() {
    let pts = padded(&[0.0, 1.0, 3.0, 10.0]);
    assert_eq!(
        knn_lists(&pts, 1, Metric::Euclidean).unwrap(),
        vec![vec![1], vec![0], vec![1], vec![2]]
    );
    let g = build_knn_graph(&pts, 1, Metric::Euclidean).unwrap();
    assert_eq!(g.edge_set(), vec![(0, 1), (1, 2), (2, 3)]);
}

#[test]
fn distance_examples() {
    let mut b = vec![0.0; 8];
    b[0] = 3.0;
    b[1] = 4.0;
    assert_eq!(
        pairwise_distance(&[0.0; 8], &b, Metric::Euclidean).unwrap(),
        5.0
    );
    assert_eq!(pairwise_distance(&b, &b, Metric::Euclidean).unwrap(), 0.0);
    assert!(pairwise_distance(&b, &b, Metric::Cosine).unwrap().abs() < 1e-15);
    assert!(
        (pairwise_distance(&[1.0, 0.0], &[0.0, 1.0], Metric::Cosine).unwrap() - 1.0).abs() < 1e-15
    );
}

#[test]
fn path_and_complete_stats() {
    let path =
        KnnGraph::from_directed(&[vec![1], vec![0, 2], vec![1]], Metric::Euclidean, 1).unwrap();
    let s = graph_stats(&path);
    assert_eq!(
        (s.edge_count, path.degree(0), path.degree(1), path.degree(2)),
        (2, 1, 2, 1)
    );
    let k4 = build_knn_graph(
        &random_points(&mut ChaCha8Rng::seed_from_u64(1), 4, 3),
        3,
        Metric::Euclidean,
    )
    .unwrap();
    let s = graph_stats(&k4);
    assert_eq!((s.edge_count, s.min_degree, s.max_degree), (6, 3, 3));
}

#[test]
fn five_hundred_points_match_oracle() {
    let pts = random_points(&mut ChaCha8Rng::seed_from_u64(500), 500, 8);
    for k in [3, 5] {
        for metric in Metric::ALL {
            let g = build_knn_graph(&pts, k, metric).unwrap();
            assert_eq!(
                g.edge_set(),
                brute_force_knn_edges(&pts, k, metric),
                "k={k} {metric}"
            );
        }
    }
}

#[test]
fn graph_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = build_knn_graph(
        &random_points(&mut ChaCha8Rng::seed_from_u64(2), 60, 5),
        3,
        Metric::Cosine,
    )
    .unwrap();
    let path = dir.path().join("g.knng");
    save_graph(&g, &path).unwrap();
    assert_eq!(load_graph(&path).unwrap(), g);
}

proptest! {
    #[test]
    fn csr_invariants_and_edge_bounds(seed in 0u64..10_000, n in 6usize..80, k in 1usize..6, cos in any::<bool>()) {
        let metric = if cos { Metric::Cosine } else { Metric::Euclidean };
        let pts = random_points(&mut ChaCha8Rng::seed_from_u64(seed), n, 4);
        let g = build_knn_graph(&pts, k, metric).unwrap();
        let off = g.offsets();
        prop_assert_eq!(off[0], 0);
        prop_assert!(off.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*off.last().unwrap(), g.neighbor_array().len());
        for u in 0..n {
            let nb = g.neighbors(u);
            prop_assert!(!nb.contains(&u));
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            for &v in nb {
                prop_assert!(g.has_edge(v, u));
            }
        }
        let s = graph_stats(&g);
        prop_assert!(2 * s.edge_count >= n * k && s.edge_count <= n * k);
        prop_assert!(s.min_degree >= k);
        let again = build_knn_graph(&pts, k, metric).unwrap();
        prop_assert_eq!(&again, &g);
    }

    #[test]
    fn euclidean_edges_ignore_uniform_scaling(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let pts = random_points(&mut ChaCha8Rng::seed_from_u64(seed), 40, 5);
        let scaled = FeatureMatrix::new(40, 5, pts.data().iter().map(|v| v * c).collect()).unwrap();
        let a = build_knn_graph(&pts, 3, Metric::Euclidean).unwrap();
        let b = build_knn_graph(&scaled, 3, Metric::Euclidean).unwrap();
        prop_assert_eq!(a.edge_set(), b.edge_set());
    }
}
