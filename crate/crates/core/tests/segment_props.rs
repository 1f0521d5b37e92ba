mod common;

use std::collections::HashMap;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use sgh_core::segment::{cluster_feature_broadcast, segment, ClusterAssignment};
use sgh_core::shapes::icosphere;
use sgh_core::tensor::Tensor;

/// True when two labelings induce the same partition.
fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

#[test]
fn disjoint_components_recovered_exactly() {
    for k in 2..=4 {
        for seed in 0..10 {
            let (g, truth) = random_components(k, (8, 25), 1000 * k as u64 + seed);
            let a = segment(&g, k, k, seed).unwrap();
            assert!(same_partition(a.labels(), &truth), "K={k} seed={seed}");
            assert!(a.cluster_sizes().iter().all(|&s| s > 0));
        }
    }
}

#[test]
fn two_icospheres() {
    let a = icosphere(2, 1.0, [0.0; 3]);
    let b = icosphere(2, 1.0, [5.0, 0.0, 0.0]);
    let g = a.concat(&b).graph();
    let truth: Vec<usize> = (0..g.vertex_count()).map(|i| usize::from(i >= 162)).collect();
    for seed in 0..3 {
        let s = segment(&g, 2, 2, seed).unwrap();
        assert!(same_partition(s.labels(), &truth));
    }
}

#[test]
fn deterministic_for_seed() {
    let g = random_connected_graph(120, 200, 4);
    let a = segment(&g, 5, 5, 17).unwrap();
    let b = segment(&g, 5, 5, 17).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.cluster_sizes().iter().all(|&s| s > 0));
}

#[test]
fn icosphere_seven_clusters_non_empty() {
    let g = icosphere(3, 1.0, [0.0; 3]).graph();
    let a = segment(&g, 7, 7, 0).unwrap();
    assert_eq!(a.cluster_sizes().len(), 7);
    assert!(a.cluster_sizes().iter().all(|&s| s > 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn relabel_invariance(seed in 0u64..10_000, k in 2usize..5) {
        let g = random_connected_graph(50, 40, seed);
        let mut perm: Vec<usize> = (0..50).collect();
        perm.shuffle(&mut rng(seed + 1));
        let h = g.permuted(&perm).unwrap();
        let a = segment(&g, k, k, 3).unwrap();
        let b = segment(&h, k, k, 3).unwrap();
        let mapped: Vec<usize> = (0..50).map(|i| b.labels()[perm[i]]).collect();
        prop_assert!(same_partition(a.labels(), &mapped));
    }

    #[test]
    fn broadcast_permutation_of_cluster_ids(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (k, c, n) = (5, 4, 30);
        let labels: Vec<usize> = (0..n).map(|_| rand::Rng::gen_range(&mut r, 0..k)).collect();
        let feats = Tensor::new(vec![k, c], (0..k * c).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect()).unwrap();
        let pos: Vec<[f64; 3]> = (0..n).map(|_| [rand::Rng::gen(&mut r), rand::Rng::gen(&mut r), rand::Rng::gen(&mut r)]).collect();
        let mut sigma: Vec<usize> = (0..k).collect();
        sigma.shuffle(&mut r);
        let labels2: Vec<usize> = labels.iter().map(|&l| sigma[l]).collect();
        let mut feats2 = Tensor::zeros(&[k, c]);
        for l in 0..k {
            feats2.row_mut(sigma[l]).copy_from_slice(feats.row(l));
        }
        let a = cluster_feature_broadcast(&labels, &feats, &pos).unwrap();
        let b = cluster_feature_broadcast(&labels2, &feats2, &pos).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn broadcast_row_depends_only_on_own_cluster(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (k, c, n) = (4, 3, 20);
        let labels: Vec<usize> = (0..n).map(|_| rand::Rng::gen_range(&mut r, 0..k)).collect();
        let feats = Tensor::new(vec![k, c], (0..k * c).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect()).unwrap();
        let pos = vec![[0.1, 0.2, 0.3]; n];
        let base = cluster_feature_broadcast(&labels, &feats, &pos).unwrap();
        let victim = rand::Rng::gen_range(&mut r, 0..k);
        let mut changed = feats.clone();
        changed.row_mut(victim).iter_mut().for_each(|x| *x += 1.0);
        let other = cluster_feature_broadcast(&labels, &changed, &pos).unwrap();
        for i in 0..n {
            if labels[i] != victim {
                prop_assert_eq!(base.row(i), other.row(i));
            }
        }
    }
}

#[test]
fn json_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clusters.json");
    let a = ClusterAssignment::from_labels(2, vec![0, 1, 1, 0]).unwrap();
    a.save(&path).unwrap();
    assert_eq!(ClusterAssignment::load(&path).unwrap().labels(), a.labels());
}
