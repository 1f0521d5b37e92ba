mod common;

use common::*;
use proptest::prelude::*;
use sgh_core::eigen::{eigendecompose, eigenvalues, lambda_max};
use sgh_core::graph::{laplacian, scaled_laplacian};
use sgh_core::Error;

fn oracle_eigenvalues(l: &sgh_core::graph::Laplacian) -> Vec<f64> {
    let mut v: Vec<f64> = dense(l).symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn full_spectrum_matches_dense_oracle() {
    for seed in 0..5 {
        let g = random_connected_graph(50, 60, seed);
        let l = laplacian(&g);
        let s = eigendecompose(&l, 50).unwrap();
        let oracle = oracle_eigenvalues(&l);
        for (a, b) in s.eigenvalues().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn reconstruction_from_full_spectrum() {
    let g = random_connected_graph(60, 90, 11);
    let l = laplacian(&g);
    let s = eigendecompose(&l, 60).unwrap();
    let u = nalgebra::DMatrix::from_row_slice(60, 60, s.eigenvectors().data());
    let lam = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s.eigenvalues()));
    let rec = &u * lam * u.transpose();
    let orig = dense(&l);
    assert!((rec - &orig).norm() / orig.norm() < 1e-6);
}

#[test]
fn partial_matches_full() {
    for seed in 0..5 {
        let g = random_connected_graph(80, 100, 100 + seed);
        let l = laplacian(&g);
        let full = eigendecompose(&l, 80).unwrap();
        let part = eigendecompose(&l, 10).unwrap();
        for (a, b) in part.eigenvalues().iter().zip(full.eigenvalues()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        check_pairs(&l, &part);
    }
}

fn check_pairs(l: &sgh_core::graph::Laplacian, s: &sgh_core::eigen::Spectrum) {
    let norm_l = dense(l).norm();
    for i in 0..s.len() {
        let u = s.vector(i);
        let lu = l.matrix().matvec(&u);
        let res: f64 = lu.iter().zip(&u).map(|(a, b)| (a - s.eigenvalues()[i] * b).powi(2)).sum::<f64>().sqrt();
        assert!(res <= 1e-6 * norm_l.max(1.0), "residual {res} for pair {i}");
        for j in 0..s.len() {
            let uj = s.vector(j);
            let d: f64 = u.iter().zip(&uj).map(|(a, b)| a * b).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((d - expect).abs() < 1e-8, "gram[{i}][{j}] = {d}");
        }
        let first = u.iter().find(|x| x.abs() > 1e-10).unwrap();
        assert!(*first > 0.0);
    }
}

#[test]
fn connected_graph_constant_vector() {
    let g = random_connected_graph(40, 30, 5);
    let s = eigendecompose(&laplacian(&g), 1).unwrap();
    assert_eq!(s.eigenvalues()[0], 0.0);
    for x in s.vector(0) {
        assert!((x - 1.0 / 40f64.sqrt()).abs() < 1e-8);
    }
}

#[test]
fn disconnected_graph_has_repeated_zero() {
    let (g, _) = random_components(2, (10, 20), 3);
    let l = laplacian(&g);
    let s = eigendecompose(&l, 2).unwrap();
    assert_eq!(s.eigenvalues(), &[0.0, 0.0]);
    check_pairs(&l, &s);
}

#[test]
fn deterministic_bitwise() {
    let g = random_connected_graph(70, 80, 9);
    let l = laplacian(&g);
    assert_eq!(eigendecompose(&l, 7).unwrap(), eigendecompose(&l, 7).unwrap());
    assert_eq!(eigendecompose(&l, 70).unwrap(), eigendecompose(&l, 70).unwrap());
}

#[test]
fn out_of_range_k() {
    let l = laplacian(&random_connected_graph(5, 2, 1));
    assert!(matches!(eigendecompose(&l, 6), Err(Error::Argument(_))));
}

#[test]
fn lambda_max_matches_oracle() {
    for seed in 0..5 {
        let l = laplacian(&random_connected_graph(45, 70, 40 + seed));
        let oracle = *oracle_eigenvalues(&l).last().unwrap();
        assert!((lambda_max(&l).unwrap() - oracle).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_eigenvalues_count_components(parts in 1usize..5, seed in 0u64..1000) {
        let (g, _) = random_components(parts, (3, 12), seed);
        let l = laplacian(&g);
        let n = g.vertex_count();
        let s = eigendecompose(&l, n).unwrap();
        prop_assert_eq!(s.zero_count(), union_find_components(n, &g.edges()));
        check_pairs(&l, &s);
    }

    #[test]
    fn partial_spectrum_on_disconnected_graphs(parts in 1usize..5, seed in 0u64..1000) {
        let (g, _) = random_components(parts, (5, 15), seed);
        let l = laplacian(&g);
        let k = (parts + 3).min(g.vertex_count());
        let s = eigendecompose(&l, k).unwrap();
        let oracle = oracle_eigenvalues(&l);
        for (a, b) in s.eigenvalues().iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        check_pairs(&l, &s);
    }

    #[test]
    fn laplacian_rows_and_psd(n in 2usize..40, extra in 0usize..60, seed in 0u64..1000) {
        let g = random_connected_graph(n, extra, seed);
        let l = laplacian(&g);
        for r in 0..n {
            prop_assert!(l.matrix().row_sum(r).abs() < 1e-10);
        }
        let mut r = rng(seed ^ 0xABCD);
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect();
            prop_assert!(l.quadratic_form(&x) >= -1e-9);
        }
    }

    #[test]
    fn scaled_spectrum_in_unit_interval(n in 2usize..40, extra in 0usize..60, seed in 0u64..1000) {
        let l = laplacian(&random_connected_graph(n, extra, seed));
        let lm = lambda_max(&l).unwrap();
        let vals = eigenvalues(&scaled_laplacian(&l, lm).unwrap()).unwrap();
        for v in vals {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&v));
        }
    }
}
