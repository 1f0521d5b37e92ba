use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgh_core::mesh::{edge_set, TriMesh};
use sgh_core::tensor::Tensor;
use sgh_model::camera::CameraParams;
use sgh_model::losses::{self, loss_chamfer, loss_edge, loss_l1_mesh, loss_mse, loss_reproject_2d, mpve, SweepIndex};
use sgh_model::Tape;

fn cloud(rng: &mut impl Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]).collect()
}

fn d2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

fn brute_chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let mut ab = 0.0;
    for &p in a {
        let mut best = f64::INFINITY;
        for &q in b {
            best = best.min(d2(p, q));
        }
        ab += best;
    }
    let mut ba = 0.0;
    for &q in b {
        let mut best = f64::INFINITY;
        for &p in a {
            best = best.min(d2(p, q));
        }
        ba += best;
    }
    0.5 * (ab / a.len() as f64 + ba / b.len() as f64)
}

#[test]
fn metrics_match_loop_oracles_on_50_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let n = rng.gen_range(1..200);
        let m = rng.gen_range(1..200);
        let a = cloud(&mut rng, n);
        let b = cloud(&mut rng, m);
        assert!((loss_chamfer(&a, &b).unwrap() - brute_chamfer(&a, &b)).abs() < 1e-10);

        let g = cloud(&mut rng, n);
        let (pa, pg) = (Tensor::from_points(&a), Tensor::from_points(&g));
        let mut sum_d = 0.0;
        let mut sum_d2 = 0.0;
        let mut sum_l1 = 0.0;
        for i in 0..n {
            sum_d += d2(a[i], g[i]).sqrt();
            sum_d2 += d2(a[i], g[i]);
            for k in 0..3 {
                sum_l1 += (a[i][k] - g[i][k]).abs();
            }
        }
        assert!((mpve(&pa, &pg).unwrap() - 1000.0 * sum_d / n as f64).abs() < 1e-10);
        assert!((loss_mse(&pa, &pg).unwrap() - sum_d2 / n as f64).abs() < 1e-10);
        assert!((loss_l1_mesh(&pa, &pg).unwrap() - sum_l1 / (3 * n) as f64).abs() < 1e-10);
    }
}

#[test]
fn sweep_nearest_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = cloud(&mut rng, 300);
    let idx = SweepIndex::new(&pts);
    for q in cloud(&mut rng, 100) {
        let (i, d) = idx.nearest(q);
        let best = pts.iter().map(|&p| d2(p, q)).fold(f64::INFINITY, f64::min);
        assert_eq!(d, best);
        assert_eq!(d2(pts[i], q), best);
    }
}

fn triangle(corners: [[f64; 3]; 3]) -> TriMesh {
    TriMesh::new(corners.to_vec(), vec![[0, 1, 2]]).unwrap()
}

#[test]
fn edge_loss_fixtures() {
    // Every squared edge length is exactly 2.
    let equilateral = triangle([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    assert_eq!(loss_edge(&edge_set(&equilateral)).unwrap(), 0.0);

    // Path with edge lengths 1 and √3.
    let pts = Tensor::from_points(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 1.0, 1.0]]);
    let edges = vec![(0, 1), (1, 2)];
    let sq: Vec<f64> = edges.iter().map(|&(a, b)| d2(pts.row(a).try_into().unwrap(), pts.row(b).try_into().unwrap())).collect();
    let mean = (sq[0] + sq[1]) / 2.0;
    let direct = ((sq[0] - mean).abs() + (sq[1] - mean).abs()) / 2.0;
    let mut tape = Tape::new();
    let p = tape.constant(pts);
    let l = losses::edge(&mut tape, p, Arc::new(edges)).unwrap();
    assert!((tape.value(l).data()[0] - 1.0).abs() < 1e-12);
    assert!((direct - 1.0).abs() < 1e-12);
}

#[test]
fn reprojection_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts = cloud(&mut rng, 20);
    let cams: Vec<CameraParams> = (0..3)
        .map(|_| CameraParams { scale: rng.gen_range(0.5..2.0), translation: [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)] })
        .collect();
    let gt: Vec<f64> = (0..3 * 20 * 2).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let gt2d = Tensor::new(vec![3, 20, 2], gt.clone()).unwrap();
    let mut total = 0.0;
    for (n, c) in cams.iter().enumerate() {
        for (i, p) in pts.iter().enumerate() {
            total += (c.scale * p[0] + c.translation[0] - gt[(n * 20 + i) * 2]).abs();
            total += (c.scale * p[1] + c.translation[1] - gt[(n * 20 + i) * 2 + 1]).abs();
        }
    }
    let got = loss_reproject_2d(&Tensor::from_points(&pts), &gt2d, &cams).unwrap();
    assert!((got - total / 120.0).abs() < 1e-12);
}

#[test]
fn tape_losses_agree_with_plain_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = cloud(&mut rng, 30);
    let b = cloud(&mut rng, 30);
    let (pa, pb) = (Tensor::from_points(&a), Tensor::from_points(&b));
    let edges: Vec<(usize, usize)> = (0..29).map(|i| (i, i + 1)).collect();
    let mut tape = Tape::new();
    let p = tape.leaf("p", pa.clone());
    let l1 = losses::l1_mesh(&mut tape, p, pb.clone()).unwrap();
    let ms = losses::mse(&mut tape, p, pb.clone()).unwrap();
    let ch = losses::chamfer(&mut tape, p, b.clone()).unwrap();
    let ed = losses::edge(&mut tape, p, Arc::new(edges.clone())).unwrap();
    assert_eq!(tape.value(l1).data()[0], loss_l1_mesh(&pa, &pb).unwrap());
    assert_eq!(tape.value(ms).data()[0], loss_mse(&pa, &pb).unwrap());
    assert_eq!(tape.value(ch).data()[0], loss_chamfer(&a, &b).unwrap());
    let sq: Vec<f64> = edges.iter().map(|&(i, j)| d2(a[i], a[j])).collect();
    assert_eq!(tape.value(ed).data()[0], losses::edge_loss_from_squared(&sq).unwrap());
}

fn rotation(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    sgh_model::scene::RigidPose::from_axis_angle(axis, angle, [0.0; 3]).rotation
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_loss_rigid_invariant(
        seed in 0u64..1000,
        ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0,
        angle in -3.1f64..3.1,
        t in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let mesh = sgh_core::shapes::icosphere(1, 0.05, [0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jittered: Vec<[f64; 3]> = mesh.positions().iter()
            .map(|p| [p[0] + rng.gen_range(-0.01..0.01), p[1] + rng.gen_range(-0.01..0.01), p[2]])
            .collect();
        let m = mesh.with_positions(jittered).unwrap();
        let r = rotation([ax, ay, az], angle);
        let moved = m.transformed(|p| {
            let q = [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i]);
            q
        }, false);
        let a = loss_edge(&edge_set(&m)).unwrap();
        let b = loss_edge(&edge_set(&moved)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn chamfer_symmetric_and_zero_on_self(seed in 0u64..1000, n in 1usize..40, m in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = cloud(&mut rng, n);
        let b = cloud(&mut rng, m);
        prop_assert_eq!(loss_chamfer(&a, &a).unwrap(), 0.0);
        prop_assert!((loss_chamfer(&a, &b).unwrap() - loss_chamfer(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn mpve_translation_equals_norm(t in prop::array::uniform3(-0.1f64..0.1), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let a = cloud(&mut rng, n);
        let b: Vec<[f64; 3]> = a.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect();
        let norm = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        prop_assert!((mpve(&Tensor::from_points(&b), &Tensor::from_points(&a)).unwrap() - 1000.0 * norm).abs() < 1e-9);
    }
}
