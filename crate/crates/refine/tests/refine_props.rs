use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgh_core::mesh::TriMesh;
use sgh_core::shapes::{cube, icosphere};
use sgh_refine::collision::TargetIndex;
use sgh_refine::fixtures::overlapping_spheres;
use sgh_refine::raycast::RayCaster;
use sgh_refine::{arap_energy, collision_loss, collision_mask, plausibility_metrics, refine_mesh, CollisionMask, RefineConfig};

fn d(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[test]
fn parity_matches_analytic_sphere() {
    // A fine icosphere is not a sphere; compare against the polytope's own
    // inscribed and circumscribed radii and the exact convex test.
    let mesh = icosphere(3, 1.0, [0.0; 3]);
    let caster = RayCaster::new(&mesh);
    let x = mesh.positions();
    let planes: Vec<([f64; 3], f64)> = mesh
        .faces()
        .iter()
        .map(|f| {
            let (a, b, c) = (x[f[0]], x[f[1]], x[f[2]]);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            let n = n.map(|q| q / l);
            (n, n[0] * a[0] + n[1] * a[1] + n[2] * a[2])
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut compared = 0;
    for _ in 0..1000 {
        let p = [0; 3].map(|_| rng.gen_range(-1.5..1.5));
        let signed = planes.iter().map(|(n, off)| n[0] * p[0] + n[1] * p[1] + n[2] * p[2] - off).fold(f64::NEG_INFINITY, f64::max);
        if signed.abs() < 1e-6 {
            continue;
        }
        compared += 1;
        assert_eq!(caster.parity(p, 0).inside, signed < 0.0, "{p:?}");
    }
    assert!(compared > 990);
}

#[test]
fn parity_direction_invariant_across_16_seeds() {
    let mesh = icosphere(2, 1.0, [0.1, -0.2, 0.05]);
    let caster = RayCaster::new(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..300 {
        let p = [0; 3].map(|_| rng.gen_range(-1.3..1.3));
        let reference = caster.parity(p, 0);
        if reference.exhausted {
            continue;
        }
        for seed in 1..16 {
            assert_eq!(caster.parity(p, seed).inside, reference.inside);
        }
    }
}

#[test]
fn mask_examples() {
    let a = icosphere(2, 1.0, [0.0; 3]);
    let far = icosphere(2, 1.0, [5.0, 0.0, 0.0]);
    assert_eq!(collision_mask(&a, &far, 0).unwrap().count(), 0);
    let small = icosphere(2, 0.3, [0.0; 3]);
    assert_eq!(collision_mask(&small, &a, 0).unwrap().count(), small.vertex_count());

    // Unit spheres 1.5 apart: interior exactly where the signed distance to
    // the other polytope is negative.
    let b = icosphere(3, 1.0, [1.5, 0.0, 0.0]);
    let a3 = icosphere(3, 1.0, [0.0; 3]);
    let mask = collision_mask(&a3, &b, 0).unwrap();
    let bx = b.positions();
    let oracle = a3
        .positions()
        .iter()
        .filter(|p| {
            b.faces().iter().all(|f| {
                let (q0, q1, q2) = (bx[f[0]], bx[f[1]], bx[f[2]]);
                let u = [q1[0] - q0[0], q1[1] - q0[1], q1[2] - q0[2]];
                let v = [q2[0] - q0[0], q2[1] - q0[1], q2[2] - q0[2]];
                let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
                n[0] * (p[0] - q0[0]) + n[1] * (p[1] - q0[1]) + n[2] * (p[2] - q0[2]) < 0.0
            })
        })
        .count();
    assert!(oracle > 0);
    assert_eq!(mask.count(), oracle);
}

#[test]
fn self_mask_of_convex_mesh_is_empty() {
    let s = icosphere(2, 1.0, [0.0; 3]);
    let m = collision_mask(&s, &s, 5).unwrap();
    assert_eq!(m.count(), 0);
}

#[test]
fn non_watertight_target_rejected() {
    let open = TriMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    assert!(collision_mask(&icosphere(1, 1.0, [0.0; 3]), &open, 0).is_err());
    assert!(plausibility_metrics(&open, &open, 0.5).is_err());
}

fn brute_collision_loss(source: &TriMesh, mask: &CollisionMask, target: &TriMesh) -> f64 {
    let mut total = 0.0;
    for i in 0..source.vertex_count() {
        if !mask.interior[i] {
            continue;
        }
        let p = source.positions()[i];
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, &q) in target.positions().iter().enumerate() {
            let dist = d(p, q);
            if dist < best.1 {
                best = (j, dist);
            }
        }
        let (n, m) = (source.normals()[i], target.normals()[best.0]);
        if n[0] * m[0] + n[1] * m[1] + n[2] * m[2] < 0.0 {
            total += best.1;
        }
    }
    total
}

#[test]
fn collision_loss_matches_double_loop_on_50_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let ra = rng.gen_range(0.02..0.06);
        let rb = rng.gen_range(0.02..0.06);
        let c = [0; 3].map(|_| rng.gen_range(-0.05..0.05));
        let a = icosphere(rng.gen_range(1..3), ra, [0.0; 3]);
        let b = icosphere(rng.gen_range(1..3), rb, c);
        let mask = collision_mask(&a, &b, rng.gen()).unwrap();
        let fast = collision_loss(&a, &mask, &b).unwrap();
        let slow = brute_collision_loss(&a, &mask, &b);
        assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
    }
}

#[test]
fn collision_loss_trivial_cases() {
    let (a, b) = overlapping_spheres();
    assert_eq!(collision_loss(&a, &CollisionMask::empty(a.vertex_count()), &b).unwrap(), 0.0);
    // One interior vertex facing an opposing-normal target vertex at distance d.
    let mut mask = CollisionMask::empty(a.vertex_count());
    let tip = (0..a.vertex_count()).max_by(|&i, &j| a.positions()[i][0].total_cmp(&a.positions()[j][0])).unwrap();
    mask.interior[tip] = true;
    let p = a.positions()[tip];
    let nearest = b.positions().iter().map(|&q| d(p, q)).fold(f64::INFINITY, f64::min);
    assert!((collision_loss(&a, &mask, &b).unwrap() - nearest).abs() < 1e-15);
}

#[test]
fn collision_gradient_matches_finite_differences() {
    let (a, b) = overlapping_spheres();
    let mask = collision_mask(&a, &b, 0).unwrap();
    let index = TargetIndex::new(&b);
    let (_, g) = index.loss_and_gradient(&a, &mask).unwrap();
    let h = 1e-7;
    // Vertices on a mirror plane of the fixture sit at a tie between two
    // nearest targets; pick one with a clear margin.
    let i = (0..a.vertex_count())
        .filter(|&i| mask.interior[i])
        .find(|&i| {
            let mut ds: Vec<f64> = b.positions().iter().map(|&q| d(a.positions()[i], q)).collect();
            ds.sort_by(f64::total_cmp);
            ds[1] - ds[0] > 1e-4
        })
        .unwrap();
    for k in 0..3 {
        let mut xp = a.positions().to_vec();
        xp[i][k] += h;
        let mut xm = a.positions().to_vec();
        xm[i][k] -= h;
        // Normals move with positions but only gate terms; hold the mask fixed.
        let fp = index.loss(&a.with_positions(xp).unwrap(), &mask).unwrap();
        let fm = index.loss(&a.with_positions(xm).unwrap(), &mask).unwrap();
        assert!(((fp - fm) / (2.0 * h) - g[i][k]).abs() < 1e-6);
    }
}

#[test]
fn arap_examples() {
    let s = icosphere(2, 1.0, [0.0; 3]);
    // SVD roundoff leaves ~1e-29 at rest.
    assert!(arap_energy(&s, s.positions()).unwrap() < 1e-20);
    let doubled: Vec<[f64; 3]> = s.positions().iter().map(|p| p.map(|x| 2.0 * x)).collect();
    let expected: f64 = {
        let g = s.graph();
        (0..s.vertex_count())
            .map(|i| g.neighbors(i).map(|j| d(s.positions()[i], s.positions()[j]).powi(2)).sum::<f64>())
            .sum()
    };
    assert!((arap_energy(&s, &doubled).unwrap() - expected).abs() < 1e-9 * expected);
}

#[test]
fn arap_gradient_matches_finite_differences() {
    let s = icosphere(1, 1.0, [0.0; 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<[f64; 3]> = s.positions().iter().map(|p| p.map(|v| v + rng.gen_range(-0.1..0.1))).collect();
    let arap = sgh_refine::Arap::new(&s);
    let g = arap.evaluate(&x).unwrap().gradient;
    let h = 1e-6;
    for i in [0, 5, 17] {
        for k in 0..3 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i][k] += h;
            xm[i][k] -= h;
            let num = (arap.evaluate(&xp).unwrap().energy - arap.evaluate(&xm).unwrap().energy) / (2.0 * h);
            assert!((num - g[i][k]).abs() < 1e-6 * (1.0 + num.abs()), "{num} vs {}", g[i][k]);
        }
    }
}

fn rotate(p: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let k = axis.map(|a| a / n);
    let (s, c) = angle.sin_cos();
    let kxp = [k[1] * p[2] - k[2] * p[1], k[2] * p[0] - k[0] * p[2], k[0] * p[1] - k[1] * p[0]];
    let kdp = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
    [0, 1, 2].map(|i| p[i] * c + kxp[i] * s + k[i] * kdp * (1.0 - c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn arap_rigid_motion_is_free(
        axis in prop::array::uniform3(-1.0f64..1.0).prop_filter("non-zero", |a| a.iter().map(|x| x * x).sum::<f64>() > 1e-3),
        angle in -3.1f64..3.1,
        t in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let s = icosphere(2, 1.0, [0.0; 3]);
        let moved: Vec<[f64; 3]> = s.positions().iter().map(|&p| {
            let r = rotate(p, axis, angle);
            [r[0] + t[0], r[1] + t[1], r[2] + t[2]]
        }).collect();
        let e = arap_energy(&s, &moved).unwrap();
        prop_assert!(e >= 0.0 && e < 1e-8, "{}", e);
    }

    #[test]
    fn arap_non_negative(seed in 0u64..1000, amp in 0.0f64..0.5) {
        let s = icosphere(1, 1.0, [0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<[f64; 3]> = s.positions().iter().map(|p| p.map(|v| v + rng.gen_range(-amp..=amp))).collect();
        prop_assert!(arap_energy(&s, &x).unwrap() >= 0.0);
    }
}

#[test]
fn metrics_examples() {
    let a = icosphere(2, 0.03, [0.0; 3]);
    let b = icosphere(2, 0.03, [0.2, 0.0, 0.0]);
    let r = plausibility_metrics(&a, &b, 0.5).unwrap();
    assert_eq!((r.max_penetration_mm, r.intersection_volume_cm3), (0.0, 0.0));
    let c = cube(0.1, [0.0; 3]);
    let r = plausibility_metrics(&c, &c.clone(), 0.5).unwrap();
    assert!((r.intersection_volume_cm3 - 1000.0).abs() <= 60.0, "{}", r.intersection_volume_cm3);
    assert_eq!(r.voxel_size_cm, 0.5);
}

#[test]
fn disjoint_input_is_unchanged() {
    let a = icosphere(2, 0.03, [0.0; 3]);
    let b = icosphere(2, 0.03, [0.2, 0.0, 0.0]);
    let out = refine_mesh(&a, &b, &RefineConfig::default()).unwrap();
    assert_eq!(out.mesh, a);
    assert_eq!(out.summary.after.max_penetration_mm, 0.0);
}

#[test]
fn overlapping_spheres_refinement() {
    let (a, b) = overlapping_spheres();
    let start = Instant::now();
    let out = refine_mesh(&a, &b, &RefineConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let s = &out.summary;
    eprintln!("{s:?} in {secs:.1}s");
    assert_eq!(out.mesh.faces(), a.faces());
    assert!(s.after.max_penetration_mm <= 0.05 * s.before.max_penetration_mm);
    assert!(s.after.intersection_volume_cm3 <= 0.10 * s.before.intersection_volume_cm3);
    assert!(secs < 60.0);
}
