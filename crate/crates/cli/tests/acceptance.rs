//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always visible; exits non-zero on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgh_cli::oracle::{random_components, random_connected_graph};
use sgh_core::filter::{chebyshev_filter, init_theta};
use sgh_core::graph::{laplacian, scaled_laplacian};
use sgh_core::mesh::{edge_set, TriMesh};
use sgh_core::segment::{segment, ClusterAssignment};
use sgh_core::shapes::icosphere;
use sgh_core::Tensor;
use sgh_model::fusion::{self, fuse_views, fusion_forward};
use sgh_model::geometry::Geometry;
use sgh_model::gradcheck::{gradcheck_registry, run_checks, GradCheckOptions};
use sgh_model::losses::{self, loss_chamfer, loss_mse, mpve};
use sgh_model::params::Parameters;
use sgh_model::scene::{synth_backbone_features, RigidPose};
use sgh_model::template::template_registry;
use sgh_model::{Model, ModelConfig, Tape};
use sgh_refine::fixtures::overlapping_spheres;
use sgh_refine::{collision_loss, collision_mask, point_in_mesh, refine_mesh, RefineConfig};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn d2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Seven-cluster segmentation of the 4023-vertex right-hand template, shared by
/// the clustering and shape-trace criteria.
static HAND_SEGMENTATION: OnceLock<ClusterAssignment> = OnceLock::new();

fn hand_template() -> TriMesh {
    template_registry().get("hand").expect("hand template registered").right()
}

fn spectral_oracle() -> Verdict {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = r.gen_range(30..=100);
        let l = laplacian(&random_connected_graph(n, n, &mut r).map_err(|e| e.to_string())?);
        let theta = init_theta(3, 4, 2, &mut r);
        let x = random_tensor(&[n, 4], &mut r);

        let dense = DMatrix::from_row_slice(n, n, &l.matrix().to_dense());
        let eig = SymmetricEigen::new(dense);
        let lmax = eig.eigenvalues.max();
        let fast = chebyshev_filter(&scaled_laplacian(&l, lmax).unwrap(), &theta, &x).unwrap();

        // U · T_k(Λ̃) · Uᵀ · X · θ_k summed over k, with T_k by its recurrence.
        let xm = DMatrix::from_row_slice(n, 4, x.data());
        let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| 2.0 * l / lmax - 1.0).collect();
        let mut t = vec![vec![1.0; n], lam.clone()];
        t.push((0..n).map(|i| 2.0 * lam[i] * t[1][i] - t[0][i]).collect());
        let mut y = DMatrix::<f64>::zeros(n, 2);
        for (k, tk) in t.into_iter().enumerate() {
            let gk = &eig.eigenvectors * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(tk)) * eig.eigenvectors.transpose();
            let th = DMatrix::from_row_slice(4, 2, &theta.data()[k * 8..(k + 1) * 8]);
            y += gk * &xm * th;
        }
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let diff = fast.data().iter().zip(y.transpose().iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(diff / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-5, || format!("max relative error {worst:.2e}"))?;
    ensure(secs < 5.0, || format!("took {secs:.1} s"))?;
    Ok(format!("20 graphs, max relative error {worst:.1e}, {secs:.2} s"))
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let opts = GradCheckOptions::default();
    let reports = run_checks(&[], &opts).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let expected: Vec<String> = gradcheck_registry().names().map(String::from).collect();
    let got: Vec<String> = reports.iter().map(|r| r.module.clone()).collect();
    ensure(got == expected, || format!("modules {got:?}"))?;
    for m in ["fusion", "transformer", "decoder", "spectral_filter", "losses", "camera"] {
        ensure(got.iter().any(|g| g == m), || format!("module {m} not checked"))?;
    }
    let worst = reports.iter().map(|r| r.max_rel_error()).fold(0.0, f64::max);
    for r in &reports {
        ensure(r.passed(1e-4), || format!("{} max relative error {:.2e}", r.module, r.max_rel_error()))?;
    }
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    let checked: usize = reports.iter().map(|r| r.checked()).sum();
    Ok(format!("{} modules, {checked} coordinates, max relative error {worst:.1e}, {secs:.2} s", reports.len()))
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let (mut ab, mut ba) = (std::collections::HashMap::new(), std::collections::HashMap::new());
    a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

fn spectral_clustering() -> Verdict {
    let mut r = rng(3);
    for k in 2..=4 {
        for seed in 0..10u64 {
            let (g, truth) = random_components(k, &mut r).map_err(|e| e.to_string())?;
            let found = segment(&g, k, k, seed).map_err(|e| e.to_string())?;
            ensure(same_partition(found.labels(), &truth), || format!("K={k} seed {seed} not recovered"))?;
        }
    }
    let start = Instant::now();
    let graph = hand_template().graph();
    let first = segment(&graph, 7, 7, 0).map_err(|e| e.to_string())?;
    let second = segment(&graph, 7, 7, 0).map_err(|e| e.to_string())?;
    ensure(first == second, || "template segmentation differs between runs".into())?;
    let sizes = first.cluster_sizes();
    ensure(graph.vertex_count() == 4023, || format!("template has {} vertices", graph.vertex_count()))?;
    ensure(sizes.len() == 7 && sizes.iter().all(|&s| s > 0), || format!("cluster sizes {sizes:?}"))?;
    let _ = HAND_SEGMENTATION.set(first);
    Ok(format!(
        "30 component graphs recovered; 4023-vertex template K=7 sizes {sizes:?}, deterministic ({:.0} s for two runs)",
        start.elapsed().as_secs_f64()
    ))
}

fn shape_trace() -> Verdict {
    let cfg = ModelConfig::paper();
    let geometry = Geometry::build_with_segmentation(&cfg, HAND_SEGMENTATION.get().cloned()).map_err(|e| e.to_string())?;
    let model = Model::with_geometry(cfg.clone(), Arc::new(geometry)).map_err(|e| e.to_string())?;
    let params = model.init_params().map_err(|e| e.to_string())?;
    let features = synth_backbone_features(0, &cfg);
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let fwd = model.forward(&mut tape, &pv, &features).map_err(|e| e.to_string())?;
    let trace = fwd.shape_trace(&tape, &features);
    let mut expected: Vec<(String, Vec<usize>)> = vec![
        ("f_prime".into(), vec![2, 22, 22, 256]),
        ("mask".into(), vec![2, 22, 22, 7]),
        ("f_double_prime".into(), vec![2, 7, 256]),
        ("f_r".into(), vec![7, 256]),
        ("tokens".into(), vec![804, 259]),
        ("encoder.reduce0".into(), vec![804, 130]),
        ("encoder.reduce1".into(), vec![804, 65]),
        ("encoder.output".into(), vec![804, 3]),
        ("output".into(), vec![8046, 3]),
    ];
    for hand in ["right", "left"] {
        for (l, n) in [617, 1234, 2468, 4023].into_iter().enumerate() {
            expected.push((format!("decoder.{hand}.fc{l}"), vec![n, 3]));
            // The finest level ends on its upsampling layer.
            if n != 4023 {
                expected.push((format!("decoder.{hand}.cheb{l}"), vec![n, 3]));
            }
        }
    }
    let decoder_rows = trace.iter().filter(|r| r.name.starts_with("decoder.")).count();
    ensure(decoder_rows == 14, || format!("{decoder_rows} decoder rows, expected 14"))?;
    for (name, shape) in &expected {
        let row = trace.iter().find(|r| &r.name == name).ok_or_else(|| format!("no trace row {name}"))?;
        ensure(&row.shape == shape, || format!("{name} is {:?}, expected {shape:?}", row.shape))?;
    }
    Ok(format!("{} dimensionality rows match (f' 22x22x256 ... output 8046x3)", expected.len()))
}

fn mask_and_fusion() -> Verdict {
    let mut r = rng(5);
    let mut params = Parameters::new();
    fusion::init_params(&mut params, 2048, 256, 7, &mut r).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let features = random_tensor(&[2, 7, 7, 2048], &mut r);
        let mut tape = Tape::new();
        let pv = params.register(&mut tape);
        let out = fusion_forward(&mut tape, &pv, &features).map_err(|e| e.to_string())?;
        for &m in &out.masks {
            let t = tape.value(m);
            for k in 0..t.cols() {
                worst = worst.max((t.column(k).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    ensure(worst < 1e-6, || format!("mask channel sum off by {worst:.2e}"))?;
    for case in 0..100 {
        let views = r.gen_range(1..6);
        let (hw, c, k) = (r.gen_range(1..30), r.gen_range(1..12), r.gen_range(1..8));
        let fs: Vec<Tensor> = (0..views).map(|_| random_tensor(&[hw, c], &mut r)).collect();
        let ms: Vec<Tensor> = (0..views).map(|_| random_tensor(&[hw, k], &mut r)).collect();
        let mut perm: Vec<usize> = (0..views).collect();
        for i in (1..views).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        let run = |order: &[usize]| {
            let mut tape = Tape::new();
            let f: Vec<_> = order.iter().map(|&i| tape.constant(fs[i].clone())).collect();
            let m: Vec<_> = order.iter().map(|&i| tape.constant(ms[i].clone())).collect();
            let (_, fr) = fuse_views(&mut tape, &f, &m).unwrap();
            tape.value(fr).clone()
        };
        ensure(run(&(0..views).collect::<Vec<_>>()) == run(&perm), || format!("case {case} not permutation invariant"))?;
    }
    Ok(format!("max mask channel-sum error {worst:.1e}; fuse_views bit-identical under 100 view permutations"))
}

fn edge_loss_tape(points: &[[f64; 3]], edges: Vec<(usize, usize)>) -> f64 {
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::from_points(points));
    let l = losses::edge(&mut tape, p, Arc::new(edges)).unwrap();
    tape.value(l).data()[0]
}

fn edge_loss() -> Verdict {
    let tri = TriMesh::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
    let equilateral = losses::loss_edge(&edge_set(&tri)).map_err(|e| e.to_string())?;
    ensure(equilateral == 0.0, || format!("equilateral fixture gives {equilateral:e}"))?;

    // Two edges of lengths 1 and √3: squared 1 and 3 around a mean of 2.
    let path = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 1.0, 1.0]];
    let sq = [d2(path[0], path[1]), d2(path[1], path[2])];
    let mean = (sq[0] + sq[1]) / 2.0;
    let direct = ((sq[0] - mean).abs() + (sq[1] - mean).abs()) / 2.0;
    let taped = edge_loss_tape(&path, vec![(0, 1), (1, 2)]);
    ensure((direct - 1.0).abs() < 1e-12 && (taped - direct).abs() < 1e-12, || format!("two-edge fixture {taped} vs {direct}"))?;

    let mut r = rng(6);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let base = icosphere(r.gen_range(0..3), r.gen_range(0.02..1.0), [0.0; 3]);
        let pts: Vec<[f64; 3]> = base.positions().iter().map(|p| p.map(|x| x + r.gen_range(-0.01..0.01))).collect();
        let edges = edge_set(&base).edges;
        let pose = RigidPose::random(&mut r, std::f64::consts::PI, 1.0);
        let moved: Vec<[f64; 3]> = pts.iter().map(|&p| pose.apply_about(p, [0.0; 3])).collect();
        worst = worst.max((edge_loss_tape(&pts, edges.clone()) - edge_loss_tape(&moved, edges)).abs());
    }
    ensure(worst < 1e-9, || format!("rigid motion changes the loss by {worst:e}"))?;
    Ok(format!("equilateral 0, two-edge {taped}, rigid-motion drift {worst:.1e} over 50 poses"))
}

fn training_sanity() -> Verdict {
    let dir = std::env::temp_dir().join(format!("sgh-acceptance-overfit-{}", std::process::id()));
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_sgh"))
        .args(["overfit", "--steps", "500", "--scene-seed", "7", "--json", "--out"])
        .arg(&dir)
        .output()
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let records = std::fs::read_to_string(dir.join("losses.jsonl")).map_err(|e| e.to_string())?.lines().count();
    let _ = std::fs::remove_dir_all(&dir);
    let (initial, last) = (report["initial_loss"].as_f64().unwrap(), report["final_loss"].as_f64().unwrap());
    let reduction = 1.0 - last / initial;
    ensure(records == 500, || format!("{records} log records"))?;
    ensure(reduction >= 0.9, || format!("loss {initial:.4e} -> {last:.4e}, only {:.1}% lower", 100.0 * reduction))?;
    ensure(secs < 300.0, || format!("took {secs:.0} s"))?;
    Ok(format!("toy config, 500 steps: {initial:.4e} -> {last:.4e} ({:.1}% reduction), {secs:.0} s", 100.0 * reduction))
}

fn refinement_ratio() -> Verdict {
    let (a, b) = overlapping_spheres();
    let start = Instant::now();
    let outcome = refine_mesh(&a, &b, &RefineConfig::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let s = &outcome.summary;
    let pen = 1.0 - s.after.max_penetration_mm / s.before.max_penetration_mm;
    let vol = 1.0 - s.after.intersection_volume_cm3 / s.before.intersection_volume_cm3;
    ensure(s.before.max_penetration_mm > 0.0 && s.before.intersection_volume_cm3 > 0.0, || "fixture does not overlap".into())?;
    ensure(outcome.mesh.faces() == a.faces(), || "topology changed".into())?;
    ensure(pen >= 0.95, || format!("penetration reduced by {:.1}%", 100.0 * pen))?;
    ensure(vol >= 0.90, || format!("intersection volume reduced by {:.1}%", 100.0 * vol))?;
    ensure(secs < 60.0, || format!("took {secs:.0} s"))?;
    Ok(format!(
        "penetration {:.2} -> {:.3} mm ({:.1}%), volume {:.2} -> {:.2} cm3 ({:.1}%), {secs:.1} s",
        s.before.max_penetration_mm,
        s.after.max_penetration_mm,
        100.0 * pen,
        s.before.intersection_volume_cm3,
        s.after.intersection_volume_cm3,
        100.0 * vol
    ))
}

/// Signed distance to each face plane of a convex mesh; inside iff all are negative.
fn plane_distances(p: [f64; 3], mesh: &TriMesh) -> Vec<f64> {
    mesh.faces()
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| mesh.positions()[i]);
            let (u, v) = ([0, 1, 2].map(|k| b[k] - a[k]), [0, 1, 2].map(|k| c[k] - a[k]));
            let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            (0..3).map(|k| n[k] * (p[k] - a[k])).sum::<f64>() / len
        })
        .collect()
}

fn point_in_mesh_oracle() -> Verdict {
    let mesh = icosphere(3, 1.0, [0.0; 3]);
    let inradius = plane_distances([0.0; 3], &mesh).iter().fold(f64::INFINITY, |m, d| m.min(-d));
    let mut r = rng(9);
    let (mut compared, mut sphere_checked, mut shell) = (0, 0, 0);
    for _ in 0..1000 {
        let p = [0; 3].map(|_| r.gen_range(-1.3..1.3));
        let d = plane_distances(p, &mesh);
        let worst = d.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        // Inside, the surface distance is -worst; outside it is at least worst.
        if worst.abs() < 1e-6 {
            shell += 1;
            continue;
        }
        let truth = worst < 0.0;
        let radius = d2(p, [0.0; 3]).sqrt();
        let seeds: Vec<bool> = (0..16).map(|s| point_in_mesh(p, &mesh, s)).collect();
        ensure(seeds.iter().all(|&x| x == seeds[0]), || format!("{p:?} depends on the ray direction"))?;
        ensure(seeds[0] == truth, || format!("{p:?}: parity {} vs exact {truth}", seeds[0]))?;
        if radius < inradius - 1e-6 || radius > 1.0 + 1e-6 {
            ensure(seeds[0] == (radius < 1.0), || format!("{p:?} disagrees with the analytic sphere"))?;
            sphere_checked += 1;
        }
        compared += 1;
    }
    Ok(format!(
        "{compared}/{compared} agree with the exact polytope ({sphere_checked} also unambiguous for the sphere, {shell} in the shell), 16 seeds"
    ))
}

fn metric_oracles() -> Verdict {
    let mut r = rng(10);
    let mut worst = [0.0f64; 4];
    for _ in 0..50 {
        let n = r.gen_range(1..150);
        let a: Vec<[f64; 3]> = (0..n).map(|_| [0; 3].map(|_| r.gen_range(-0.2..0.2))).collect();
        let b: Vec<[f64; 3]> = (0..n).map(|_| [0; 3].map(|_| r.gen_range(-0.2..0.2))).collect();
        let c: Vec<[f64; 3]> = (0..r.gen_range(1..150)).map(|_| [0; 3].map(|_| r.gen_range(-0.2..0.2))).collect();
        let (ta, tb) = (Tensor::from_points(&a), Tensor::from_points(&b));

        let mut dist = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            dist += d2(a[i], b[i]).sqrt();
            sq += d2(a[i], b[i]);
        }
        worst[0] = worst[0].max((mpve(&ta, &tb).unwrap() - 1000.0 * dist / n as f64).abs());
        worst[1] = worst[1].max((loss_mse(&ta, &tb).unwrap() - sq / n as f64).abs());

        let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| {
            from.iter().map(|&p| to.iter().map(|&q| d2(p, q)).fold(f64::INFINITY, f64::min)).sum::<f64>() / from.len() as f64
        };
        worst[2] = worst[2].max((loss_chamfer(&a, &c).unwrap() - 0.5 * (directed(&a, &c) + directed(&c, &a))).abs());

        let s = icosphere(r.gen_range(1..3), r.gen_range(0.02..0.06), [0.0; 3]);
        let t = icosphere(r.gen_range(1..3), r.gen_range(0.02..0.06), [0; 3].map(|_| r.gen_range(-0.05..0.05)));
        let mask = collision_mask(&s, &t, r.gen()).unwrap();
        let mut slow = 0.0;
        for (i, (&p, m)) in s.positions().iter().zip(s.normals()).enumerate() {
            if !mask.interior[i] {
                continue;
            }
            let (mut j, mut best) = (0, f64::INFINITY);
            for (k, &q) in t.positions().iter().enumerate() {
                if d2(p, q) < best {
                    (j, best) = (k, d2(p, q));
                }
            }
            let tn = t.normals()[j];
            if m[0] * tn[0] + m[1] * tn[1] + m[2] * tn[2] < 0.0 {
                slow += best.sqrt();
            }
        }
        worst[3] = worst[3].max((collision_loss(&s, &mask, &t).unwrap() - slow).abs());
    }
    for (name, w) in ["mpve", "loss_mse", "loss_chamfer", "collision_loss"].iter().zip(worst) {
        ensure(w < 1e-10, || format!("{name} off by {w:e}"))?;
    }
    Ok(format!(
        "50 instances each; max |diff| mpve {:.0e}, mse {:.0e}, chamfer {:.0e}, collision {:.0e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("spectral oracle equivalence", spectral_oracle),
        ("gradient suite", gradient_suite),
        ("spectral clustering correctness", spectral_clustering),
        ("architecture shape trace", shape_trace),
        ("mask normalization and fusion invariance", mask_and_fusion),
        ("edge loss", edge_loss),
        ("desk-scale training sanity", training_sanity),
        ("collision refinement ratio", refinement_ratio),
        ("point-in-mesh oracle", point_in_mesh_oracle),
        ("metric oracles", metric_oracles),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match verdict {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
