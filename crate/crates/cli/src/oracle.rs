//! Brute-force equivalence suites behind `sgh oracle`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sgh_core::eigen::{eigendecompose, lambda_max};
use sgh_core::filter::{chebyshev_filter, dense_spectral_filter, init_theta, FilterSpec};
use sgh_core::graph::{laplacian, scaled_laplacian, MeshGraph};
use sgh_core::segment::segment;
use sgh_core::shapes::icosphere;
use sgh_core::{Registry, Tensor};
use sgh_model::losses::loss_chamfer;
use sgh_refine::{collision_loss, collision_mask};

use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub test: String,
    pub cases: usize,
    /// Largest discrepancy seen; for clustering, the number of mismatched cases.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub trait Oracle: Send + Sync {
    fn description(&self) -> &'static str;
    fn tolerance(&self) -> f64;
    /// Largest discrepancy over all cases, and the case count.
    fn measure(&self, seed: u64) -> Result<(f64, usize)>;
}

pub struct ChebyshevOracle;
pub struct ClusteringOracle;
pub struct ChamferOracle;
pub struct CollisionOracle;

pub fn oracle_registry() -> Registry<dyn Oracle> {
    Registry::<dyn Oracle>::new()
        .with("chebyshev", Box::new(ChebyshevOracle))
        .with("clustering", Box::new(ClusteringOracle))
        .with("chamfer", Box::new(ChamferOracle))
        .with("collision", Box::new(CollisionOracle))
}

pub fn run_oracle(name: &str, oracle: &dyn Oracle, seed: u64) -> Result<OracleReport> {
    let (max_error, cases) = oracle.measure(seed)?;
    let tolerance = oracle.tolerance();
    Ok(OracleReport { test: name.to_string(), cases, max_error, tolerance, passed: max_error < tolerance })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus `extra` random chords, so the graph is connected.
pub fn random_connected_graph(n: usize, extra: usize, rng: &mut impl Rng) -> Result<MeshGraph> {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    for _ in 0..extra {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.push((a, b));
        }
    }
    let positions = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    Ok(MeshGraph::from_edges(positions, &edges)?)
}

/// Disjoint union of `parts` connected graphs under a random vertex relabelling,
/// with the true component of every vertex.
pub fn random_components(parts: usize, rng: &mut impl Rng) -> Result<(MeshGraph, Vec<usize>)> {
    let mut edges = Vec::new();
    let mut truth = Vec::new();
    for p in 0..parts {
        let n = rng.gen_range(8..=30);
        let offset = truth.len();
        let g = random_connected_graph(n, n, rng)?;
        edges.extend(g.edges().into_iter().map(|(a, b)| (a + offset, b + offset)));
        truth.extend(std::iter::repeat(p).take(n));
    }
    let total = truth.len();
    let mut perm: Vec<usize> = (0..total).collect();
    for i in (1..total).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let edges: Vec<_> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    let mut labels = vec![0; total];
    for (old, &new) in perm.iter().enumerate() {
        labels[new] = truth[old];
    }
    let positions = (0..total).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    Ok((MeshGraph::from_edges(positions, &edges)?, labels))
}

/// True when the two labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut forward = std::collections::HashMap::new();
    let mut backward = std::collections::HashMap::new();
    a.len() == b.len()
        && a.iter().zip(b).all(|(&x, &y)| *forward.entry(x).or_insert(y) == y && *backward.entry(y).or_insert(x) == x)
}

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches data")
}

fn random_points(n: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    (0..n).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect()
}

fn d2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

impl Oracle for ChebyshevOracle {
    fn description(&self) -> &'static str {
        "order-3 Chebyshev recurrence vs dense eigenbasis filtering on 20 random graphs of 30-100 nodes"
    }

    fn tolerance(&self) -> f64 {
        1e-5
    }

    fn measure(&self, seed: u64) -> Result<(f64, usize)> {
        let mut r = rng(seed);
        let mut worst = 0.0f64;
        let cases = 20;
        for _ in 0..cases {
            let n = r.gen_range(30..=100);
            let l = laplacian(&random_connected_graph(n, n, &mut r)?);
            let lm = lambda_max(&l)?;
            let theta = init_theta(3, 3, 3, &mut r);
            let x = random_tensor(&[n, 3], &mut r);
            let fast = chebyshev_filter(&scaled_laplacian(&l, lm)?, &theta, &x)?;
            let dense = dense_spectral_filter(
                &eigendecompose(&l, n)?,
                &FilterSpec::Chebyshev { theta, lambda_max: lm },
                &x,
            )?;
            let scale = dense.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            worst = worst.max(fast.max_abs_diff(&dense) / scale);
        }
        Ok((worst, cases))
    }
}

impl Oracle for ClusteringOracle {
    fn description(&self) -> &'static str {
        "exact recovery of K in {2,3,4} disjoint components, 10 graphs each"
    }

    fn tolerance(&self) -> f64 {
        0.5
    }

    fn measure(&self, seed: u64) -> Result<(f64, usize)> {
        let mut r = rng(seed);
        let mut mismatches = 0usize;
        let mut cases = 0;
        for k in 2..=4 {
            for _ in 0..10 {
                let (g, truth) = random_components(k, &mut r)?;
                let found = segment(&g, k, k, r.gen())?;
                mismatches += usize::from(!same_partition(found.labels(), &truth));
                cases += 1;
            }
        }
        Ok((mismatches as f64, cases))
    }
}

impl Oracle for ChamferOracle {
    fn description(&self) -> &'static str {
        "chamfer distance vs an all-pairs loop on 50 random point-set pairs"
    }

    fn tolerance(&self) -> f64 {
        1e-10
    }

    fn measure(&self, seed: u64) -> Result<(f64, usize)> {
        let mut r = rng(seed);
        let mut worst = 0.0f64;
        let cases = 50;
        for _ in 0..cases {
            let a = random_points(r.gen_range(1..200), &mut r);
            let b = random_points(r.gen_range(1..200), &mut r);
            let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| {
                from.iter().map(|&p| to.iter().map(|&q| d2(p, q)).fold(f64::INFINITY, f64::min)).sum::<f64>()
                    / from.len() as f64
            };
            let slow = 0.5 * (directed(&a, &b) + directed(&b, &a));
            worst = worst.max((loss_chamfer(&a, &b)? - slow).abs());
        }
        Ok((worst, cases))
    }
}

impl Oracle for CollisionOracle {
    fn description(&self) -> &'static str {
        "collision loss vs an all-pairs nearest-vertex loop on 50 random sphere pairs"
    }

    fn tolerance(&self) -> f64 {
        1e-10
    }

    fn measure(&self, seed: u64) -> Result<(f64, usize)> {
        let mut r = rng(seed);
        let mut worst = 0.0f64;
        let cases = 50;
        for _ in 0..cases {
            let a = icosphere(r.gen_range(1..3), r.gen_range(0.02..0.06), [0.0; 3]);
            let b = icosphere(r.gen_range(1..3), r.gen_range(0.02..0.06), [0; 3].map(|_| r.gen_range(-0.05..0.05)));
            let mask = collision_mask(&a, &b, r.gen())?;
            let mut slow = 0.0;
            for (i, (&p, n)) in a.positions().iter().zip(a.normals()).enumerate() {
                if !mask.interior[i] {
                    continue;
                }
                let mut best = (usize::MAX, f64::INFINITY);
                for (j, &q) in b.positions().iter().enumerate() {
                    if d2(p, q) < best.1 {
                        best = (j, d2(p, q));
                    }
                }
                let m = b.normals()[best.0];
                if n[0] * m[0] + n[1] * m[1] + n[2] * m[2] < 0.0 {
                    slow += best.1.sqrt();
                }
            }
            worst = worst.max((collision_loss(&a, &mask, &b)? - slow).abs());
        }
        Ok((worst, cases))
    }
}
