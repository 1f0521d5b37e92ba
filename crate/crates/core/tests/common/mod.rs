#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgh_core::graph::MeshGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random graph: a random spanning tree (connected) plus extra random edges.
pub fn random_connected_graph(n: usize, extra: usize, seed: u64) -> MeshGraph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((r.gen_range(0..v), v));
    }
    for _ in 0..extra {
        let a = r.gen_range(0..n);
        let b = r.gen_range(0..n);
        if a != b {
            edges.push((a, b));
        }
    }
    let positions = (0..n).map(|_| [r.gen(), r.gen(), r.gen()]).collect();
    MeshGraph::from_edges(positions, &edges).unwrap()
}

/// Disjoint union of `parts` random connected graphs with shuffled vertex ids.
/// Returns the graph and the true component of each vertex.
pub fn random_components(parts: usize, size_range: (usize, usize), seed: u64) -> (MeshGraph, Vec<usize>) {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    let mut truth = Vec::new();
    let mut offset = 0;
    for p in 0..parts {
        let n = r.gen_range(size_range.0..=size_range.1);
        let g = random_connected_graph(n, n, seed.wrapping_mul(31).wrapping_add(p as u64));
        edges.extend(g.edges().into_iter().map(|(a, b)| (a + offset, b + offset)));
        truth.extend(std::iter::repeat(p).take(n));
        offset += n;
    }
    let total = offset;
    let mut perm: Vec<usize> = (0..total).collect();
    for i in (1..total).rev() {
        let j = r.gen_range(0..=i);
        perm.swap(i, j);
    }
    let edges: Vec<_> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    let mut labels = vec![0; total];
    for (old, &new) in perm.iter().enumerate() {
        labels[new] = truth[old];
    }
    let positions = (0..total).map(|_| [r.gen(), r.gen(), r.gen()]).collect();
    (MeshGraph::from_edges(positions, &edges).unwrap(), labels)
}

pub fn dense(g: &sgh_core::graph::Laplacian) -> nalgebra::DMatrix<f64> {
    let n = g.size();
    nalgebra::DMatrix::from_row_slice(n, n, &g.matrix().to_dense())
}

/// Union-find component count.
pub fn union_find_components(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}
