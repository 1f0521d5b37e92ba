//! Undirected mesh graphs and their combinatorial Laplacian `L = D − A`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::sparse::CooMatrix;

/// Unweighted undirected graph of a mesh. Adjacency is symmetric 0/1 with an
/// empty diagonal; `degree[i]` is the row sum of adjacency row `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshGraph {
    positions: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    adjacency: CooMatrix,
    degree: Vec<f64>,
}

impl MeshGraph {
    /// Derives adjacency and degree from triangle connectivity.
    pub fn from_mesh(positions: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = positions.len();
        let mut edges = Vec::with_capacity(faces.len() * 3);
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= n) {
                return Err(Error::structural(format!(
                    "face {fi} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::structural(format!("face {fi} is degenerate: {f:?}")));
            }
            edges.extend([(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]);
        }
        let mut g = Self::from_edges(positions, &edges)?;
        g.faces = faces;
        Ok(g)
    }

    /// Graph from an explicit edge list; duplicate and reversed edges collapse.
    pub fn from_edges(positions: Vec<[f64; 3]>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = positions.len();
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::structural(format!(
                    "edge ({a}, {b}) out of range for {n} vertices"
                )));
            }
            if a == b {
                return Err(Error::structural(format!("self-loop at vertex {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut trip = Vec::with_capacity(set.len() * 2);
        let mut degree = vec![0.0; n];
        for &(a, b) in &set {
            trip.push((a, b, 1.0));
            trip.push((b, a, 1.0));
            degree[a] += 1.0;
            degree[b] += 1.0;
        }
        let adjacency = CooMatrix::from_triplets(n, n, trip)?;
        Ok(Self { positions, faces: Vec::new(), adjacency, degree })
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    /// Same connectivity with every position passed through `f`.
    pub fn map_positions(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        Self { positions: self.positions.iter().map(|&p| f(p)).collect(), ..self.clone() }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn adjacency(&self) -> &CooMatrix {
        &self.adjacency
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.row_entries(v).iter().map(|e| e.1)
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .entries()
            .iter()
            .filter(|e| e.0 < e.1)
            .map(|e| (e.0, e.1))
            .collect()
    }

    /// Component id per vertex (ids assigned in order of first vertex) and the count.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let n = self.vertex_count();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for w in self.neighbors(v) {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    /// Same graph with vertices renumbered: new vertex `perm[i]` is old vertex `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.vertex_count();
        if perm.len() != n {
            return Err(Error::argument("permutation length differs from vertex count"));
        }
        let mut positions = vec![[0.0; 3]; n];
        for (old, &new) in perm.iter().enumerate() {
            positions[new] = self.positions[old];
        }
        let edges: Vec<_> = self.edges().iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let mut g = Self::from_edges(positions, &edges)?;
        g.faces = self
            .faces
            .iter()
            .map(|f| [perm[f[0]], perm[f[1]], perm[f[2]]])
            .collect();
        Ok(g)
    }
}

/// Symmetric positive semi-definite graph Laplacian.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    matrix: CooMatrix,
}

impl Laplacian {
    /// Wraps an arbitrary symmetric matrix; used for rescaled operators.
    pub fn from_matrix(matrix: CooMatrix) -> Result<Self> {
        if !matrix.is_symmetric(1e-12) {
            return Err(Error::argument("Laplacian matrix must be symmetric"));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &CooMatrix {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    /// Quadratic form `xᵀ L x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matrix.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// `L = D − A`.
pub fn laplacian(g: &MeshGraph) -> Laplacian {
    let n = g.vertex_count();
    let mut trip: Vec<(usize, usize, f64)> = g
        .adjacency()
        .entries()
        .iter()
        .map(|&(r, c, v)| (r, c, -v))
        .collect();
    trip.extend(g.degree().iter().enumerate().map(|(i, &d)| (i, i, d)));
    let matrix = CooMatrix::from_triplets(n, n, trip).expect("adjacency indices are in range");
    Laplacian { matrix }
}

/// `L̃ = 2L/λ_max − I`, mapping the spectrum of `L` into `[−1, 1]`.
pub fn scaled_laplacian(l: &Laplacian, lambda_max: f64) -> Result<Laplacian> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::argument(format!("lambda_max must be positive, got {lambda_max}")));
    }
    Ok(Laplacian { matrix: l.matrix.scaled_shifted(2.0 / lambda_max, -1.0) })
}
