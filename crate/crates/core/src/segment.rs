//! Spectral mesh segmentation: k-means on the low-frequency Laplacian
//! eigenvectors, and broadcasting of per-cluster features onto vertices.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::{eigendecompose, ZERO_EIGENVALUE_TOL};
use crate::error::{Error, Result};
use crate::graph::{laplacian, MeshGraph};
use crate::tensor::Tensor;

/// Tuning knobs for [`segment_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOptions {
    /// Embedding dimension; defaults to `K`.
    pub n_eigvecs: Option<usize>,
    /// Scale every embedding row to unit length before clustering.
    pub row_normalize: bool,
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid displacement.
    pub tol: f64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { n_eigvecs: None, row_normalize: false, max_iters: 100, tol: 1e-8 }
    }
}

/// Vertex partition into `K` non-empty clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    k: usize,
    labels: Vec<usize>,
    centroids: Tensor,
    converged: bool,
    iterations: usize,
}

#[derive(Serialize, Deserialize)]
struct ClusterFile {
    #[serde(rename = "K")]
    k: usize,
    labels: Vec<usize>,
}

impl ClusterAssignment {
    /// Assignment from raw labels (no centroids), validating the label range.
    pub fn from_labels(k: usize, labels: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::argument("K must be at least 1"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::argument(format!("label {bad} outside [0, {k})")));
        }
        Ok(Self { k, labels, centroids: Tensor::zeros(&[k, 0]), converged: true, iterations: 0 })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `K × d` centroids in embedding space (`d = 0` when loaded from labels only).
    pub fn centroids(&self) -> &Tensor {
        &self.centroids
    }

    /// False when k-means hit its iteration cap; labels are then the last iterate.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Labels of a vertex subset (e.g. the kept vertices of a subsampled template).
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices
            .iter()
            .map(|&i| {
                self.labels
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::argument(format!("vertex {i} outside assignment")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { labels, ..self.clone() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ClusterFile { k: self.k, labels: self.labels.clone() })
            .expect("cluster file is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ClusterFile = serde_json::from_str(text)?;
        Self::from_labels(f.k, f.labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Spectral clustering with default options and `n_eigvecs` embedding columns.
pub fn segment(g: &MeshGraph, k: usize, n_eigvecs: usize, seed: u64) -> Result<ClusterAssignment> {
    segment_with(g, k, seed, &SegmentOptions { n_eigvecs: Some(n_eigvecs), ..Default::default() })
}

pub fn segment_with(g: &MeshGraph, k: usize, seed: u64, opts: &SegmentOptions) -> Result<ClusterAssignment> {
    let n = g.vertex_count();
    if k == 0 || k > n {
        return Err(Error::argument(format!("K = {k} must lie in [1, {n}]")));
    }
    let m = opts.n_eigvecs.unwrap_or(k);
    if m < k {
        return Err(Error::argument(format!("n_eigvecs = {m} must be at least K = {k}")));
    }
    if k == 1 {
        return Ok(ClusterAssignment {
            k,
            labels: vec![0; n],
            centroids: Tensor::zeros(&[1, 0]),
            converged: true,
            iterations: 0,
        });
    }
    let mut embedding = spectral_embedding(g, m)?;
    if opts.row_normalize {
        for i in 0..embedding.rows() {
            let row = embedding.row_mut(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
    kmeans(&embedding, k, seed, opts.max_iters, opts.tol)
}

/// `|V| × d` spectral embedding with `d = min(n_eigvecs, |V| − 1)` for connected graphs.
///
/// A connected graph drops the constant eigenvector and uses `u₂, u₃, …`.
/// A graph with `z > 1` components keeps its null space, expressed in the
/// canonical basis of normalized component indicators, so that the
/// components separate exactly. Non-null columns are oriented so that their
/// third moment is non-negative, which does not depend on vertex order.
pub fn spectral_embedding(g: &MeshGraph, n_eigvecs: usize) -> Result<Tensor> {
    let n = g.vertex_count();
    let (comp, z) = g.connected_components();
    let skip = usize::from(z == 1);
    let d = n_eigvecs.min(n - skip);
    if d == 0 {
        return Ok(Tensor::zeros(&[n, 0]));
    }
    let spectrum = eigendecompose(&laplacian(g), d + skip)?;
    let mut sizes = vec![0usize; z];
    for &c in &comp {
        sizes[c] += 1;
    }
    let mut out = Tensor::zeros(&[n, d]);
    for j in 0..d {
        let src = j + skip;
        let column: Vec<f64> = if z > 1 && j < z && spectrum.eigenvalues()[src].abs() < ZERO_EIGENVALUE_TOL {
            comp.iter().map(|&c| if c == j { 1.0 / (sizes[j] as f64).sqrt() } else { 0.0 }).collect()
        } else {
            let mut u = spectrum.vector(src);
            let m3: f64 = u.iter().map(|x| x * x * x).sum();
            if m3 < -1e-12 {
                u.iter_mut().for_each(|x| *x = -*x);
            }
            u
        };
        for (i, v) in column.into_iter().enumerate() {
            out.set2(i, j, v);
        }
    }
    Ok(out)
}

/// Lloyd's k-means with k-means++ seeding over the rows of `points`.
///
/// Rows are visited in lexicographic order of their coordinates, so the result
/// depends on the row multiset rather than the row numbering. Ties in
/// assignment go to the lowest cluster index; an emptied cluster takes the
/// point farthest from its centroid within the largest cluster.
pub fn kmeans(points: &Tensor, k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<ClusterAssignment> {
    let n = points.rows();
    let d = points.cols();
    if k == 0 || k > n {
        return Err(Error::argument(format!("K = {k} must lie in [1, {n}]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points
            .row(a)
            .iter()
            .zip(points.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let pts: Vec<&[f64]> = order.iter().map(|&i| points.row(i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centroids.push(pts[first].to_vec());
    let mut nearest: Vec<f64> = pts.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just below `target`; fall back to the last positive weight.
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            (0..n).find(|&i| !chosen[i]).expect("k ≤ n leaves an unchosen point")
        };
        chosen[pick] = true;
        centroids.push(pts[pick].to_vec());
        let c = centroids.last().expect("just pushed");
        for (w, p) in nearest.iter_mut().zip(&pts) {
            *w = w.min(sq_dist(p, c));
        }
    }

    let mut labels = vec![0usize; n];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iters {
        iterations = it + 1;
        for (i, p) in pts.iter().enumerate() {
            labels[i] = nearest_centroid(p, &centroids);
        }
        repair_empty(&pts, &mut labels, &centroids, k);
        let mut next = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in pts.iter().zip(&labels) {
            counts[l] += 1;
            for (a, b) in next[l].iter_mut().zip(p.iter()) {
                *a += b;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            next[c].iter_mut().for_each(|x| *x /= counts[c] as f64);
            shift = shift.max(sq_dist(&next[c], &centroids[c]).sqrt());
        }
        centroids = next;
        if shift < tol {
            converged = true;
            break;
        }
    }
    // Final labels against the final centroids.
    for (i, p) in pts.iter().enumerate() {
        labels[i] = nearest_centroid(p, &centroids);
    }
    repair_empty(&pts, &mut labels, &centroids, k);

    let mut out_labels = vec![0; n];
    for (pos, &orig) in order.iter().enumerate() {
        out_labels[orig] = labels[pos];
    }
    let centroids = Tensor::new(vec![k, d], centroids.into_iter().flatten().collect())?;
    Ok(ClusterAssignment { k, labels: out_labels, centroids, converged, iterations })
}

fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, cent) in centroids.iter().enumerate() {
        let dist = sq_dist(p, cent);
        if dist < best.0 {
            best = (dist, c);
        }
    }
    best.1
}

fn repair_empty(pts: &[&[f64]], labels: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let largest = (0..k).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).expect("k ≥ 1");
        let far = (0..pts.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| {
                sq_dist(pts[a], &centroids[largest])
                    .total_cmp(&sq_dist(pts[b], &centroids[largest]))
                    .then(b.cmp(&a))
            })
            .expect("largest cluster is non-empty");
        labels[far] = empty;
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Token matrix `V' × (C + 3)`: row `i` is `region_features[labels[i]] ‖ positions[i]`.
pub fn cluster_feature_broadcast(labels: &[usize], region_features: &Tensor, positions: &[[f64; 3]]) -> Result<Tensor> {
    if labels.len() != positions.len() {
        return Err(Error::argument(format!(
            "{} labels but {} template positions",
            labels.len(),
            positions.len()
        )));
    }
    if region_features.rank() != 2 {
        return Err(Error::argument("region features must be a K x C matrix"));
    }
    let (k, c) = (region_features.rows(), region_features.cols());
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::argument(format!("label {bad} has no feature row (K = {k})")));
    }
    let mut out = Vec::with_capacity(labels.len() * (c + 3));
    for (&l, p) in labels.iter().zip(positions) {
        out.extend_from_slice(region_features.row(l));
        out.extend_from_slice(p);
    }
    Tensor::new(vec![labels.len(), c + 3], out)
}
