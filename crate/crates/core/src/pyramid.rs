//! Hierarchy of coarsened graphs for decoding meshes coarse-to-fine, and the
//! learned fully-connected upsampling between adjacent levels.
//!
//! Coarsening uses greedy heavy-edge matching with normalized-cut weights
//! `w(1/d_u + 1/d_v)`: vertices are visited in a seeded order and each
//! unmatched vertex merges with its best unmatched neighbor. Merging stops as
//! soon as the target size is reached; if one matching pass cannot reach it,
//! further passes run on the partially coarsened graph.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MeshGraph;
use crate::tensor::{matmul_raw, Tensor};

const SIDECAR_MAGIC: &[u8; 4] = b"SGPY";
const SIDECAR_VERSION: u16 = 1;
const MANIFEST_NAME: &str = "pyramid.json";
const SIDECAR_NAME: &str = "pyramid.bin";

/// Levels ordered coarsest first; `parents[l][i]` is the level-`l` parent of
/// vertex `i` on level `l + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPyramid {
    levels: Vec<MeshGraph>,
    parents: Vec<Vec<usize>>,
}

impl GraphPyramid {
    pub fn levels(&self) -> &[MeshGraph] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &MeshGraph {
        &self.levels[l]
    }

    pub fn parent_maps(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(MeshGraph::vertex_count).collect()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &MeshGraph {
        self.levels.last().expect("pyramids have at least one level")
    }

    /// Applies `f` to the positions on every level. Coarse positions stay the
    /// member means when `f` is affine.
    pub fn map_positions(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        Self { levels: self.levels.iter().map(|g| g.map_positions(&f)).collect(), parents: self.parents.clone() }
    }

    /// Coarsest-level ancestor of every finest-level vertex.
    pub fn root_of_finest(&self) -> Vec<usize> {
        let mut current: Vec<usize> = (0..self.finest().vertex_count()).collect();
        for map in self.parents.iter().rev() {
            current = current.iter().map(|&v| map[v]).collect();
        }
        current
    }

    /// Writes `pyramid.json` and the binary `pyramid.bin` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, seed: u64) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let manifest = PyramidManifest {
            format: "sgh-pyramid".into(),
            version: SIDECAR_VERSION,
            seed,
            level_sizes: self.level_sizes(),
            edge_counts: self.levels.iter().map(MeshGraph::edge_count).collect(),
            sidecar: SIDECAR_NAME.into(),
        };
        std::fs::write(dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)?)?;
        let mut buf = Vec::new();
        self.write_sidecar(&mut buf)?;
        std::fs::write(dir.join(SIDECAR_NAME), buf)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: PyramidManifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_NAME))?)?;
        let bytes = std::fs::read(dir.join(&manifest.sidecar))?;
        let pyramid = Self::read_sidecar(&mut bytes.as_slice())?;
        if pyramid.level_sizes() != manifest.level_sizes {
            return Err(Error::structural("pyramid sidecar disagrees with its manifest level sizes"));
        }
        Ok(pyramid)
    }

    fn write_sidecar(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(SIDECAR_MAGIC)?;
        w.write_all(&SIDECAR_VERSION.to_le_bytes())?;
        w.write_all(&(self.levels.len() as u16).to_le_bytes())?;
        for g in &self.levels {
            let edges = g.edges();
            write_u64(w, g.vertex_count() as u64)?;
            write_u64(w, edges.len() as u64)?;
            write_u64(w, g.faces().len() as u64)?;
            for p in g.positions() {
                for c in p {
                    w.write_all(&c.to_le_bytes())?;
                }
            }
            for (a, b) in edges {
                write_u64(w, a as u64)?;
                write_u64(w, b as u64)?;
            }
            for f in g.faces() {
                for &v in f {
                    write_u64(w, v as u64)?;
                }
            }
        }
        for map in &self.parents {
            for &p in map {
                write_u64(w, p as u64)?;
            }
        }
        Ok(())
    }

    fn read_sidecar(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SIDECAR_MAGIC {
            return Err(Error::Parse { line: 0, message: "not a pyramid sidecar (bad magic)".into() });
        }
        let version = read_u16(r)?;
        if version != SIDECAR_VERSION {
            return Err(Error::Parse { line: 0, message: format!("unsupported pyramid version {version}") });
        }
        let depth = read_u16(r)? as usize;
        let mut levels = Vec::with_capacity(depth);
        for _ in 0..depth {
            let n = read_u64(r)? as usize;
            let ne = read_u64(r)? as usize;
            let nf = read_u64(r)? as usize;
            let mut positions = Vec::with_capacity(n);
            for _ in 0..n {
                positions.push([read_f64(r)?, read_f64(r)?, read_f64(r)?]);
            }
            let mut edges = Vec::with_capacity(ne);
            for _ in 0..ne {
                edges.push((read_u64(r)? as usize, read_u64(r)? as usize));
            }
            let mut faces = Vec::with_capacity(nf);
            for _ in 0..nf {
                faces.push([read_u64(r)? as usize, read_u64(r)? as usize, read_u64(r)? as usize]);
            }
            let g = if faces.is_empty() {
                MeshGraph::from_edges(positions, &edges)?
            } else {
                MeshGraph::from_mesh(positions, faces)?
            };
            levels.push(g);
        }
        let mut parents = Vec::with_capacity(depth.saturating_sub(1));
        for l in 1..depth {
            let n = levels[l].vertex_count();
            let coarse = levels[l - 1].vertex_count();
            let mut map = Vec::with_capacity(n);
            for _ in 0..n {
                let p = read_u64(r)? as usize;
                if p >= coarse {
                    return Err(Error::structural(format!("parent {p} out of range on level {l}")));
                }
                map.push(p);
            }
            parents.push(map);
        }
        Ok(Self { levels, parents })
    }
}

#[derive(Serialize, Deserialize)]
struct PyramidManifest {
    format: String,
    version: u16,
    seed: u64,
    level_sizes: Vec<usize>,
    edge_counts: Vec<usize>,
    sidecar: String,
}

/// Builds levels with exactly `target_sizes` vertices (ascending, last = `|V|`).
pub fn build_pyramid(fine: &MeshGraph, target_sizes: &[usize], seed: u64) -> Result<GraphPyramid> {
    let n = fine.vertex_count();
    if target_sizes.last() != Some(&n) {
        return Err(Error::argument(format!(
            "last target size must equal the fine vertex count {n}, got {target_sizes:?}"
        )));
    }
    if target_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument(format!("target sizes must be strictly ascending: {target_sizes:?}")));
    }
    let mut levels = vec![fine.clone()];
    let mut parents = Vec::new();
    for (li, &target) in target_sizes.iter().enumerate().rev().skip(1) {
        let finer = levels.last().expect("non-empty");
        let (coarse, map) = coarsen_to(finer, target, seed ^ ((li as u64) << 32)).map_err(|e| match e {
            Error::Structural(msg) => Error::Structural(format!("level {li} (size {target}): {msg}")),
            other => other,
        })?;
        levels.push(coarse);
        parents.push(map);
    }
    levels.reverse();
    parents.reverse();
    Ok(GraphPyramid { levels, parents })
}

/// Repeated greedy matching until exactly `target` vertices remain.
fn coarsen_to(g: &MeshGraph, target: usize, seed: u64) -> Result<(MeshGraph, Vec<usize>)> {
    if target == 0 {
        return Err(Error::structural("a level needs at least one vertex"));
    }
    let mut current = g.clone();
    let mut map: Vec<usize> = (0..g.vertex_count()).collect();
    let mut pass = 0u64;
    while current.vertex_count() > target {
        let needed = current.vertex_count() - target;
        let (next, step) = matching_pass(&current, needed, seed.wrapping_add(pass));
        if next.vertex_count() == current.vertex_count() {
            return Err(Error::structural(format!(
                "no mergeable edge left at {} vertices",
                current.vertex_count()
            )));
        }
        map = map.iter().map(|&v| step[v]).collect();
        current = next;
        pass += 1;
    }
    // Positions of the coarse level are the means of the original fine positions.
    let mut sums = vec![[0.0; 3]; target];
    let mut counts = vec![0usize; target];
    for (v, &p) in map.iter().enumerate() {
        for k in 0..3 {
            sums[p][k] += g.positions()[v][k];
        }
        counts[p] += 1;
    }
    let positions: Vec<[f64; 3]> = sums.iter().zip(&counts).map(|(s, &c)| s.map(|x| x / c as f64)).collect();
    let edges: Vec<_> = current.edges();
    Ok((MeshGraph::from_edges(positions, &edges)?, map))
}

/// One greedy matching pass merging at most `max_merges` pairs.
fn matching_pass(g: &MeshGraph, max_merges: usize, seed: u64) -> (MeshGraph, Vec<usize>) {
    let n = g.vertex_count();
    let deg = g.degree();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut mate = vec![usize::MAX; n];
    let mut merges = 0;
    for &u in &order {
        if merges == max_merges {
            break;
        }
        if mate[u] != usize::MAX {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for v in g.neighbors(u) {
            if mate[v] != usize::MAX {
                continue;
            }
            let score = 1.0 / deg[u] + 1.0 / deg[v];
            if best.is_none_or(|(s, b)| score > s || (score == s && v < b)) {
                best = Some((score, v));
            }
        }
        if let Some((_, v)) = best {
            mate[u] = v;
            mate[v] = u;
            merges += 1;
        }
    }
    // Coarse ids in order of each cluster's smallest member.
    let mut id = vec![usize::MAX; n];
    let mut next = 0;
    for v in 0..n {
        if id[v] == usize::MAX {
            id[v] = next;
            if mate[v] != usize::MAX {
                id[mate[v]] = next;
            }
            next += 1;
        }
    }
    let edges: Vec<(usize, usize)> =
        g.edges().into_iter().map(|(a, b)| (id[a], id[b])).filter(|(a, b)| a != b).collect();
    let mut sums = vec![[0.0; 3]; next];
    let mut counts = vec![0usize; next];
    for v in 0..n {
        for k in 0..3 {
            sums[id[v]][k] += g.positions()[v][k];
        }
        counts[id[v]] += 1;
    }
    let positions = sums.iter().zip(&counts).map(|(s, &c)| s.map(|x| x / c as f64)).collect();
    let coarse = MeshGraph::from_edges(positions, &edges).expect("coarse edges are in range");
    (coarse, id)
}

/// Learned map from a coarse `n_coarse × F` signal to `n_fine × F`:
/// `out = W · signal + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpsampleWeights {
    /// `n_fine × n_coarse`
    pub weight: Tensor,
    /// `n_fine × F`
    pub bias: Tensor,
}

impl UpsampleWeights {
    /// Copies each coarse value to its children (`W[i, parent[i]] = 1`), zero bias.
    pub fn from_parent_map(parents: &[usize], n_coarse: usize, features: usize) -> Result<Self> {
        let n_fine = parents.len();
        let mut weight = Tensor::zeros(&[n_fine, n_coarse]);
        for (i, &p) in parents.iter().enumerate() {
            if p >= n_coarse {
                return Err(Error::argument(format!("parent {p} outside {n_coarse} coarse vertices")));
            }
            weight.set2(i, p, 1.0);
        }
        Ok(Self { weight, bias: Tensor::zeros(&[n_fine, features]) })
    }

    pub fn identity(n: usize, features: usize) -> Self {
        Self { weight: Tensor::identity(n), bias: Tensor::zeros(&[n, features]) }
    }

    pub fn n_fine(&self) -> usize {
        self.weight.rows()
    }

    pub fn n_coarse(&self) -> usize {
        self.weight.cols()
    }

    pub fn apply(&self, signal: &Tensor) -> Result<Tensor> {
        if signal.rank() != 2 || signal.rows() != self.n_coarse() {
            return Err(Error::argument(format!(
                "upsampling expects {} coarse rows, got shape {:?}",
                self.n_coarse(),
                signal.shape()
            )));
        }
        if self.bias.shape() != [self.n_fine(), signal.cols()] {
            return Err(Error::argument(format!(
                "bias shape {:?} does not match output {}x{}",
                self.bias.shape(),
                self.n_fine(),
                signal.cols()
            )));
        }
        let mut out = self.weight.matmul(signal)?;
        for (o, b) in out.data_mut().iter_mut().zip(self.bias.data()) {
            *o += b;
        }
        Ok(out)
    }

    /// Gradients `(dW, db, dsignal)` of `⟨upstream, apply(signal)⟩`.
    pub fn gradient(&self, signal: &Tensor, upstream: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        upstream.expect_shape(&[self.n_fine(), signal.cols()], "upstream gradient")?;
        let f = signal.cols();
        let (nf, nc) = (self.n_fine(), self.n_coarse());
        let dw = matmul_raw(upstream.data(), signal.transpose().data(), nf, f, nc);
        let ds = matmul_raw(self.weight.transpose().data(), upstream.data(), nc, nf, f);
        Ok((Tensor::new(vec![nf, nc], dw)?, upstream.clone(), Tensor::new(vec![nc, f], ds)?))
    }
}

/// Upsamples a signal on level `level` to level `level + 1`.
pub fn upsample_signal(pyramid: &GraphPyramid, level: usize, signal: &Tensor, weights: &UpsampleWeights) -> Result<Tensor> {
    if level + 1 >= pyramid.depth() {
        return Err(Error::argument(format!("level {level} has no finer level")));
    }
    let (nc, nf) = (pyramid.level(level).vertex_count(), pyramid.level(level + 1).vertex_count());
    if weights.n_coarse() != nc || weights.n_fine() != nf {
        return Err(Error::argument(format!(
            "weights map {}->{} but levels are {nc}->{nf}",
            weights.n_coarse(),
            weights.n_fine()
        )));
    }
    weights.apply(signal)
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> MeshGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        MeshGraph::from_edges((0..n).map(|i| [i as f64, 0.0, 0.0]).collect(), &edges).unwrap()
    }

    #[test]
    fn single_level_identity() {
        let g = path(5);
        let p = build_pyramid(&g, &[5], 0).unwrap();
        assert_eq!(p.depth(), 1);
        assert_eq!(p.root_of_finest(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn exact_sizes_on_path() {
        let g = path(10);
        let p = build_pyramid(&g, &[1, 3, 5, 10], 2).unwrap();
        assert_eq!(p.level_sizes(), vec![1, 3, 5, 10]);
        for (l, map) in p.parent_maps().iter().enumerate() {
            let mut hit = vec![false; p.level(l).vertex_count()];
            map.iter().for_each(|&q| hit[q] = true);
            assert!(hit.iter().all(|&h| h));
        }
    }

    #[test]
    fn unreachable_size_names_level() {
        let g = MeshGraph::from_edges(vec![[0.0; 3]; 4], &[(0, 1)]).unwrap();
        match build_pyramid(&g, &[2, 4], 0) {
            Err(Error::Structural(msg)) => assert!(msg.contains("level 0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(build_pyramid(&g, &[4, 3], 0), Err(Error::Argument(_))));
        assert!(matches!(build_pyramid(&g, &[2, 5], 0), Err(Error::Argument(_))));
    }

    #[test]
    fn identity_upsampling() {
        let w = UpsampleWeights::identity(3, 2);
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(w.apply(&x).unwrap(), x);
    }
}
