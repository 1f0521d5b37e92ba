//! Triangle meshes: OBJ ingestion and output, vertex normals, topology
//! queries, farthest-point subsampling and edge extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::MeshGraph;

/// Triangle mesh with area-weighted unit vertex normals.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    positions: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    normals: Vec<[f64; 3]>,
    non_manifold: bool,
}

impl TriMesh {
    pub fn new(positions: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = positions.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= n) {
                return Err(Error::structural(format!(
                    "face {fi} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::structural(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        let normals = vertex_normals(&positions, &faces);
        let non_manifold = edge_face_counts(&faces).values().any(|&c| c > 2);
        Ok(Self { positions, faces, normals, non_manifold })
    }

    /// Triangulates polygons as fans `(a, b, c), (a, c, d), …`.
    pub fn from_polygons(positions: Vec<[f64; 3]>, polygons: &[Vec<usize>]) -> Result<Self> {
        let mut faces = Vec::with_capacity(polygons.len() * 2);
        for (pi, p) in polygons.iter().enumerate() {
            if p.len() < 3 {
                return Err(Error::structural(format!("polygon {pi} has fewer than 3 vertices")));
            }
            for w in 1..p.len() - 1 {
                faces.push([p[0], p[w], p[w + 1]]);
            }
        }
        Self::new(positions, faces)
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn normals(&self) -> &[[f64; 3]] {
        &self.normals
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Set when some edge borders more than two faces.
    pub fn is_non_manifold(&self) -> bool {
        self.non_manifold
    }

    /// Same connectivity with new vertex positions.
    pub fn with_positions(&self, positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::argument(format!(
                "expected {} positions, got {}",
                self.positions.len(),
                positions.len()
            )));
        }
        let normals = vertex_normals(&positions, &self.faces);
        Ok(Self { positions, faces: self.faces.clone(), normals, non_manifold: self.non_manifold })
    }

    /// Applies `f` to every vertex. Winding is reversed when `reverse_winding` is set,
    /// which keeps normals outward under reflections.
    pub fn transformed(&self, f: impl Fn([f64; 3]) -> [f64; 3], reverse_winding: bool) -> Self {
        let positions: Vec<_> = self.positions.iter().map(|&p| f(p)).collect();
        let faces: Vec<_> = if reverse_winding {
            self.faces.iter().map(|t| [t[0], t[2], t[1]]).collect()
        } else {
            self.faces.clone()
        };
        let normals = vertex_normals(&positions, &faces);
        Self { positions, faces, normals, non_manifold: self.non_manifold }
    }

    pub fn translated(&self, t: [f64; 3]) -> Self {
        self.transformed(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]], false)
    }

    /// Disjoint union; indices of `other` are shifted past this mesh's vertices.
    pub fn concat(&self, other: &TriMesh) -> Self {
        let off = self.vertex_count();
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        let mut normals = self.normals.clone();
        normals.extend_from_slice(&other.normals);
        Self { positions, faces, normals, non_manifold: self.non_manifold || other.non_manifold }
    }

    pub fn graph(&self) -> MeshGraph {
        MeshGraph::from_mesh(self.positions.clone(), self.faces.clone())
            .expect("TriMesh faces are validated on construction")
    }

    pub fn mean_edge_length(&self) -> f64 {
        let es = edge_set(self);
        if es.is_empty() {
            0.0
        } else {
            es.lengths.iter().sum::<f64>() / es.len() as f64
        }
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.vertex_count().max(1) as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / n)
    }
}

fn vertex_normals(positions: &[[f64; 3]], faces: &[[usize; 3]]) -> Vec<[f64; 3]> {
    let mut acc = vec![[0.0; 3]; positions.len()];
    for f in faces {
        // Unnormalized cross product has length 2·area, giving area weighting for free.
        let n = cross(sub(positions[f[1]], positions[f[0]]), sub(positions[f[2]], positions[f[0]]));
        for &v in f {
            for k in 0..3 {
                acc[v][k] += n[k];
            }
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = norm(n);
            if len > 0.0 {
                n.map(|x| x / len)
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect()
}

fn edge_face_counts(faces: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

/// True iff every edge borders exactly two faces.
pub fn is_watertight(mesh: &TriMesh) -> bool {
    !mesh.faces.is_empty() && edge_face_counts(&mesh.faces).values().all(|&c| c == 2)
}

/// Parses Wavefront OBJ text (`v` and `f` records; other records are ignored).
pub fn load_obj(bytes: &[u8]) -> Result<TriMesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Parse { line: 0, message: format!("not valid UTF-8: {e}") })?;
    let mut positions = Vec::new();
    let mut polygons: Vec<(usize, Vec<usize>)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        match tag {
            "v" => {
                let coords: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>().map_err(|_| parse_err(format!("bad coordinate {t:?}"))))
                    .collect::<Result<_>>()?;
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(parse_err(format!("vertex needs 3 coordinates, got {}", coords.len())));
                }
                positions.push([coords[0], coords[1], coords[2]]);
            }
            "f" => {
                let mut poly = Vec::new();
                for t in tokens {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| parse_err(format!("bad face index {t:?}")))?;
                    let resolved = match idx {
                        0 => return Err(parse_err("face index 0 is invalid (indices are 1-based)".into())),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = positions.len() as i64 + i;
                            if back < 0 {
                                return Err(parse_err(format!("relative index {i} before first vertex")));
                            }
                            back as usize
                        }
                    };
                    poly.push(resolved);
                }
                if poly.len() < 3 {
                    return Err(parse_err(format!("face needs at least 3 indices, got {}", poly.len())));
                }
                polygons.push((line_no, poly));
            }
            _ => {}
        }
    }
    let n = positions.len();
    let mut faces = Vec::with_capacity(polygons.len() * 2);
    for (line, poly) in &polygons {
        if let Some(&bad) = poly.iter().find(|&&v| v >= n) {
            return Err(Error::Parse {
                line: *line,
                message: format!("face index {} out of range (mesh has {n} vertices)", bad + 1),
            });
        }
        let distinct: BTreeSet<_> = poly.iter().collect();
        if distinct.len() != poly.len() {
            return Err(Error::Parse { line: *line, message: "degenerate face repeats a vertex".into() });
        }
        for w in 1..poly.len() - 1 {
            faces.push([poly[0], poly[w], poly[w + 1]]);
        }
    }
    TriMesh::new(positions, faces)
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    load_obj(&std::fs::read(path)?)
}

/// Serializes with shortest round-trip float formatting, so reloading is bit-exact.
pub fn write_obj(mesh: &TriMesh) -> String {
    let polys: Vec<Vec<usize>> = mesh.faces.iter().map(|f| f.to_vec()).collect();
    write_obj_polygons(&mesh.positions, &polys)
}

pub fn write_obj_polygons(positions: &[[f64; 3]], polygons: &[Vec<usize>]) -> String {
    let mut out = String::with_capacity(positions.len() * 48 + polygons.len() * 24);
    for p in positions {
        let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
    }
    for poly in polygons {
        out.push('f');
        for v in poly {
            let _ = write!(out, " {}", v + 1);
        }
        out.push('\n');
    }
    out
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_obj(mesh))?;
    Ok(())
}

/// Kept vertices of a subsampled mesh, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsampleMap {
    kept_indices: Vec<usize>,
    source_vertices: usize,
}

impl SubsampleMap {
    pub fn kept_indices(&self) -> &[usize] {
        &self.kept_indices
    }

    pub fn len(&self) -> usize {
        self.kept_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_indices.is_empty()
    }

    pub fn source_vertices(&self) -> usize {
        self.source_vertices
    }

    pub fn positions(&self, mesh: &TriMesh) -> Vec<[f64; 3]> {
        self.kept_indices.iter().map(|&i| mesh.positions[i]).collect()
    }

    /// Faces over the kept vertices (indices into `kept_indices`), obtained by
    /// projecting every vertex to its nearest kept vertex and keeping the
    /// fine faces whose three projections are distinct.
    pub fn coarse_faces(&self, mesh: &TriMesh) -> Vec<[usize; 3]> {
        let kept = self.positions(mesh);
        let proj: Vec<usize> = mesh
            .positions
            .iter()
            .map(|p| {
                let mut best = (f64::INFINITY, 0);
                for (ki, k) in kept.iter().enumerate() {
                    let d = dist2(*p, *k);
                    if d < best.0 {
                        best = (d, ki);
                    }
                }
                best.1
            })
            .collect();
        let mut seen = BTreeSet::new();
        let mut faces = Vec::new();
        for f in &mesh.faces {
            let t = [proj[f[0]], proj[f[1]], proj[f[2]]];
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                continue;
            }
            let mut key = t;
            key.sort_unstable();
            if seen.insert(key) {
                faces.push(t);
            }
        }
        faces
    }
}

/// Farthest-point sampling keeping `⌈V / factor⌉` vertices, seeded at vertex `seed mod V`.
pub fn subsample_uniform(mesh: &TriMesh, factor: usize, seed: u64) -> Result<SubsampleMap> {
    let v = mesh.vertex_count();
    if factor == 0 {
        return Err(Error::argument("subsampling factor must be at least 1"));
    }
    if factor > v {
        return Err(Error::argument(format!("factor {factor} exceeds vertex count {v}")));
    }
    subsample_to_count(mesh, v.div_ceil(factor), seed)
}

/// Farthest-point sampling with an explicit kept count.
pub fn subsample_to_count(mesh: &TriMesh, count: usize, seed: u64) -> Result<SubsampleMap> {
    let v = mesh.vertex_count();
    if count == 0 || count > v {
        return Err(Error::argument(format!("cannot keep {count} of {v} vertices")));
    }
    let pos = &mesh.positions;
    let mut min_d = vec![f64::INFINITY; v];
    let mut kept = Vec::with_capacity(count);
    let mut current = (seed % v as u64) as usize;
    for _ in 0..count {
        kept.push(current);
        min_d[current] = f64::NEG_INFINITY;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, d) in min_d.iter_mut().enumerate() {
            if *d == f64::NEG_INFINITY {
                continue;
            }
            let nd = dist2(pos[i], pos[current]);
            if nd < *d {
                *d = nd;
            }
            if *d > best.0 {
                best = (*d, i);
            }
        }
        current = best.1;
    }
    kept.sort_unstable();
    Ok(SubsampleMap { kept_indices: kept, source_vertices: v })
}

/// Unique undirected face edges with their current lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSet {
    pub edges: Vec<(usize, usize)>,
    pub lengths: Vec<f64>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Sorted unique `(a, b)` pairs with `a < b` over all face edges.
pub fn face_edges(faces: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let set: BTreeSet<(usize, usize)> = faces
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    set.into_iter().collect()
}

pub fn edge_set(mesh: &TriMesh) -> EdgeSet {
    let edges = face_edges(&mesh.faces);
    let lengths = edges.iter().map(|&(a, b)| dist2(mesh.positions[a], mesh.positions[b]).sqrt()).collect();
    EdgeSet { edges, lengths }
}

/// Vertex → incident face indices.
pub fn vertex_faces(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); mesh.vertex_count()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        for &v in f {
            out[v].push(fi);
        }
    }
    out
}

/// Edges bordered by exactly one face, sorted.
pub fn boundary_edges(mesh: &TriMesh) -> Vec<(usize, usize)> {
    let counts: BTreeMap<_, _> = edge_face_counts(&mesh.faces).into_iter().collect();
    counts.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect()
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}
