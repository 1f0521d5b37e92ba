//! Procedural fixture meshes: icospheres, boxes and the hand template.
//!
//! The hand template is a quad-dominant closed surface with a wrist opening:
//! a subdivided box (22 × 11 × 54 cells) with a 10 × 4 cell hole in its
//! `z = min` face, mapped onto an ellipsoid of hand-like extent. It has
//! exactly 4023 vertices and 4008 quads (8016 triangles).

use std::collections::HashMap;

use crate::mesh::TriMesh;

/// Which hand a template represents. The left hand mirrors the right across `x = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Right,
    Left,
}

/// Hand template cell counts along x, y, z and the wrist hole size in cells.
pub const HAND_CELLS: [usize; 3] = [22, 11, 54];
pub const HAND_HOLE: [usize; 2] = [10, 4];
/// Semi-axes of the template ellipsoid, meters.
pub const HAND_RADII: [f64; 3] = [0.045, 0.015, 0.09];

pub const HAND_VERTICES: usize = 4023;
pub const HAND_QUADS: usize = 4008;

/// Geodesic sphere from a subdivided icosahedron (12, 42, 162, 642, … vertices).
pub fn icosphere(subdivisions: u32, radius: f64, center: [f64; 3]) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&p| unit(p))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(unit([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let positions = verts
        .into_iter()
        .map(|p| [center[0] + radius * p[0], center[1] + radius * p[1], center[2] + radius * p[2]])
        .collect();
    TriMesh::new(positions, faces).expect("icosphere connectivity is valid")
}

/// Axis-aligned cube with 8 vertices and 12 outward-wound triangles.
pub fn cube(side: f64, center: [f64; 3]) -> TriMesh {
    let (positions, quads) = lattice_box([1, 1, 1], None);
    let h = side / 2.0;
    let positions = positions
        .into_iter()
        .map(|p| [center[0] + h * p[0], center[1] + h * p[1], center[2] + h * p[2]])
        .collect();
    TriMesh::from_polygons(positions, &quads).expect("cube connectivity is valid")
}

/// Positions and quads of the hand template, in meters, centered at the origin.
pub fn hand_template_quads(hand: Handedness) -> (Vec<[f64; 3]>, Vec<Vec<usize>>) {
    let [nx, ny, _] = HAND_CELLS;
    let hole = ((nx - HAND_HOLE[0]) / 2, (ny - HAND_HOLE[1]) / 2, HAND_HOLE[0], HAND_HOLE[1]);
    let (cube_pts, mut quads) = lattice_box(HAND_CELLS, Some(hole));
    let mirror = if hand == Handedness::Left { -1.0 } else { 1.0 };
    let positions = cube_pts
        .into_iter()
        .map(|p| {
            let s = cube_to_sphere(p);
            [mirror * HAND_RADII[0] * s[0], HAND_RADII[1] * s[1], HAND_RADII[2] * s[2]]
        })
        .collect();
    if hand == Handedness::Left {
        for q in &mut quads {
            q.reverse();
        }
    }
    (positions, quads)
}

pub fn hand_template(hand: Handedness) -> TriMesh {
    let (positions, quads) = hand_template_quads(hand);
    TriMesh::from_polygons(positions, &quads).expect("hand template connectivity is valid")
}

/// Surface lattice of an `n[0] × n[1] × n[2]` cell box in `[−1, 1]³`, outward quads.
/// `hole = (i0, j0, a, b)` removes `a × b` cells from the `z = −1` face.
fn lattice_box(n: [usize; 3], hole: Option<(usize, usize, usize, usize)>) -> (Vec<[f64; 3]>, Vec<Vec<usize>>) {
    let in_hole_interior = |i: usize, j: usize, k: usize| match hole {
        Some((i0, j0, a, b)) => k == 0 && i > i0 && i < i0 + a && j > j0 && j < j0 + b,
        None => false,
    };
    let mut index = HashMap::new();
    let mut positions = Vec::new();
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                let boundary = i == 0 || i == n[0] || j == 0 || j == n[1] || k == 0 || k == n[2];
                if boundary && !in_hole_interior(i, j, k) {
                    index.insert([i, j, k], positions.len());
                    positions.push([
                        2.0 * i as f64 / n[0] as f64 - 1.0,
                        2.0 * j as f64 / n[1] as f64 - 1.0,
                        2.0 * k as f64 / n[2] as f64 - 1.0,
                    ]);
                }
            }
        }
    }
    let mut quads = Vec::new();
    for axis in 0..3 {
        for side in [0, n[axis]] {
            // (b, c) chosen so that e_b × e_c points outward.
            let (b, c) = {
                let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
                if side == 0 { (c, b) } else { (b, c) }
            };
            for s in 0..n[b] {
                for t in 0..n[c] {
                    let corner = |ds: usize, dt: usize| {
                        let mut p = [0; 3];
                        p[axis] = side;
                        p[b] = s + ds;
                        p[c] = t + dt;
                        p
                    };
                    let lo = corner(0, 0);
                    if let Some((i0, j0, a, bb)) = hole {
                        let (ci, cj) = (lo[0].min(corner(1, 1)[0]), lo[1].min(corner(1, 1)[1]));
                        if axis == 2 && side == 0 && ci >= i0 && ci < i0 + a && cj >= j0 && cj < j0 + bb {
                            continue;
                        }
                    }
                    quads.push(
                        [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)]
                            .iter()
                            .map(|p| index[p])
                            .collect(),
                    );
                }
            }
        }
    }
    (positions, quads)
}

/// Maps the cube surface onto the unit sphere with low area distortion.
fn cube_to_sphere(p: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = p;
    let (x2, y2, z2) = (x * x, y * y, z * z);
    [
        x * (1.0 - y2 / 2.0 - z2 / 2.0 + y2 * z2 / 3.0).sqrt(),
        y * (1.0 - z2 / 2.0 - x2 / 2.0 + z2 * x2 / 3.0).sqrt(),
        z * (1.0 - x2 / 2.0 - y2 / 2.0 + x2 * y2 / 3.0).sqrt(),
    ]
}

fn unit(p: [f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{boundary_edges, edge_set, is_watertight};

    fn signed_volume(m: &TriMesh) -> f64 {
        let p = m.positions();
        m.faces()
            .iter()
            .map(|f| {
                let (a, b, c) = (p[f[0]], p[f[1]], p[f[2]]);
                let cr = crate::mesh::cross(b, c);
                (a[0] * cr[0] + a[1] * cr[1] + a[2] * cr[2]) / 6.0
            })
            .sum()
    }

    #[test]
    fn icosphere_counts_and_orientation() {
        for (s, v) in [(0, 12), (1, 42), (2, 162), (3, 642)] {
            let m = icosphere(s, 1.0, [0.0; 3]);
            assert_eq!(m.vertex_count(), v);
            assert!(is_watertight(&m));
            assert!(signed_volume(&m) > 0.0);
        }
    }

    #[test]
    fn cube_edges() {
        let m = cube(1.0, [0.5; 3]);
        assert_eq!(m.vertex_count(), 8);
        assert_eq!(m.face_count(), 12);
        assert!(is_watertight(&m));
        assert!((signed_volume(&m) - 1.0).abs() < 1e-12);
        let es = edge_set(&m);
        assert_eq!(es.len(), 18);
        for l in es.lengths {
            assert!((l - 1.0).abs() < 1e-12 || (l - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_template_counts() {
        for hand in [Handedness::Right, Handedness::Left] {
            let (pos, quads) = hand_template_quads(hand);
            assert_eq!(pos.len(), HAND_VERTICES);
            assert_eq!(quads.len(), HAND_QUADS);
            let m = hand_template(hand);
            assert_eq!(m.face_count(), 8016);
            assert!(!m.is_non_manifold());
            assert!(signed_volume(&m) > 0.0);
            // Wrist opening: a single boundary loop of 2·(10 + 4) edges.
            assert_eq!(boundary_edges(&m).len(), 28);
            assert_eq!(m.graph().connected_components().1, 1);
        }
    }
}
