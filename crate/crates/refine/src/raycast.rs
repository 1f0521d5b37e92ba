//! Inside/outside classification by ray-crossing parity.
//!
//! A ray is cast from the query point in a seeded random direction and every
//! triangle crossing is counted with the Möller–Trumbore test. Hits that land
//! on an edge or vertex, rays lying in a triangle's plane, and origins on the
//! surface are ambiguous; the ray is then recast in a fresh direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgh_core::mesh::TriMesh;

use crate::vec3::{cross, dot, norm, sub, Aabb, V3};

/// Recasts allowed after the first ambiguous ray.
pub const MAX_RETRIES: usize = 8;

const BARY_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Parity {
    pub inside: bool,
    /// Every direction was ambiguous; `inside` is then `false`.
    pub exhausted: bool,
    pub retries: usize,
}

enum Crossing {
    Miss,
    Hit,
    Ambiguous,
}

#[derive(Clone, Copy)]
struct Tri {
    v0: V3,
    e1: V3,
    e2: V3,
}

/// Triangle soup prepared for repeated parity queries.
#[derive(Clone)]
pub struct RayCaster {
    tris: Vec<Tri>,
    bounds: Aabb,
    /// Distance below which a hit counts as the origin lying on the surface.
    t_eps: f64,
}

impl RayCaster {
    pub fn new(mesh: &TriMesh) -> Self {
        let p = mesh.positions();
        let tris = mesh
            .faces()
            .iter()
            .map(|f| Tri { v0: p[f[0]], e1: sub(p[f[1]], p[f[0]]), e2: sub(p[f[2]], p[f[0]]) })
            .collect();
        let bounds = Aabb::of(p);
        let extent = (0..3).map(|k| bounds.max[k] - bounds.min[k]).fold(0.0, f64::max);
        Self { tris, bounds, t_eps: 1e-12 * extent.max(1e-300) }
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn crossing(&self, tri: &Tri, o: V3, d: V3) -> Crossing {
        let pvec = cross(d, tri.e2);
        let det = dot(tri.e1, pvec);
        let n = cross(tri.e1, tri.e2);
        let scale = norm(n);
        if det.abs() <= 1e-12 * scale {
            // Ray parallel to the plane: ambiguous only if it lies in it.
            let offset = dot(sub(o, tri.v0), n) / scale.max(1e-300);
            return if offset.abs() <= self.t_eps { Crossing::Ambiguous } else { Crossing::Miss };
        }
        let inv = 1.0 / det;
        let tvec = sub(o, tri.v0);
        let u = dot(tvec, pvec) * inv;
        if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
            return Crossing::Miss;
        }
        let qvec = cross(tvec, tri.e1);
        let v = dot(d, qvec) * inv;
        if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
            return Crossing::Miss;
        }
        let t = dot(tri.e2, qvec) * inv;
        if t < -self.t_eps {
            return Crossing::Miss;
        }
        if t <= self.t_eps || u < BARY_EPS || v < BARY_EPS || u + v > 1.0 - BARY_EPS {
            return Crossing::Ambiguous;
        }
        Crossing::Hit
    }

    /// Crossing parity along one ray, or `None` when some crossing is ambiguous.
    fn cast(&self, o: V3, d: V3, skip: &[usize]) -> Option<bool> {
        let mut odd = false;
        for (i, tri) in self.tris.iter().enumerate() {
            if skip.contains(&i) {
                continue;
            }
            match self.crossing(tri, o, d) {
                Crossing::Miss => {}
                Crossing::Hit => odd = !odd,
                Crossing::Ambiguous => return None,
            }
        }
        Some(odd)
    }

    /// Parity of `p` with respect to the surface.
    ///
    /// Faces listed in `skip` are ignored and, when `hemisphere` is given, rays
    /// are flipped into the half-space it points to. Both serve self-tests of
    /// mesh vertices, which lie on their own incident faces.
    pub fn parity_with(&self, p: V3, seed: u64, skip: &[usize], hemisphere: Option<V3>) -> Parity {
        if skip.is_empty() && !self.bounds.contains(p) {
            return Parity { inside: false, exhausted: false, retries: 0 };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for attempt in 0..=MAX_RETRIES {
            let mut d = random_direction(&mut rng);
            if let Some(h) = hemisphere {
                if dot(d, h) < 0.0 {
                    d = d.map(|x| -x);
                }
            }
            if let Some(inside) = self.cast(p, d, skip) {
                return Parity { inside, exhausted: false, retries: attempt };
            }
        }
        Parity { inside: false, exhausted: true, retries: MAX_RETRIES }
    }

    pub fn parity(&self, p: V3, seed: u64) -> Parity {
        self.parity_with(p, seed, &[], None)
    }
}

/// Uniform direction on the unit sphere.
pub fn random_direction(rng: &mut impl Rng) -> V3 {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n2 = dot(v, v);
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return v.map(|x| x / n);
        }
    }
}

/// True iff a seeded ray from `p` crosses `mesh` an odd number of times.
/// Points whose rays stay ambiguous after every retry count as exterior.
pub fn point_in_mesh(p: V3, mesh: &TriMesh, seed: u64) -> bool {
    RayCaster::new(mesh).parity(p, seed).inside
}
