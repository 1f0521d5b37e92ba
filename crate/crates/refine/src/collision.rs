//! Collision mask and the nearest-vertex collision loss.

use sgh_core::mesh::{is_watertight, vertex_faces, TriMesh};

use crate::error::{RefineError, Result};
use crate::grid::GridHash;
use crate::raycast::RayCaster;
use crate::vec3::{dot, sub, V3};

/// Which source vertices lie inside the target surface.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollisionMask {
    pub interior: Vec<bool>,
    /// Vertices whose rays stayed ambiguous after every retry (treated as exterior).
    pub flagged: usize,
}

impl CollisionMask {
    pub fn count(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }

    pub fn empty(n: usize) -> Self {
        Self { interior: vec![false; n], flagged: 0 }
    }
}

pub(crate) fn require_watertight(mesh: &TriMesh, name: &str) -> Result<()> {
    if is_watertight(mesh) {
        Ok(())
    } else {
        Err(RefineError::NotWatertight(name.to_string()))
    }
}

/// Ray-parity interior test of every source vertex against `target`.
///
/// When `source` and `target` are the same mesh each vertex ignores its
/// incident faces and casts rays into the hemisphere of its normal, so a
/// vertex counts as interior only if it has passed through another part of
/// the surface.
pub fn collision_mask(source: &TriMesh, target: &TriMesh, seed: u64) -> Result<CollisionMask> {
    require_watertight(target, "target")?;
    let caster = RayCaster::new(target);
    let self_test = source == target;
    let incident = if self_test { vertex_faces(source) } else { Vec::new() };
    let mut mask = CollisionMask::empty(source.vertex_count());
    for (i, &p) in source.positions().iter().enumerate() {
        let parity = if self_test {
            caster.parity_with(p, seed, &incident[i], Some(source.normals()[i]))
        } else {
            caster.parity(p, seed)
        };
        mask.interior[i] = parity.inside;
        mask.flagged += usize::from(parity.exhausted);
    }
    Ok(mask)
}

/// One contributing vertex: source index, nearest target index and distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionPair {
    pub source: usize,
    pub target: usize,
    pub distance: f64,
}

/// Grid over the target vertices, reused across evaluations against one target.
pub struct TargetIndex<'a> {
    target: &'a TriMesh,
    grid: GridHash,
}

impl<'a> TargetIndex<'a> {
    pub fn new(target: &'a TriMesh) -> Self {
        let cell = target.mean_edge_length();
        let cell = if cell > 0.0 { cell } else { 1.0 };
        Self { target, grid: GridHash::new(target.positions(), cell) }
    }

    /// Masked vertices whose nearest target vertex has an opposing normal.
    /// In a self-test the vertex itself is excluded from the search.
    pub fn pairs(&self, source: &TriMesh, mask: &CollisionMask) -> Result<Vec<CollisionPair>> {
        if mask.interior.len() != source.vertex_count() {
            return Err(RefineError::Argument(format!(
                "mask has {} entries for {} vertices",
                mask.interior.len(),
                source.vertex_count()
            )));
        }
        let self_test = std::ptr::eq(source, self.target) || source == self.target;
        let mut out = Vec::new();
        for (i, (&p, &n)) in source.positions().iter().zip(source.normals()).enumerate() {
            if !mask.interior[i] {
                continue;
            }
            let Some((j, d2)) = self.grid.nearest_where(p, |j| !(self_test && j == i)) else { continue };
            if dot(n, self.target.normals()[j]) < 0.0 {
                out.push(CollisionPair { source: i, target: j, distance: d2.sqrt() });
            }
        }
        Ok(out)
    }

    pub fn loss(&self, source: &TriMesh, mask: &CollisionMask) -> Result<f64> {
        Ok(self.pairs(source, mask)?.iter().map(|p| p.distance).sum())
    }

    /// Loss and its gradient in the source positions; the mask and the
    /// nearest-vertex assignment are held fixed.
    pub fn loss_and_gradient(&self, source: &TriMesh, mask: &CollisionMask) -> Result<(f64, Vec<V3>)> {
        let pairs = self.pairs(source, mask)?;
        let mut grad = vec![[0.0; 3]; source.vertex_count()];
        let self_test = std::ptr::eq(source, self.target) || source == self.target;
        for pair in &pairs {
            if pair.distance == 0.0 {
                continue;
            }
            let d = sub(source.positions()[pair.source], self.target.positions()[pair.target]);
            for k in 0..3 {
                grad[pair.source][k] += d[k] / pair.distance;
                if self_test {
                    grad[pair.target][k] -= d[k] / pair.distance;
                }
            }
        }
        Ok((pairs.iter().map(|p| p.distance).sum(), grad))
    }
}

/// `Σ_v M_C(v) · ‖v − v′‖` over masked source vertices `v` whose nearest
/// target vertex `v′` has an opposing normal.
pub fn collision_loss(source: &TriMesh, mask: &CollisionMask, target: &TriMesh) -> Result<f64> {
    TargetIndex::new(target).loss(source, mask)
}
