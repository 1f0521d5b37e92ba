//! Penetration depth and voxelized intersection volume of a mesh pair.

use serde::{Deserialize, Serialize};
use sgh_core::mesh::TriMesh;

use crate::collision::require_watertight;
use crate::error::{RefineError, Result};
use crate::raycast::RayCaster;
use crate::vec3::{closest_point_on_triangle, dist2, V3};

pub const DEFAULT_VOXEL_CM: f64 = 0.5;

/// Ray seed used by the metrics, fixed so reports are reproducible.
pub const METRIC_SEED: u64 = 0x6d65_7472_6963;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityReport {
    pub max_penetration_mm: f64,
    pub intersection_volume_cm3: f64,
    pub voxel_size_cm: f64,
}

/// Unsigned distance from `p` to the surface of `mesh`.
pub fn distance_to_surface(p: V3, mesh: &TriMesh) -> f64 {
    let x = mesh.positions();
    mesh.faces()
        .iter()
        .map(|f| dist2(p, closest_point_on_triangle(p, x[f[0]], x[f[1]], x[f[2]])))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Deepest vertex of `source` inside `target`, in mesh units.
fn max_penetration(source: &TriMesh, target: &TriMesh, caster: &RayCaster) -> f64 {
    source
        .positions()
        .iter()
        .filter(|&&p| caster.parity(p, METRIC_SEED).inside)
        .map(|&p| distance_to_surface(p, target))
        .fold(0.0, f64::max)
}

/// Number of voxel centres inside both meshes; voxels tile the overlap of the bounding boxes.
fn shared_voxels(a: &RayCaster, b: &RayCaster, size: f64) -> usize {
    let Some(region) = a.bounds().intersection(&b.bounds()) else { return 0 };
    let counts = [0, 1, 2].map(|k| (((region.max[k] - region.min[k]) / size) - 1e-9).ceil().max(0.0) as usize);
    let mut n = 0;
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for k in 0..counts[2] {
                let c = [
                    region.min[0] + (i as f64 + 0.5) * size,
                    region.min[1] + (j as f64 + 0.5) * size,
                    region.min[2] + (k as f64 + 0.5) * size,
                ];
                if a.parity(c, METRIC_SEED).inside && b.parity(c, METRIC_SEED).inside {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Metrics for meshes in meters: the largest distance from a vertex of either
/// mesh lying inside the other to that other surface (mm), and the volume of
/// voxels of side `voxel_cm` whose centres lie inside both (cm³).
pub fn plausibility_metrics(a: &TriMesh, b: &TriMesh, voxel_cm: f64) -> Result<PlausibilityReport> {
    require_watertight(a, "a")?;
    require_watertight(b, "b")?;
    if !(voxel_cm > 0.0 && voxel_cm.is_finite()) {
        return Err(RefineError::Argument(format!("voxel size must be positive, got {voxel_cm}")));
    }
    let (ca, cb) = (RayCaster::new(a), RayCaster::new(b));
    let depth = max_penetration(a, b, &cb).max(max_penetration(b, a, &ca));
    let voxels = shared_voxels(&ca, &cb, voxel_cm / 100.0);
    Ok(PlausibilityReport {
        max_penetration_mm: 1000.0 * depth,
        intersection_volume_cm3: voxels as f64 * voxel_cm.powi(3),
        voxel_size_cm: voxel_cm,
    })
}
