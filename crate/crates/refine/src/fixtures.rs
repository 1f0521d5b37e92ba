//! Reference mesh pairs.

use sgh_core::mesh::TriMesh;
use sgh_core::shapes::icosphere;

/// Radius of the overlapping-spheres fixture, meters.
pub const SPHERE_RADIUS: f64 = 0.05;

/// Two icospheres of radius 5 cm whose centres are 1.5 radii apart along x.
pub fn overlapping_spheres() -> (TriMesh, TriMesh) {
    let r = SPHERE_RADIUS;
    (icosphere(3, r, [0.0; 3]), icosphere(3, r, [1.5 * r, 0.0, 0.0]))
}
