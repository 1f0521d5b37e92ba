//! As-rigid-as-possible deformation energy with uniform weights.

use nalgebra::{Matrix3, Vector3};
use sgh_core::graph::MeshGraph;
use sgh_core::mesh::TriMesh;

use crate::error::{RefineError, Result};
use crate::vec3::{sub, V3};

#[derive(Clone, Debug, PartialEq)]
pub struct ArapEvaluation {
    pub energy: f64,
    pub gradient: Vec<V3>,
    /// Cells whose deformed neighbourhood collapsed to a point.
    pub skipped_cells: usize,
}

/// One-ring neighbourhoods and rest edges of a template, reused across evaluations.
pub struct Arap {
    rest: Vec<V3>,
    neighbors: Vec<Vec<usize>>,
}

impl Arap {
    pub fn new(rest: &TriMesh) -> Self {
        let graph: MeshGraph = rest.graph();
        let neighbors = (0..rest.vertex_count()).map(|i| graph.neighbors(i).collect()).collect();
        Self { rest: rest.positions().to_vec(), neighbors }
    }

    /// Best-fit rotation of cell `i`, or `None` for a collapsed cell.
    fn rotation(&self, i: usize, deformed: &[V3]) -> Option<Matrix3<f64>> {
        let mut s = Matrix3::zeros();
        let mut spread = 0.0;
        for &j in &self.neighbors[i] {
            let e = Vector3::from(sub(self.rest[i], self.rest[j]));
            let ed = Vector3::from(sub(deformed[i], deformed[j]));
            spread += ed.norm_squared();
            s += e * ed.transpose();
        }
        if spread == 0.0 {
            return None;
        }
        let svd = s.svd(true, true);
        let (mut u, v_t) = (svd.u?, svd.v_t?);
        let mut r = v_t.transpose() * u.transpose();
        if r.determinant() < 0.0 {
            // Reflection: flip the axis of the smallest singular value.
            let k = svd.singular_values.imin();
            u.column_mut(k).neg_mut();
            r = v_t.transpose() * u.transpose();
        }
        Some(r)
    }

    pub fn evaluate(&self, deformed: &[V3]) -> Result<ArapEvaluation> {
        if deformed.len() != self.rest.len() {
            return Err(RefineError::Argument(format!(
                "expected {} deformed positions, got {}",
                self.rest.len(),
                deformed.len()
            )));
        }
        let mut energy = 0.0;
        let mut gradient = vec![[0.0; 3]; deformed.len()];
        let mut skipped_cells = 0;
        for i in 0..deformed.len() {
            let Some(r) = self.rotation(i, deformed) else {
                skipped_cells += usize::from(!self.neighbors[i].is_empty());
                continue;
            };
            for &j in &self.neighbors[i] {
                let e = Vector3::from(sub(self.rest[i], self.rest[j]));
                let ed = Vector3::from(sub(deformed[i], deformed[j]));
                let res = ed - r * e;
                energy += res.norm_squared();
                for k in 0..3 {
                    gradient[i][k] += 2.0 * res[k];
                    gradient[j][k] -= 2.0 * res[k];
                }
            }
        }
        Ok(ArapEvaluation { energy, gradient, skipped_cells })
    }
}

/// `Σ_i min_{R_i} Σ_{j∈N(i)} ‖(p′_i − p′_j) − R_i (p_i − p_j)‖²`.
pub fn arap_energy(rest: &TriMesh, deformed: &[V3]) -> Result<f64> {
    Ok(Arap::new(rest).evaluate(deformed)?.energy)
}
