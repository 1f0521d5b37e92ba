//! Collision refinement: gradient descent on the collision loss plus an ARAP
//! regulariser, with a backtracking line search and a per-step displacement cap.

use serde::{Deserialize, Serialize};
use sgh_core::mesh::TriMesh;

use crate::arap::Arap;
use crate::collision::{require_watertight, CollisionMask, TargetIndex};
use crate::error::{RefineError, Result};
use crate::metrics::{plausibility_metrics, PlausibilityReport, DEFAULT_VOXEL_CM};
use crate::raycast::RayCaster;
use crate::vec3::{norm, V3};

const MAX_HALVINGS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub arap_weight: f64,
    pub max_iters: usize,
    pub step_size: f64,
    pub convergence_tol: f64,
    pub ray_direction_seed: u64,
    /// Largest vertex displacement per iteration, as a multiple of the source's mean edge length.
    pub max_displacement_edges: f64,
    pub voxel_cm: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            arap_weight: 1.0,
            max_iters: 200,
            step_size: 1e-2,
            convergence_tol: 1e-7,
            ray_direction_seed: 0,
            max_displacement_edges: 0.5,
            voxel_cm: DEFAULT_VOXEL_CM,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RefineError::Argument(m.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if !(self.arap_weight >= 0.0 && self.arap_weight.is_finite()) {
            return bad("arap_weight must be non-negative");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be non-negative");
        }
        if !(self.max_displacement_edges > 0.0) {
            return bad("max_displacement_edges must be positive");
        }
        if !(self.voxel_cm > 0.0) {
            return bad("voxel_cm must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineSummary {
    pub before: PlausibilityReport,
    pub after: PlausibilityReport,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub converged: bool,
    /// The objective became non-finite; the best iterate so far is returned.
    pub diverged: bool,
    /// The optimised mesh penetrated deeper than the input, so the input was kept.
    pub reverted: bool,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub mesh: TriMesh,
    pub summary: RefineSummary,
}

struct Objective<'a> {
    source: &'a TriMesh,
    caster: RayCaster,
    index: TargetIndex<'a>,
    arap: Arap,
    weight: f64,
    seed: u64,
}

impl Objective<'_> {
    fn mask(&self, mesh: &TriMesh) -> CollisionMask {
        let mut mask = CollisionMask::empty(mesh.vertex_count());
        for (i, &p) in mesh.positions().iter().enumerate() {
            let r = self.caster.parity(p, self.seed);
            mask.interior[i] = r.inside;
            mask.flagged += usize::from(r.exhausted);
        }
        mask
    }

    fn value(&self, x: &[V3]) -> Result<f64> {
        Ok(self.value_and_gradient(x)?.0)
    }

    fn value_and_gradient(&self, x: &[V3]) -> Result<(f64, Vec<V3>)> {
        let mesh = self.source.with_positions(x.to_vec())?;
        let mask = self.mask(&mesh);
        let (c, mut g) = self.index.loss_and_gradient(&mesh, &mask)?;
        let mut total = c;
        if self.weight > 0.0 {
            let a = self.arap.evaluate(x)?;
            total += self.weight * a.energy;
            for (gi, ai) in g.iter_mut().zip(&a.gradient) {
                for k in 0..3 {
                    gi[k] += self.weight * ai[k];
                }
            }
        }
        Ok((total, g))
    }
}

/// Moves `source` vertices out of `target` while keeping `source` close to
/// its rest shape. The collision mask is recomputed at every evaluation and
/// only strictly decreasing steps are accepted.
pub fn refine_mesh(source: &TriMesh, target: &TriMesh, config: &RefineConfig) -> Result<RefineOutcome> {
    config.validate()?;
    require_watertight(source, "source")?;
    require_watertight(target, "target")?;
    if source == target {
        return Err(RefineError::Argument(
            "source and target coincide; refine two distinct surfaces (see refine_pair)".into(),
        ));
    }
    let objective = Objective {
        source,
        caster: RayCaster::new(target),
        index: TargetIndex::new(target),
        arap: Arap::new(source),
        weight: config.arap_weight,
        seed: config.ray_direction_seed,
    };
    let cap = config.max_displacement_edges * source.mean_edge_length();
    let mut x = source.positions().to_vec();
    let (mut f, mut g) = objective.value_and_gradient(&x)?;
    let initial_loss = f;
    let mut step = config.step_size;
    let (mut iterations, mut converged, mut diverged) = (0, false, false);
    if !f.is_finite() {
        diverged = true;
    }
    while !diverged && iterations < config.max_iters {
        let gmax = g.iter().map(|v| norm(*v)).fold(0.0, f64::max);
        if gmax == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = None;
        let mut s = step;
        for _ in 0..MAX_HALVINGS {
            let scale = if s * gmax > cap { cap / gmax } else { s };
            let trial: Vec<V3> = x.iter().zip(&g).map(|(p, d)| [0, 1, 2].map(|k| p[k] - scale * d[k])).collect();
            let ft = objective.value(&trial)?;
            if !ft.is_finite() {
                diverged = true;
                break;
            }
            if ft < f {
                accepted = Some((trial, ft));
                break;
            }
            s *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            converged = !diverged;
            break;
        };
        // Sub-tolerance steps are dropped so a collision-free input, whose
        // only gradient is ARAP roundoff, comes back untouched.
        if f - ft < config.convergence_tol {
            converged = true;
            break;
        }
        iterations += 1;
        x = trial;
        (f, g) = objective.value_and_gradient(&x)?;
        step = (2.0 * s).min(config.step_size);
    }
    let refined = source.with_positions(x)?;
    let before = plausibility_metrics(source, target, config.voxel_cm)?;
    let after = plausibility_metrics(&refined, target, config.voxel_cm)?;
    let reverted = after.max_penetration_mm > before.max_penetration_mm;
    let (mesh, after, final_loss) = if reverted { (source.clone(), before, initial_loss) } else { (refined, after, f) };
    Ok(RefineOutcome {
        mesh,
        summary: RefineSummary { before, after, iterations, initial_loss, final_loss, converged, diverged, reverted },
    })
}

/// Symmetric two-surface refinement: `a` against `b`, then `b` against the refined `a`.
pub fn refine_pair(a: &TriMesh, b: &TriMesh, config: &RefineConfig) -> Result<(TriMesh, TriMesh, PlausibilityReport, PlausibilityReport)> {
    let before = plausibility_metrics(a, b, config.voxel_cm)?;
    let ra = refine_mesh(a, b, config)?.mesh;
    let rb = refine_mesh(b, &ra, config)?.mesh;
    let after = plausibility_metrics(&ra, &rb, config.voxel_cm)?;
    Ok((ra, rb, before, after))
}
