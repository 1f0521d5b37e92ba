//! Inference-time collision refinement of triangle meshes: ray-parity
//! interior tests, the nearest-vertex collision loss, ARAP regularisation and
//! penetration/intersection-volume metrics.

pub mod arap;
pub mod collision;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod metrics;
pub mod raycast;
pub mod refine;
pub mod vec3;

pub use arap::{arap_energy, Arap};
pub use collision::{collision_loss, collision_mask, CollisionMask};
pub use error::{RefineError, Result};
pub use metrics::{plausibility_metrics, PlausibilityReport};
pub use raycast::{point_in_mesh, RayCaster};
pub use refine::{refine_mesh, refine_pair, RefineConfig, RefineOutcome, RefineSummary};
