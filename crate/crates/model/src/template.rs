//! Template mesh sources, selected by name.

use sgh_core::mesh::TriMesh;
use sgh_core::registry::Registry;
use sgh_core::shapes::{hand_template, icosphere, Handedness};

/// Supplies the two-hand template in a shared scene frame (meters).
pub trait TemplateSource: Send + Sync {
    fn description(&self) -> &'static str;

    fn right(&self) -> TriMesh;

    /// Mirror of the right template across `x = 0`; shares its connectivity.
    fn left(&self) -> TriMesh {
        mirror_x(&self.right())
    }

    fn mesh(&self, hand: Handedness) -> TriMesh {
        match hand {
            Handedness::Right => self.right(),
            Handedness::Left => self.left(),
        }
    }
}

pub fn mirror_x(mesh: &TriMesh) -> TriMesh {
    mesh.transformed(|p| [-p[0], p[1], p[2]], true)
}

/// The 4023-vertex procedural hand, offset 6 cm along x.
pub struct ProceduralHand;

impl TemplateSource for ProceduralHand {
    fn description(&self) -> &'static str {
        "4023-vertex procedural hand template"
    }

    fn right(&self) -> TriMesh {
        hand_template(Handedness::Right).translated([0.06, 0.0, 0.0])
    }
}

/// A 162-vertex icosphere of radius 5 cm, offset 7 cm along x.
pub struct IcosphereHand;

impl TemplateSource for IcosphereHand {
    fn description(&self) -> &'static str {
        "162-vertex icosphere stand-in"
    }

    fn right(&self) -> TriMesh {
        icosphere(2, 0.05, [0.07, 0.0, 0.0])
    }
}

pub fn template_registry() -> Registry<dyn TemplateSource> {
    Registry::<dyn TemplateSource>::new()
        .with("hand", Box::new(ProceduralHand))
        .with("icosphere", Box::new(IcosphereHand))
}
