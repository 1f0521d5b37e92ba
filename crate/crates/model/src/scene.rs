//! Synthetic scenes: backbone features, posed ground-truth hands and the 2D
//! targets seen by each camera.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sgh_core::tensor::Tensor;

use crate::camera::CameraParams;
use crate::config::ModelConfig;
use crate::error::{argument, Result};
use crate::geometry::Geometry;
use crate::losses::LossTarget;

/// Deterministic stand-in for the CNN backbone: `N × s × s × C_b` values in `[−1, 1]`.
pub fn synth_backbone_features(scene_seed: u64, cfg: &ModelConfig) -> Tensor {
    let shape = [cfg.views, cfg.feature_size, cfg.feature_size, cfg.backbone_channels];
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed ^ 0x5eed_f00d_cafe_0001);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()).expect("shape")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidPose {
    pub fn identity() -> Self {
        Self { rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation: [0.0; 3] }
    }

    /// Rotation by `angle` radians about the unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let [x, y, z] = axis.map(|a| a / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let rotation = [
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
            [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
        ];
        Self { rotation, translation }
    }

    /// Random rotation of at most `max_angle` and shift of at most `max_shift` per axis.
    pub fn random(rng: &mut impl Rng, max_angle: f64, max_shift: f64) -> Self {
        let axis = loop {
            let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n2: f64 = a.iter().map(|v| v * v).sum();
            if n2 > 1e-6 && n2 <= 1.0 {
                break a;
            }
        };
        let angle = rng.gen_range(-max_angle..=max_angle);
        let t = [0; 3].map(|_| rng.gen_range(-max_shift..=max_shift));
        Self::from_axis_angle(axis, angle, t)
    }

    /// Rotates about `pivot`, then translates.
    pub fn apply_about(&self, p: [f64; 3], pivot: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - pivot[0], p[1] - pivot[1], p[2] - pivot[2]];
        let r = self.rotation;
        [0, 1, 2].map(|i| r[i][0] * d[0] + r[i][1] * d[1] + r[i][2] * d[2] + pivot[i] + self.translation[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub views: usize,
    /// Right hand first; each rotates about its template centroid.
    pub poses: [RigidPose; 2],
    /// Half-width of uniform per-coordinate vertex noise, meters.
    pub noise: f64,
}

impl SceneSpec {
    pub fn random(seed: u64, views: usize, noise: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poses = [RigidPose::random(&mut rng, 0.35, 0.01), RigidPose::random(&mut rng, 0.35, 0.01)];
        Self { seed, views, poses, noise }
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 {
            return Err(argument("a scene needs at least one view"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(argument("noise must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub spec: SceneSpec,
    pub features: Tensor,
    pub cameras: Vec<CameraParams>,
    pub target: LossTarget,
}

/// Poses the templates, adds noise and projects through random weak-perspective cameras.
pub fn generate_scene(spec: &SceneSpec, cfg: &ModelConfig, geometry: &Geometry) -> Result<Scene> {
    spec.validate()?;
    if spec.views != cfg.views {
        return Err(argument(format!("scene has {} views, model expects {}", spec.views, cfg.views)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut vertices = Vec::with_capacity(2 * geometry.vertices_per_hand());
    for (h, pose) in geometry.hands.iter().zip(&spec.poses) {
        let pivot = h.template.centroid();
        for &p in h.template.positions() {
            let q = pose.apply_about(p, pivot);
            let jitter = [0; 3].map(|_| if spec.noise > 0.0 { rng.gen_range(-spec.noise..=spec.noise) } else { 0.0 });
            vertices.push([q[0] + jitter[0], q[1] + jitter[1], q[2] + jitter[2]]);
        }
    }
    let cameras: Vec<CameraParams> = (0..spec.views)
        .map(|_| CameraParams {
            scale: rng.gen_range(0.8..=1.2),
            translation: [rng.gen_range(-0.05..=0.05), rng.gen_range(-0.05..=0.05)],
        })
        .collect();
    let mut pts2d = Vec::with_capacity(spec.views * vertices.len() * 2);
    for cam in &cameras {
        for &p in &vertices {
            pts2d.extend(cam.project(p));
        }
    }
    let target = LossTarget {
        vertices: Tensor::from_points(&vertices),
        points_2d: Tensor::new(vec![spec.views, vertices.len(), 2], pts2d)?,
        edges: geometry.edges.clone(),
    };
    Ok(Scene { spec: spec.clone(), features: synth_backbone_features(spec.seed, cfg), cameras, target })
}
