//! Weak-perspective cameras and the head that predicts them from `f_r`.

use rand::Rng;
use sgh_core::tensor::Tensor;

use crate::error::{argument, Result};
use crate::params::{uniform, ParamVars, Parameters};
use crate::tape::{Tape, Var};

/// Image point of `p` is `scale · (p_x, p_y) + translation`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraParams {
    pub scale: f64,
    pub translation: [f64; 2],
}

impl CameraParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(argument(format!("camera scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    pub fn project(&self, p: [f64; 3]) -> [f64; 2] {
        [self.scale * p[0] + self.translation[0], self.scale * p[1] + self.translation[1]]
    }

    /// Cameras from `N` scales and `2N` interleaved translations.
    pub fn from_flat(scales: &[f64], translations: &[f64]) -> Result<Vec<Self>> {
        if translations.len() != 2 * scales.len() {
            return Err(argument("need two translation values per scale"));
        }
        let cams: Vec<Self> = scales
            .iter()
            .zip(translations.chunks_exact(2))
            .map(|(&scale, t)| CameraParams { scale, translation: [t[0], t[1]] })
            .collect();
        cams.iter().try_for_each(CameraParams::validate)?;
        Ok(cams)
    }
}

/// Camera head outputs on the tape: `1 × N` scales and `1 × 2N` translations.
#[derive(Clone, Copy, Debug)]
pub struct CameraVars {
    pub scale: Var,
    pub translation: Var,
}

impl CameraVars {
    pub fn cameras(&self, tape: &Tape) -> Result<Vec<CameraParams>> {
        CameraParams::from_flat(tape.value(self.scale).data(), tape.value(self.translation).data())
    }
}

pub fn init_params(params: &mut Parameters, channels: usize, views: usize, rng: &mut impl Rng) -> Result<()> {
    params.insert("camera.w", uniform(&[channels, 3 * views], 0.1 / (channels as f64).sqrt(), rng))?;
    params.insert("camera.b", Tensor::zeros(&[1, 3 * views]))
}

/// Linear map of the cluster-averaged `f_r`; scales pass through `exp`.
pub fn camera_head(tape: &mut Tape, pv: &ParamVars, f_r: Var, views: usize) -> Result<CameraVars> {
    let pooled = tape.mean_rows(f_r)?;
    let z = tape.linear(pooled, pv.get("camera.w")?, pv.get("camera.b")?)?;
    if tape.shape(z) != [1, 3 * views] {
        return Err(argument(format!("camera head emits {:?}, expected 1 x {}", tape.shape(z), 3 * views)));
    }
    let log_scale = tape.slice_cols(z, 0, views)?;
    let scale = tape.exp(log_scale);
    let translation = tape.slice_cols(z, views, 3 * views)?;
    Ok(CameraVars { scale, translation })
}
