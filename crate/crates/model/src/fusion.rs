//! Soft-attention multi-view fusion.
//!
//! Per view, the backbone map passes through two blocks of ×2 bilinear
//! upsampling, a valid 3×3 convolution, per-channel normalization and ReLU.
//! `K` 1×1 convolutions and a softmax over spatial positions give the mask
//! `M`; `f'' = Mᵀ f'` per view, and `f_r` is the elementwise maximum over views.

use std::sync::Arc;

use rand::Rng;
use sgh_core::sparse::CooMatrix;
use sgh_core::tensor::Tensor;

use crate::error::{argument, Result};
use crate::params::{insert_linear, ParamVars, Parameters};
use crate::tape::{Tape, Var};

pub const NORM_EPS: f64 = 1e-5;

/// 1-D ×2 bilinear weights with half-pixel centers and edge clamping, `(2n) × n`.
fn upsample_1d(n: usize) -> Vec<Vec<(usize, f64)>> {
    (0..2 * n)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = src.floor() as usize;
            let frac = src - i0 as f64;
            let i1 = (i0 + 1).min(n - 1);
            if frac == 0.0 || i1 == i0 {
                vec![(i0, 1.0)]
            } else {
                vec![(i0, 1.0 - frac), (i1, frac)]
            }
        })
        .collect()
}

/// Operator mapping an `h × w` image (rows `y·w + x`) to its `2h × 2w` bilinear upsampling.
pub fn bilinear_upsample_matrix(h: usize, w: usize) -> CooMatrix {
    let (uy, ux) = (upsample_1d(h), upsample_1d(w));
    let mut trip = Vec::new();
    for (y, ry) in uy.iter().enumerate() {
        for (x, rx) in ux.iter().enumerate() {
            for &(a, wa) in ry {
                for &(b, wb) in rx {
                    trip.push((y * 2 * w + x, a * w + b, wa * wb));
                }
            }
        }
    }
    CooMatrix::from_triplets(4 * h * w, h * w, trip).expect("indices in range")
}

pub fn init_params(params: &mut Parameters, backbone: usize, channels: usize, clusters: usize, rng: &mut impl Rng) -> Result<()> {
    insert_linear(params, "fusion.conv1", 9 * backbone, channels, rng)?;
    insert_linear(params, "fusion.conv2", 9 * channels, channels, rng)?;
    for norm in ["fusion.norm1", "fusion.norm2"] {
        params.insert(format!("{norm}.gain"), Tensor::filled(&[1, channels], 1.0))?;
        params.insert(format!("{norm}.bias"), Tensor::zeros(&[1, channels]))?;
    }
    insert_linear(params, "fusion.mask", channels, clusters, rng)
}

/// Per-channel normalization over spatial positions followed by a learned affine map.
pub fn channel_norm(tape: &mut Tape, x: Var, gain: Var, bias: Var) -> Result<Var> {
    let t = tape.transpose(x)?;
    let n = tape.normalize_rows(t, NORM_EPS)?;
    let back = tape.transpose(n)?;
    let scaled = tape.mul_row(back, gain)?;
    tape.add_row(scaled, bias)
}

/// Softmax over the rows of every column: each of the `K` channels becomes a
/// distribution over spatial positions.
pub fn spatial_softmax(tape: &mut Tape, logits: Var) -> Result<Var> {
    let t = tape.transpose(logits)?;
    let s = tape.softmax_rows(t)?;
    tape.transpose(s)
}

/// Upsample, 3×3 valid convolution, normalization, ReLU. Returns the output and its side lengths.
pub fn fusion_block(tape: &mut Tape, pv: &ParamVars, x: Var, side: usize, conv: &str, norm: &str) -> Result<(Var, usize)> {
    let up = tape.sparse_apply(Arc::new(bilinear_upsample_matrix(side, side)), x)?;
    let cols = tape.im2col3x3(up, 2 * side, 2 * side)?;
    let y = tape.linear(cols, pv.get(&format!("{conv}.w"))?, pv.get(&format!("{conv}.b"))?)?;
    let y = channel_norm(tape, y, pv.get(&format!("{norm}.gain"))?, pv.get(&format!("{norm}.bias"))?)?;
    Ok((tape.relu(y), 2 * side - 2))
}

#[derive(Clone, Debug)]
pub struct FusionOutput {
    /// Per view, `(H·W) × C`.
    pub f_prime: Vec<Var>,
    /// Per view, `(H·W) × K`, every column summing to one.
    pub masks: Vec<Var>,
    /// Side `H = W` of the fused map.
    pub side: usize,
}

/// Runs both fusion blocks and the mask head on `features` of shape `N × s × s × C_b`.
pub fn fusion_forward(tape: &mut Tape, pv: &ParamVars, features: &Tensor) -> Result<FusionOutput> {
    if features.rank() != 4 || features.shape()[1] != features.shape()[2] {
        return Err(argument(format!("features must be N x s x s x C, got {:?}", features.shape())));
    }
    features.ensure_finite("backbone features")?;
    let (views, side, ch) = (features.shape()[0], features.shape()[1], features.shape()[3]);
    let per_view = side * side * ch;
    let mut out = FusionOutput { f_prime: Vec::with_capacity(views), masks: Vec::with_capacity(views), side: 0 };
    for v in 0..views {
        let slice = features.data()[v * per_view..(v + 1) * per_view].to_vec();
        let x = tape.constant(Tensor::new(vec![side * side, ch], slice)?);
        let (x, s1) = fusion_block(tape, pv, x, side, "fusion.conv1", "fusion.norm1")?;
        let (x, s2) = fusion_block(tape, pv, x, s1, "fusion.conv2", "fusion.norm2")?;
        let logits = tape.linear(x, pv.get("fusion.mask.w")?, pv.get("fusion.mask.b")?)?;
        let mask = spatial_softmax(tape, logits)?;
        out.f_prime.push(x);
        out.masks.push(mask);
        out.side = s2;
    }
    Ok(out)
}

/// `f''_n = M_nᵀ f'_n` for every view, and `f_r`, their elementwise maximum.
pub fn fuse_views(tape: &mut Tape, f_prime: &[Var], masks: &[Var]) -> Result<(Vec<Var>, Var)> {
    if f_prime.is_empty() || f_prime.len() != masks.len() {
        return Err(argument("fuse_views needs one mask per view and at least one view"));
    }
    let mut per_view = Vec::with_capacity(f_prime.len());
    for (&f, &m) in f_prime.iter().zip(masks) {
        let mt = tape.transpose(m)?;
        per_view.push(tape.matmul(mt, f)?);
    }
    let f_r = if per_view.len() == 1 { per_view[0] } else { tape.max_elementwise(&per_view)? };
    Ok((per_view, f_r))
}
