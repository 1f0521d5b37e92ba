//! Spectral graph decoder: per hand, a fully-connected map to each pyramid
//! level followed by Chebyshev filtering on every level below the finest.
//! There are no nonlinearities; the channel count stays at 3.

use std::sync::Arc;

use rand::Rng;
use sgh_core::filter::init_theta;
use sgh_core::graph::Laplacian;
use sgh_core::pyramid::UpsampleWeights;
use sgh_core::tensor::Tensor;

use crate::error::{argument, Result};
use crate::geometry::{hand_key, Geometry};
use crate::params::{ParamVars, Parameters};
use crate::tape::{Tape, Var};

pub const DECODER_CHANNELS: usize = 3;

fn fc_name(prefix: &str, level: usize) -> (String, String) {
    (format!("{prefix}.fc{level}.w"), format!("{prefix}.fc{level}.b"))
}

fn theta_name(prefix: &str, level: usize) -> String {
    format!("{prefix}.cheb{level}.theta")
}

/// Initial weights of one hand decoder. The first map copies the nearest
/// token into each coarsest vertex; later maps copy each parent into its
/// children.
pub fn init_hand(
    params: &mut Parameters,
    prefix: &str,
    tokens: usize,
    nearest_token: &[usize],
    parent_maps: &[Vec<usize>],
    order: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let n0 = nearest_token.len();
    let mut w0 = Tensor::zeros(&[n0, tokens]);
    for (i, &t) in nearest_token.iter().enumerate() {
        if t >= tokens {
            return Err(argument(format!("token {t} outside {tokens}")));
        }
        w0.set2(i, t, 1.0);
    }
    let (w, b) = fc_name(prefix, 0);
    params.insert(w, w0)?;
    params.insert(b, Tensor::zeros(&[n0, DECODER_CHANNELS]))?;
    let mut n_coarse = n0;
    for (l, parents) in parent_maps.iter().enumerate() {
        params.insert(theta_name(prefix, l), init_theta(order, DECODER_CHANNELS, DECODER_CHANNELS, rng))?;
        let up = UpsampleWeights::from_parent_map(parents, n_coarse, DECODER_CHANNELS)?;
        let (w, b) = fc_name(prefix, l + 1);
        params.insert(w, up.weight)?;
        params.insert(b, up.bias)?;
        n_coarse = parents.len();
    }
    Ok(())
}

pub fn init_params(params: &mut Parameters, geometry: &Geometry, tokens: usize, order: usize, rng: &mut impl Rng) -> Result<()> {
    for (i, h) in geometry.hands.iter().enumerate() {
        let prefix = format!("decoder.{}", hand_key(h.hand));
        init_hand(params, &prefix, tokens, &geometry.nearest_tokens(i), h.pyramid.parent_maps(), order, rng)?;
    }
    Ok(())
}

/// Decodes `f_c` for one hand. `scaled[l]` is the rescaled Laplacian of level
/// `l`; the number of levels is `scaled.len() + 1`. Returns the output of every
/// layer, the last being the finest-level vertices.
pub fn decode_hand(tape: &mut Tape, pv: &ParamVars, prefix: &str, f_c: Var, scaled: &[Arc<Laplacian>]) -> Result<Vec<Var>> {
    if tape.shape(f_c).get(1) != Some(&DECODER_CHANNELS) {
        return Err(argument(format!("decoder input must have 3 channels, got {:?}", tape.shape(f_c))));
    }
    let mut trace = Vec::with_capacity(2 * scaled.len() + 1);
    let mut x = f_c;
    for level in 0..=scaled.len() {
        let (w, b) = fc_name(prefix, level);
        let y = tape.matmul(pv.get(&w)?, x)?;
        x = tape.add(y, pv.get(&b)?)?;
        trace.push(x);
        if let Some(l) = scaled.get(level) {
            if l.size() != tape.shape(x)[0] {
                return Err(argument(format!("level {level}: Laplacian of size {} for {} vertices", l.size(), tape.shape(x)[0])));
            }
            x = tape.chebyshev(l.clone(), pv.get(&theta_name(prefix, level))?, x)?;
            trace.push(x);
        }
    }
    Ok(trace)
}

#[derive(Clone, Debug)]
pub struct DecoderOutput {
    /// Layer outputs per hand, right hand first.
    pub hands: Vec<Vec<Var>>,
    /// Both hands stacked, `2V × 3`.
    pub vertices: Var,
}

pub fn decoder_forward(tape: &mut Tape, pv: &ParamVars, f_c: Var, geometry: &Geometry) -> Result<DecoderOutput> {
    let mut hands = Vec::with_capacity(2);
    for h in &geometry.hands {
        let prefix = format!("decoder.{}", hand_key(h.hand));
        hands.push(decode_hand(tape, pv, &prefix, f_c, &h.scaled_laplacians)?);
    }
    let finals: Vec<Var> = hands.iter().map(|t| *t.last().expect("at least one layer")).collect();
    let vertices = tape.vcat(&finals)?;
    Ok(DecoderOutput { hands, vertices })
}
