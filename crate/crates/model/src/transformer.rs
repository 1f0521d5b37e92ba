//! Transformer encoder with progressive width reduction.
//!
//! Each block stacks pre-norm encoder layers (multi-head self-attention and a
//! ReLU feed-forward sublayer, both residual) at a fixed width. A linear map
//! halves the width (rounding up) between blocks and a final linear map
//! projects to 3 channels. Tokens carry their template positions in the last
//! three input columns; no other positional encoding is added.

use rand::Rng;
use sgh_core::tensor::Tensor;

use crate::config::{halve, ModelConfig};
use crate::error::Result;
use crate::params::{insert_linear, ParamVars, Parameters};
use crate::tape::{Tape, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Shape hyperparameters of one encoder layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerShape {
    pub width: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub hidden: usize,
}

impl LayerShape {
    pub fn new(width: usize, heads: usize, ffn_multiplier: usize) -> Self {
        Self { width, heads, head_dim: width.div_ceil(heads), hidden: ffn_multiplier * width }
    }
}

pub fn init_layer(params: &mut Parameters, prefix: &str, s: LayerShape, rng: &mut impl Rng) -> Result<()> {
    let inner = s.heads * s.head_dim;
    for ln in ["ln1", "ln2"] {
        params.insert(format!("{prefix}.{ln}.gain"), Tensor::filled(&[1, s.width], 1.0))?;
        params.insert(format!("{prefix}.{ln}.bias"), Tensor::zeros(&[1, s.width]))?;
    }
    for proj in ["q", "k", "v"] {
        insert_linear(params, &format!("{prefix}.attn.{proj}"), s.width, inner, rng)?;
    }
    insert_linear(params, &format!("{prefix}.attn.out"), inner, s.width, rng)?;
    insert_linear(params, &format!("{prefix}.ffn1"), s.width, s.hidden, rng)?;
    insert_linear(params, &format!("{prefix}.ffn2"), s.hidden, s.width, rng)
}

fn layer_prefix(block: usize, layer: usize) -> String {
    format!("encoder.block{block}.layer{layer}")
}

pub fn init_params(params: &mut Parameters, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<()> {
    let widths = cfg.block_widths();
    for (b, &w) in widths.iter().enumerate() {
        for l in 0..cfg.layers_per_block {
            init_layer(params, &layer_prefix(b, l), LayerShape::new(w, cfg.heads, cfg.ffn_multiplier), rng)?;
        }
        if b + 1 < widths.len() {
            insert_linear(params, &format!("encoder.reduce{b}"), w, halve(w), rng)?;
        }
    }
    insert_linear(params, "encoder.output", *widths.last().expect("n_layers >= 1"), 3, rng)
}

fn linear(tape: &mut Tape, pv: &ParamVars, prefix: &str, x: Var) -> Result<Var> {
    tape.linear(x, pv.get(&format!("{prefix}.w"))?, pv.get(&format!("{prefix}.b"))?)
}

fn layer_norm(tape: &mut Tape, pv: &ParamVars, prefix: &str, x: Var) -> Result<Var> {
    let n = tape.normalize_rows(x, LAYER_NORM_EPS)?;
    let g = tape.mul_row(n, pv.get(&format!("{prefix}.gain"))?)?;
    tape.add_row(g, pv.get(&format!("{prefix}.bias"))?)
}

/// One pre-norm encoder layer. Attention matrices are appended to `attention`.
pub fn encoder_layer(
    tape: &mut Tape,
    pv: &ParamVars,
    prefix: &str,
    x: Var,
    s: LayerShape,
    attention: &mut Vec<Var>,
) -> Result<Var> {
    let h = layer_norm(tape, pv, &format!("{prefix}.ln1"), x)?;
    let q = linear(tape, pv, &format!("{prefix}.attn.q"), h)?;
    let k = linear(tape, pv, &format!("{prefix}.attn.k"), h)?;
    let v = linear(tape, pv, &format!("{prefix}.attn.v"), h)?;
    let d = s.head_dim;
    let mut heads = Vec::with_capacity(s.heads);
    for i in 0..s.heads {
        let qh = tape.slice_cols(q, i * d, (i + 1) * d)?;
        let kh = tape.slice_cols(k, i * d, (i + 1) * d)?;
        let vh = tape.slice_cols(v, i * d, (i + 1) * d)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
        let a = tape.softmax_rows(scores)?;
        attention.push(a);
        heads.push(tape.matmul(a, vh)?);
    }
    let cat = tape.hcat(&heads)?;
    let o = linear(tape, pv, &format!("{prefix}.attn.out"), cat)?;
    let x1 = tape.add(x, o)?;
    let h2 = layer_norm(tape, pv, &format!("{prefix}.ln2"), x1)?;
    let f = linear(tape, pv, &format!("{prefix}.ffn1"), h2)?;
    let f = tape.relu(f);
    let f = linear(tape, pv, &format!("{prefix}.ffn2"), f)?;
    tape.add(x1, f)
}

#[derive(Clone, Debug)]
pub struct EncoderTrace {
    /// Output of each block before its width reducer.
    pub blocks: Vec<Var>,
    /// Output of each inter-block reducer.
    pub reduced: Vec<Var>,
    /// Every attention matrix, in evaluation order.
    pub attention: Vec<Var>,
    /// `V' × 3`.
    pub output: Var,
}

/// Encoder stack on `V' × (C + 3)` tokens; returns `f_c` (`V' × 3`) with intermediates.
pub fn transformer_forward(tape: &mut Tape, pv: &ParamVars, tokens: Var, cfg: &ModelConfig) -> Result<EncoderTrace> {
    let widths = cfg.block_widths();
    let mut trace = EncoderTrace { blocks: Vec::new(), reduced: Vec::new(), attention: Vec::new(), output: tokens };
    let mut x = tokens;
    for (b, &w) in widths.iter().enumerate() {
        let shape = LayerShape::new(w, cfg.heads, cfg.ffn_multiplier);
        for l in 0..cfg.layers_per_block {
            x = encoder_layer(tape, pv, &layer_prefix(b, l), x, shape, &mut trace.attention)?;
        }
        trace.blocks.push(x);
        if b + 1 < widths.len() {
            x = linear(tape, pv, &format!("encoder.reduce{b}"), x)?;
            trace.reduced.push(x);
        }
    }
    trace.output = linear(tape, pv, "encoder.output", x)?;
    Ok(trace)
}
