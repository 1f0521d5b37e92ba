//! Finite-difference verification of every differentiable operation.
//!
//! A check wraps named inputs as tape leaves, contracts every output with
//! fixed random weights into a scalar, and compares the tape gradient with
//! central differences on a sample of coordinates. Coordinates where the two
//! one-sided differences disagree straddle a kink (ReLU, max, |·|, nearest
//! neighbour switch) and are skipped rather than compared.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sgh_core::eigen::lambda_max;
use sgh_core::filter::init_theta;
use sgh_core::graph::{laplacian, scaled_laplacian, MeshGraph};
use sgh_core::mesh::{edge_set, TriMesh};
use sgh_core::pyramid::build_pyramid;
use sgh_core::tensor::Tensor;
use sgh_core::Registry;

use crate::camera::{self, camera_head};
use crate::config::ModelConfig;
use crate::decoder::{decode_hand, init_hand, DECODER_CHANNELS};
use crate::error::{argument, Result};
use crate::fusion::{self, fuse_views, fusion_forward};
use crate::losses;
use crate::params::{ParamVars, Parameters};
use crate::tape::{Tape, Var};
use crate::transformer::{self, transformer_forward};

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates sampled per input; smaller inputs are checked exhaustively.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-4, tolerance: 1e-4, max_coords: 60, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InputReport {
    pub name: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModuleReport {
    pub module: String,
    pub inputs: Vec<InputReport>,
    pub seconds: f64,
}

impl ModuleReport {
    pub fn max_rel_error(&self) -> f64 {
        self.inputs.iter().map(|i| i.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.inputs.iter().map(|i| i.checked).sum()
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked() > 0 && self.max_rel_error() < tolerance
    }
}

/// Builds the outputs under test from leaf handles keyed by input name.
pub type Builder<'a> = dyn Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Vec<Var>> + 'a;

/// `|a − n| / max(|a|, |n|, 1e-6)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

struct Objective<'a> {
    names: Vec<String>,
    build: &'a Builder<'a>,
    weights: Vec<Tensor>,
}

impl Objective<'_> {
    fn record(&self, tape: &mut Tape, values: &[Tensor]) -> Result<(Var, Vec<Var>)> {
        let leaves: Vec<Var> = self.names.iter().zip(values).map(|(n, v)| tape.leaf(n, v.clone())).collect();
        let map = self.names.iter().cloned().zip(leaves.iter().copied()).collect();
        let outputs = (self.build)(tape, &map)?;
        if outputs.len() != self.weights.len() {
            return Err(argument("builder changed its number of outputs"));
        }
        let mut total = None;
        for (&o, w) in outputs.iter().zip(&self.weights) {
            let d = tape.dot_const(o, w.clone())?;
            total = Some(match total {
                None => d,
                Some(t) => tape.add(t, d)?,
            });
        }
        Ok((total.ok_or_else(|| argument("builder produced no outputs"))?, leaves))
    }

    fn value(&self, values: &[Tensor]) -> Result<f64> {
        let mut tape = Tape::new();
        let (root, _) = self.record(&mut tape, values)?;
        Ok(tape.value(root).data()[0])
    }
}

/// Compares tape gradients of `build` against central differences.
pub fn check_function(module: &str, inputs: &[(String, Tensor)], build: &Builder, opts: &GradCheckOptions) -> Result<ModuleReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let names: Vec<String> = inputs.iter().map(|(n, _)| n.clone()).collect();
    let mut values: Vec<Tensor> = inputs.iter().map(|(_, t)| t.clone()).collect();

    let mut probe = Tape::new();
    let leaves: BTreeMap<String, Var> = names.iter().zip(&values).map(|(n, v)| (n.clone(), probe.leaf(n, v.clone()))).collect();
    let weights = build(&mut probe, &leaves)?
        .iter()
        .map(|&o| {
            let shape = probe.shape(o).to_vec();
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape")
        })
        .collect();
    let objective = Objective { names: names.clone(), build, weights };

    let mut tape = Tape::new();
    let (root, leaves) = objective.record(&mut tape, &values)?;
    let grads = tape.backward(root)?;
    let f0 = tape.value(root).data()[0];
    let h = opts.step;

    let mut reports = Vec::with_capacity(inputs.len());
    for (i, name) in names.iter().enumerate() {
        let analytic = grads.get(leaves[i]).cloned().unwrap_or_else(|| Tensor::zeros(values[i].shape()));
        let len = values[i].len();
        let coords: Vec<usize> =
            if len <= opts.max_coords { (0..len).collect() } else { sample(&mut rng, len, opts.max_coords).into_vec() };
        let mut report = InputReport { name: name.clone(), checked: 0, skipped_kinks: 0, max_rel_error: 0.0 };
        for j in coords {
            let x = values[i].data()[j];
            let mut at = |offset: f64| -> Result<f64> {
                values[i].data_mut()[j] = x + offset;
                objective.value(&values)
            };
            let (fp, fm, fp2, fm2) = (at(h)?, at(-h)?, at(0.5 * h)?, at(-0.5 * h)?);
            values[i].data_mut()[j] = x;
            let numeric = (fp - fm) / (2.0 * h);
            let half = (fp2 - fm2) / h;
            // On a smooth function the one-sided slope gap scales with the step
            // and the two central estimates agree to O(h²). A kink inside the
            // stencil breaks one of the two; bounding both keeps its leftover
            // error under the tolerance.
            let gap = (fp - 2.0 * f0 + fm) / h;
            let gap_half = (fp2 - 2.0 * f0 + fm2) / (0.5 * h);
            let budget = 0.25 * opts.tolerance * numeric.abs().max(half.abs()).max(1e-6)
                + 64.0 * f64::EPSILON * f0.abs().max(1.0) / h;
            if (2.0 * gap_half - gap).abs() > budget || (numeric - half).abs() > budget {
                report.skipped_kinks += 1;
                continue;
            }
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(relative_error(analytic.data()[j], numeric));
        }
        reports.push(report);
    }
    Ok(ModuleReport { module: module.to_string(), inputs: reports, seconds: start.elapsed().as_secs_f64() })
}

/// Parameters plus extra tensors as named inputs; parameters keep their names.
fn param_inputs(params: &Parameters, extra: Vec<(String, Tensor)>) -> Vec<(String, Tensor)> {
    params.iter().map(|(k, t)| (k.to_string(), t.clone())).chain(extra).collect()
}

fn param_vars(leaves: &BTreeMap<String, Var>, params: &Parameters) -> ParamVars {
    ParamVars::from_pairs(params.names().map(|n| (n.to_string(), leaves[n])))
}

fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape")
}

/// Jitters every parameter so that no check starts at a symmetric point.
fn jitter(params: &mut Parameters, scale: f64, rng: &mut impl Rng) {
    let names: Vec<String> = params.names().map(String::from).collect();
    for n in names {
        for v in params.get_mut(&n).expect("listed").data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

/// One family of operations under finite-difference test.
pub trait GradCheck: Send + Sync {
    fn description(&self) -> &'static str;
    fn run(&self, opts: &GradCheckOptions) -> Result<ModuleReport>;
}

pub struct FusionCheck;
pub struct TransformerCheck;
pub struct DecoderCheck;
pub struct SpectralFilterCheck;
pub struct LossesCheck;
pub struct CameraCheck;

impl GradCheck for FusionCheck {
    fn description(&self) -> &'static str {
        "upsample + 3x3 conv blocks, channel norm, spatial softmax mask, view fusion"
    }

    fn run(&self, opts: &GradCheckOptions) -> Result<ModuleReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 1);
        let (views, side, backbone, channels, clusters) = (2, 3, 4, 5, 3);
        let mut params = Parameters::new();
        fusion::init_params(&mut params, backbone, channels, clusters, &mut rng)?;
        jitter(&mut params, 0.1, &mut rng);
        let features = random(&[views, side, side, backbone], -1.0, 1.0, &mut rng);
        let build = |tape: &mut Tape, leaves: &BTreeMap<String, Var>| -> Result<Vec<Var>> {
            let pv = param_vars(leaves, &params);
            let out = fusion_forward(tape, &pv, &features)?;
            let (per_view, f_r) = fuse_views(tape, &out.f_prime, &out.masks)?;
            let mut outs = out.masks.clone();
            outs.extend(per_view);
            outs.push(f_r);
            Ok(outs)
        };
        check_function("fusion", &param_inputs(&params, vec![]), &build, opts)
    }
}

impl GradCheck for TransformerCheck {
    fn description(&self) -> &'static str {
        "pre-norm attention layers, feed-forward, width reducers, output projection"
    }

    fn run(&self, opts: &GradCheckOptions) -> Result<ModuleReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 2);
        let cfg = ModelConfig { channels: 5, n_layers: 2, layers_per_block: 1, heads: 3, ..ModelConfig::toy() };
        let mut params = Parameters::new();
        transformer::init_params(&mut params, &cfg, &mut rng)?;
        jitter(&mut params, 0.1, &mut rng);
        let tokens = random(&[6, cfg.channels + 3], -1.0, 1.0, &mut rng);
        let build = |tape: &mut Tape, leaves: &BTreeMap<String, Var>| -> Result<Vec<Var>> {
            let pv = param_vars(leaves, &params);
            let trace = transformer_forward(tape, &pv, leaves["tokens"], &cfg)?;
            let mut outs = trace.reduced.clone();
            outs.push(trace.output);
            Ok(outs)
        };
        check_function("transformer", &param_inputs(&params, vec![("tokens".into(), tokens)]), &build, opts)
    }
}

/// Triangulated `n × n` grid in the z = 0 plane with unit spacing.
pub fn grid_mesh(n: usize) -> TriMesh {
    let positions = (0..n * n).map(|i| [(i % n) as f64, (i / n) as f64, 0.0]).collect();
    let mut faces = Vec::new();
    for y in 0..n - 1 {
        for x in 0..n - 1 {
            let a = y * n + x;
            faces.push([a, a + 1, a + n + 1]);
            faces.push([a, a + n + 1, a + n]);
        }
    }
    TriMesh::new(positions, faces).expect("valid grid")
}

impl GradCheck for DecoderCheck {
    fn description(&self) -> &'static str {
        "token-to-vertex map, Chebyshev layers and parent-map upsamplers on a 9x9 grid pyramid"
    }

    fn run(&self, opts: &GradCheckOptions) -> Result<ModuleReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 3);
        let graph: MeshGraph = grid_mesh(9).graph();
        let pyramid = build_pyramid(&graph, &[21, 41, 81], opts.seed)?;
        let mut scaled = Vec::new();
        for level in &pyramid.levels()[..pyramid.depth() - 1] {
            let l = laplacian(level);
            scaled.push(Arc::new(scaled_laplacian(&l, lambda_max(&l)?)?));
        }
        let tokens = 5;
        let nearest: Vec<usize> = (0..21).map(|i| i % tokens).collect();
        let mut params = Parameters::new();
        init_hand(&mut params, "decoder.right", tokens, &nearest, pyramid.parent_maps(), 3, &mut rng)?;
        jitter(&mut params, 0.1, &mut rng);
        let f_c = random(&[tokens, DECODER_CHANNELS], -1.0, 1.0, &mut rng);
        let build = |tape: &mut Tape, leaves: &BTreeMap<String, Var>| -> Result<Vec<Var>> {
            let pv = param_vars(leaves, &params);
            decode_hand(tape, &pv, "decoder.right", leaves["f_c"], &scaled)
        };
        check_function("decoder", &param_inputs(&params, vec![("f_c".into(), f_c)]), &build, opts)
    }
}

impl GradCheck for SpectralFilterCheck {
    fn description(&self) -> &'static str {
        "Chebyshev graph filter, gradients in theta and signal for every supported order"
    }

    fn run(&self, opts: &GradCheckOptions) -> Result<ModuleReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 4);
        let graph = grid_mesh(5).graph();
        let l = laplacian(&graph);
        let scaled = Arc::new(scaled_laplacian(&l, lambda_max(&l)?)?);
        let mut inputs = Vec::new();
        for order in sgh_core::filter::SUPPORTED_CHEBYSHEV_ORDERS {
            inputs.push((format!("theta{order}"), init_theta(order, 3, 2, &mut rng)));
            inputs.push((format!("x{order}"), random(&[graph.vertex_count(), 3], -1.0, 1.0, &mut rng)));
        }
        let build = |tape: &mut Tape, leaves: &BTreeMap<String, Var>| -> Result<Vec<Var>> {
            sgh_core::filter::SUPPORTED_CHEBYSHEV_ORDERS
                .map(|o| tape.chebyshev(scaled.clone(), leaves[&format!("theta{o}")], leaves[&format!("x{o}")]))
                .collect()
        };
        check_function("spectral_filter", &inputs, &build, opts)
    }
}

impl GradCheck for LossesCheck {
    fn description(&self) -> &'static str {
        "mesh L1, MSE, chamfer, edge length and 2D reprojection losses"
    }

    fn run(&self, opts: &GradCheckOptions) -> Result<ModuleReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 5);
        let mesh = sgh_core::shapes::icosphere(1, 0.05, [0.0; 3]);
        let v = mesh.vertex_count();
        let views = 2;
        let gt = Tensor::from_points(mesh.positions());
        let pred = gt.zip_map(&random(gt.shape(), -0.01, 0.01, &mut rng), |a, b| a + b)?;
        let gt2d = random(&[views, v, 2], -0.1, 0.1, &mut rng);
        let scale = random(&[1, views], 0.8, 1.2, &mut rng);
        let translation = random(&[1, 2 * views], -0.05, 0.05, &mut rng);
        let edges = Arc::new(edge_set(&mesh).edges);
        let target = gt.to_points()?;
        let build = |tape: &mut Tape, leaves: &BTreeMap<String, Var>| -> Result<Vec<Var>> {
            let p = leaves["pred"];
            Ok(vec![
                losses::l1_mesh(tape, p, gt.clone())?,
                losses::mse(tape, p, gt.clone())?,
                losses::chamfer(tape, p, target.clone())?,
                losses::edge(tape, p, edges.clone())?,
                losses::reproject_2d(tape, p, leaves["scale"], leaves["translation"], gt2d.clone())?,
            ])
        };
        let inputs = vec![("pred".into(), pred), ("scale".into(), scale), ("translation".into(), translation)];
        check_function("losses", &inputs, &build, opts)
    }
}

impl GradCheck for CameraCheck {
    fn description(&self) -> &'static str {
        "pooled weak-perspective camera head"
    }

    fn run(&self, opts: &GradCheckOptions) -> Result<ModuleReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 6);
        let (channels, views, clusters) = (6, 2, 4);
        let mut params = Parameters::new();
        camera::init_params(&mut params, channels, views, &mut rng)?;
        jitter(&mut params, 0.1, &mut rng);
        let f_r = random(&[clusters, channels], -1.0, 1.0, &mut rng);
        let build = |tape: &mut Tape, leaves: &BTreeMap<String, Var>| -> Result<Vec<Var>> {
            let pv = param_vars(leaves, &params);
            let c = camera_head(tape, &pv, leaves["f_r"], views)?;
            Ok(vec![c.scale, c.translation])
        };
        check_function("camera", &param_inputs(&params, vec![("f_r".into(), f_r)]), &build, opts)
    }
}

pub fn gradcheck_registry() -> Registry<dyn GradCheck> {
    Registry::<dyn GradCheck>::new()
        .with("fusion", Box::new(FusionCheck))
        .with("transformer", Box::new(TransformerCheck))
        .with("decoder", Box::new(DecoderCheck))
        .with("spectral_filter", Box::new(SpectralFilterCheck))
        .with("losses", Box::new(LossesCheck))
        .with("camera", Box::new(CameraCheck))
}

/// Runs the named checks, or all of them for an empty list.
pub fn run_checks(names: &[String], opts: &GradCheckOptions) -> Result<Vec<ModuleReport>> {
    let registry = gradcheck_registry();
    let selected: Vec<String> =
        if names.is_empty() { registry.names().map(String::from).collect() } else { names.to_vec() };
    selected
        .iter()
        .map(|n| registry.get(n).ok_or_else(|| argument(format!("unknown gradcheck module `{n}`")))?.run(opts))
        .collect()
}
