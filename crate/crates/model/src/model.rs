//! The full pipeline: fusion, tokenization, encoder, decoder and camera head.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sgh_core::tensor::Tensor;

use crate::camera::{self, camera_head, CameraVars};
use crate::config::ModelConfig;
use crate::decoder::{self, decoder_forward, DecoderOutput};
use crate::error::{config, Result};
use crate::fusion::{self, fuse_views, fusion_forward, FusionOutput};
use crate::geometry::{hand_key, Geometry};
use crate::params::{ParamVars, Parameters};
use crate::tape::{Tape, Var};
use crate::transformer::{self, transformer_forward, EncoderTrace};

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    geometry: Arc<Geometry>,
}

/// Every intermediate of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub fusion: FusionOutput,
    /// `f''` per view, `K × C` each.
    pub per_view: Vec<Var>,
    pub f_r: Var,
    pub tokens: Var,
    pub encoder: EncoderTrace,
    pub decoder: DecoderOutput,
    pub camera: CameraVars,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Forward {
    pub fn vertices(&self) -> Var {
        self.decoder.vertices
    }

    /// Named dimensionality of every stage, in evaluation order.
    pub fn shape_trace(&self, tape: &Tape, features: &Tensor) -> Vec<TraceRow> {
        let row = |name: String, shape: Vec<usize>| TraceRow { name, shape };
        let views = self.fusion.f_prime.len();
        let side = self.fusion.side;
        let c = tape.shape(self.fusion.f_prime[0])[1];
        let k = tape.shape(self.fusion.masks[0])[1];
        let mut rows = vec![
            row("f".into(), features.shape().to_vec()),
            row("f_prime".into(), vec![views, side, side, c]),
            row("mask".into(), vec![views, side, side, k]),
            row("f_double_prime".into(), vec![views, k, c]),
            row("f_r".into(), tape.shape(self.f_r).to_vec()),
            row("tokens".into(), tape.shape(self.tokens).to_vec()),
        ];
        for (b, &v) in self.encoder.blocks.iter().enumerate() {
            rows.push(row(format!("encoder.block{b}"), tape.shape(v).to_vec()));
            if let Some(&r) = self.encoder.reduced.get(b) {
                rows.push(row(format!("encoder.reduce{b}"), tape.shape(r).to_vec()));
            }
        }
        rows.push(row("encoder.output".into(), tape.shape(self.encoder.output).to_vec()));
        for (h, layers) in ["right", "left"].iter().zip(&self.decoder.hands) {
            for (i, &v) in layers.iter().enumerate() {
                let kind = if i % 2 == 0 { "fc" } else { "cheb" };
                rows.push(row(format!("decoder.{h}.{kind}{}", i / 2), tape.shape(v).to_vec()));
            }
        }
        rows.push(row("output".into(), tape.shape(self.decoder.vertices).to_vec()));
        rows
    }
}

impl Model {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let geometry = Arc::new(Geometry::build(&cfg)?);
        Self::with_geometry(cfg, geometry)
    }

    pub fn with_geometry(cfg: ModelConfig, geometry: Arc<Geometry>) -> Result<Self> {
        cfg.validate()?;
        if geometry.token_labels.len() != cfg.tokens || geometry.vertices_per_hand() != cfg.template_vertices() {
            return Err(config("geometry was built for a different configuration"));
        }
        Ok(Self { config: cfg, geometry })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    /// Seeded initial parameters.
    pub fn init_params(&self) -> Result<Parameters> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut p = Parameters::new();
        fusion::init_params(&mut p, cfg.backbone_channels, cfg.channels, cfg.clusters, &mut rng)?;
        transformer::init_params(&mut p, cfg, &mut rng)?;
        decoder::init_params(&mut p, &self.geometry, cfg.tokens, cfg.cheb_order, &mut rng)?;
        camera::init_params(&mut p, cfg.channels, cfg.views, &mut rng)?;
        Ok(p)
    }

    pub fn forward(&self, tape: &mut Tape, pv: &ParamVars, features: &Tensor) -> Result<Forward> {
        let cfg = &self.config;
        let expected = [cfg.views, cfg.feature_size, cfg.feature_size, cfg.backbone_channels];
        features.expect_shape(&expected, "backbone features")?;
        let fusion = fusion_forward(tape, pv, features)?;
        let (per_view, f_r) = fuse_views(tape, &fusion.f_prime, &fusion.masks)?;
        let region = tape.gather_rows(f_r, self.geometry.token_labels.clone())?;
        let positions = tape.constant(self.geometry.token_positions.clone());
        let tokens = tape.hcat(&[region, positions])?;
        let encoder = transformer_forward(tape, pv, tokens, cfg)?;
        let decoder = decoder_forward(tape, pv, encoder.output, &self.geometry)?;
        let camera = camera_head(tape, pv, f_r, cfg.views)?;
        Ok(Forward { fusion, per_view, f_r, tokens, encoder, decoder, camera })
    }

    /// Parameter names of the per-hand decoder for `hand` (0 = right).
    pub fn decoder_prefix(&self, hand: usize) -> String {
        format!("decoder.{}", hand_key(self.geometry.hands[hand].hand))
    }
}
