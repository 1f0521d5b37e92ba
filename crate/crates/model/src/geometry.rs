//! Precomputed template data shared by every forward pass: pyramids, scaled
//! Laplacians, token subsets and the cluster labels of the tokens.

use std::sync::Arc;

use sgh_core::eigen::lambda_max;
use sgh_core::graph::{laplacian, scaled_laplacian, Laplacian, MeshGraph};
use sgh_core::mesh::{edge_set, subsample_to_count, TriMesh};
use sgh_core::pyramid::{build_pyramid, GraphPyramid};
use sgh_core::segment::{segment, ClusterAssignment};
use sgh_core::shapes::Handedness;
use sgh_core::tensor::Tensor;

use crate::config::ModelConfig;
use crate::error::{config, Result};
use crate::template::template_registry;

pub const HANDS: [Handedness; 2] = [Handedness::Right, Handedness::Left];

pub fn hand_key(hand: Handedness) -> &'static str {
    match hand {
        Handedness::Right => "right",
        Handedness::Left => "left",
    }
}

#[derive(Clone, Debug)]
pub struct HandGeometry {
    pub hand: Handedness,
    pub template: TriMesh,
    pub pyramid: GraphPyramid,
    /// `λ_max` of every level below the finest.
    pub lambda_max: Vec<f64>,
    /// Rescaled Laplacians `2L/λ_max − I` of every level below the finest.
    pub scaled_laplacians: Vec<Arc<Laplacian>>,
    /// Template vertices kept as transformer tokens, ascending.
    pub token_indices: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Geometry {
    /// Right hand first.
    pub hands: [HandGeometry; 2],
    /// Clusters of the right template; the left template shares its connectivity.
    pub segmentation: ClusterAssignment,
    /// Cluster label of every token, right-hand tokens first.
    pub token_labels: Arc<Vec<usize>>,
    /// `V' × 3` template positions of the tokens.
    pub token_positions: Tensor,
    /// Edges of the stacked two-hand template (left indices offset by `V`).
    pub edges: Arc<Vec<(usize, usize)>>,
}

fn same_connectivity(a: &MeshGraph, b: &MeshGraph) -> bool {
    a.vertex_count() == b.vertex_count() && a.edges() == b.edges()
}

impl Geometry {
    pub fn build(cfg: &ModelConfig) -> Result<Self> {
        Self::build_with_segmentation(cfg, None)
    }

    /// As [`Geometry::build`], reusing a template segmentation when given.
    pub fn build_with_segmentation(cfg: &ModelConfig, segmentation: Option<ClusterAssignment>) -> Result<Self> {
        cfg.validate()?;
        let registry = template_registry();
        let source = registry.get(&cfg.template).ok_or_else(|| config(format!("unknown template `{}`", cfg.template)))?;
        let right = source.right();
        let left = source.left();
        let v = cfg.template_vertices();
        if right.vertex_count() != v || left.vertex_count() != v {
            return Err(config(format!(
                "template `{}` has {} vertices but decoder_sizes ends at {v}",
                cfg.template,
                right.vertex_count()
            )));
        }
        let right_graph = right.graph();
        let left_graph = left.graph();
        if !same_connectivity(&right_graph, &left_graph) {
            return Err(config("left and right templates must share connectivity"));
        }
        let segmentation = match segmentation {
            Some(s) if s.labels().len() == v && s.k() == cfg.clusters => s,
            Some(_) => return Err(config("supplied segmentation does not match the template")),
            None => segment(&right_graph, cfg.clusters, cfg.clusters, cfg.seed)?,
        };
        let right_pyramid = build_pyramid(&right_graph, &cfg.decoder_sizes, cfg.seed)?;
        let left_pyramid = build_pyramid(&left_graph, &cfg.decoder_sizes, cfg.seed)?;
        if left_pyramid.parent_maps() != right_pyramid.parent_maps() {
            return Err(config("left and right pyramids diverged"));
        }
        let mut lambdas = Vec::new();
        let mut scaled = Vec::new();
        for level in &right_pyramid.levels()[..right_pyramid.depth() - 1] {
            let l = laplacian(level);
            let lm = lambda_max(&l)?;
            scaled.push(Arc::new(scaled_laplacian(&l, lm)?));
            lambdas.push(lm);
        }
        let mut hands = Vec::with_capacity(2);
        for (hand, template, pyramid) in [(HANDS[0], right, right_pyramid), (HANDS[1], left, left_pyramid)] {
            let token_indices = subsample_to_count(&template, cfg.tokens_per_hand(), cfg.seed)?.kept_indices().to_vec();
            hands.push(HandGeometry {
                hand,
                template,
                pyramid,
                lambda_max: lambdas.clone(),
                scaled_laplacians: scaled.clone(),
                token_indices,
            });
        }
        let hands: [HandGeometry; 2] = hands.try_into().expect("two hands");
        let mut labels = Vec::with_capacity(cfg.tokens);
        let mut positions = Vec::with_capacity(cfg.tokens);
        for h in &hands {
            labels.extend(h.token_indices.iter().map(|&i| segmentation.labels()[i]));
            positions.extend(h.token_indices.iter().map(|&i| h.template.positions()[i]));
        }
        let mut edges = edge_set(&hands[0].template).edges;
        let left_edges: Vec<_> = edge_set(&hands[1].template).edges.iter().map(|&(a, b)| (a + v, b + v)).collect();
        edges.extend(left_edges);
        Ok(Self {
            hands,
            segmentation,
            token_labels: Arc::new(labels),
            token_positions: Tensor::from_points(&positions),
            edges: Arc::new(edges),
        })
    }

    pub fn vertices_per_hand(&self) -> usize {
        self.hands[0].template.vertex_count()
    }

    /// Template positions of both hands stacked, `2V × 3`.
    pub fn template_vertices(&self) -> Tensor {
        let mut pts = self.hands[0].template.positions().to_vec();
        pts.extend_from_slice(self.hands[1].template.positions());
        Tensor::from_points(&pts)
    }

    /// Both templates as one mesh, right hand first.
    pub fn stacked_template(&self) -> TriMesh {
        self.hands[0].template.concat(&self.hands[1].template)
    }

    /// For each coarsest-level vertex of `hand`, the nearest token of that hand
    /// as an index into the full token list.
    pub fn nearest_tokens(&self, hand: usize) -> Vec<usize> {
        let h = &self.hands[hand];
        let offset = hand * h.token_indices.len();
        let tokens: Vec<[f64; 3]> = h.token_indices.iter().map(|&i| h.template.positions()[i]).collect();
        h.pyramid
            .level(0)
            .positions()
            .iter()
            .map(|p| {
                let d = |q: &[f64; 3]| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
                let best = (0..tokens.len())
                    .min_by(|&a, &b| d(&tokens[a]).total_cmp(&d(&tokens[b])).then(a.cmp(&b)))
                    .expect("at least one token");
                offset + best
            })
            .collect()
    }
}
