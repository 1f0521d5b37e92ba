//! The `sgh` command-line tool: segmentation and pyramid preprocessing,
//! desk-scale overfitting, collision refinement and verification harnesses.

pub mod commands;
pub mod error;
pub mod oracle;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "sgh", version, about = "Spectral graph hand-mesh reconstruction toolkit")]
pub struct Cli {
    /// Print a single JSON object on stdout instead of human-readable text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a template mesh as OBJ.
    Template(TemplateArgs),
    /// Spectral clustering of a mesh into K regions.
    Segment(SegmentArgs),
    /// Coarsening hierarchy with prescribed level sizes.
    Pyramid(PyramidArgs),
    /// Fit the model to one synthetic scene.
    Overfit(OverfitArgs),
    /// Push a source mesh out of a target mesh.
    Refine(RefineArgs),
    /// Finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
    /// Brute-force oracle equivalence suites.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct TemplateArgs {
    /// Name in the template registry (`hand` or `icosphere`).
    #[arg(long, default_value = "hand")]
    pub kind: String,
    #[arg(long, value_enum, default_value = "right")]
    pub side: Side,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum Side {
    Right,
    Left,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    pub mesh: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiply OBJ coordinates by this factor to get meters.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PyramidArgs {
    pub mesh: PathBuf,
    /// Ascending level sizes ending at the mesh vertex count.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Output directory for the manifest and binary sidecar.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverfitArgs {
    /// Model config JSON; the toy config when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub scene_seed: u64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Per-vertex ground-truth noise in meters.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Overrides the config learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Output directory for the checkpoint and `losses.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// Refinement config JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub arap_weight: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub voxel_cm: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Refined OBJ path.
    #[arg(long)]
    pub out: PathBuf,
    /// Report JSON path; defaults to the output path with a `.json` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Modules to check (comma separated); all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub module: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// `chebyshev`, `clustering`, `chamfer` or `collision`; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub test: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// What a command reports: a JSON document and its human rendering.
#[derive(Debug)]
pub struct Outcome {
    pub json: serde_json::Value,
    pub text: String,
    /// Set when the command ran but its checks failed.
    pub failure: Option<String>,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Template(a) => commands::template(a),
        Command::Segment(a) => commands::segment(a),
        Command::Pyramid(a) => commands::pyramid(a),
        Command::Overfit(a) => commands::overfit(a),
        Command::Refine(a) => commands::refine(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Oracle(a) => commands::oracle(a),
    }
}
