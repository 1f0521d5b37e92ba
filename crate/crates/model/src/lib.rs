//! Two-hand mesh reconstruction network: multi-view feature fusion,
//! region tokens, a width-reducing transformer encoder and a spectral
//! graph decoder, trained with reverse-mode autodiff on an in-crate tape.

pub mod camera;
pub mod config;
pub mod decoder;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod params;
pub mod scene;
pub mod tape;
pub mod template;
pub mod train;
pub mod transformer;

pub use config::ModelConfig;
pub use error::{ModelError, Result};
pub use model::{Forward, Model, TraceRow};
pub use params::Parameters;
pub use tape::{Tape, Var};
