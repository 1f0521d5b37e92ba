//! Core numerics for spectral hand-mesh reconstruction: mesh graphs and their
//! Laplacian spectra, spectral segmentation, graph pyramids, spectral filters
//! and the SGTF tensor file format.

pub mod eigen;
pub mod error;
pub mod filter;
pub mod graph;
pub mod mesh;
pub mod pyramid;
pub mod registry;
pub mod segment;
pub mod shapes;
pub mod sparse;
pub mod tensor;
pub mod tensor_file;

pub use error::{Error, Result};
pub use registry::Registry;
pub use tensor::Tensor;
