//! Exact transpilation between piecewise linear Kolmogorov–Arnold networks and
//! ReLU feedforward networks.
//!
//! - [`piecewise`], [`kan`], [`mlp`]: the model types and their exact evaluation.
//! - [`convert`]: KAN → ReLU (per activation, per layer, whole network) and ReLU → KAN.
//! - [`complexity`]: parameter counts, region upper bounds and class-embedding checks.
//! - [`regions`]: exact 1-D linear-region extraction and a 2-D grid fingerprint.
//! - [`spline`]: polynomial-spline KANs and the (ReLU, xʳ) architecture.
//! - [`verify`]: sampled and exact 1-D equivalence checks.
//! - [`model`]: the JSON model file format.

pub mod complexity;
pub mod convert;
pub mod corpus;
pub mod error;
pub mod kan;
pub mod linalg;
pub mod mlp;
pub mod model;
pub mod network;
pub mod par;
pub mod piecewise;
pub mod provenance;
pub mod regions;
pub mod spline;
pub mod verify;

pub use convert::{kan_layer_to_relu, kan_to_mlp, mlp_to_kan, pl_to_relu_unit, ConversionMode, ReluBlock, Validity};
pub use error::{Error, Result};
pub use kan::{Kan, KanLayer};
pub use linalg::Matrix;
pub use mlp::{Activation, Mlp, MlpLayer};
pub use network::Network;
pub use par::Parallelism;
pub use piecewise::PiecewiseLinear;
