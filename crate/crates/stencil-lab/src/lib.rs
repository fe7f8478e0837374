//! A stencil-quality laboratory for meshless RBF-FD methods.
//!
//! The crate covers the full pipeline from geometry to metrics:
//!
//! - [`node_gen`]: quasi-uniform candidate node clouds and randomized,
//!   realistically clustered stencil sampling.
//! - [`rbf_fd`]: operator weights over a stencil from the polyharmonic r^3
//!   basis with degree-2 monomial augmentation.
//! - [`fields`]: analytic benchmark fields with exact derivatives.
//! - [`labeling`]: the scalar stencil-quality error, balanced per-size
//!   quartile classes, dataset assembly, and a versioned text format.
//! - [`model`]: a from-scratch point-cloud classifier (shared per-point
//!   feature maps, global max-pool, dense head) with Adam training.
//! - [`eval`]: confusion matrices, per-class metrics, ROC/AUC, and
//!   better-than-median analysis.
//! - [`cli`]: the `generate` / `train` / `evaluate` / `classify` commands
//!   wired together for the thin binary.
//!
//! Start with the `examples/` directory: each file is a runnable tour of one
//! capability (`cargo run --release -p stencil-lab --example stencil_weights`).

pub mod cli;
pub mod error;
pub mod eval;
pub mod fields;
pub mod labeling;
pub mod linalg;
pub mod model;
pub mod node_gen;
pub mod rbf_fd;

pub use error::{Error, Result};
pub use fields::TestField;
pub use labeling::{Dataset, DatasetConfig, LabeledStencil, Quartile, QuartileBorders};
pub use model::{ModelConfig, ModelParams};
pub use node_gen::{GenConfig, NodeCloud, Point2, Rect, Stencil, StencilSample};
pub use rbf_fd::{DiffOp, WeightSet};
