//! Pixel-level segmentation of CT brain stacks by discriminative sparse
//! dictionary learning.
//!
//! The pipeline classifies every pixel of a candidate head region into
//! brain, CSF, or subdural hematoma from a feature that pairs a square
//! intensity patch with the matching patch of normalized distances to the
//! region boundary. Per axial partition, one dictionary and linear
//! classifier are trained per class and concatenated for inference.
//!
//! Modules, bottom up:
//!
//! - [`mat`], [`numerics`]: dense kernels, batch OMP, nonnegative lasso,
//!   ridge, extreme eigenvalues, and the constrained dictionary update.
//! - [`imaging`]: candidate region, exact distance transform, patch
//!   features, slice partitioning, and training-patch selection.
//! - [`train`]: the discriminative trainer (per-class dictionaries with a
//!   complement-repulsion term) and its initialization.
//! - [`baselines`]: sparse-representation and joint-dictionary baselines,
//!   plus a pure intensity classifier.
//! - [`pipeline`]: stack-level training and segmentation, PGM stack I/O,
//!   and model persistence.
//! - [`evaluation`]: dice overlap plus operation-count and memory
//!   estimators.
//! - [`synthdata`]: a seeded phantom generator for end-to-end tests.

pub mod baselines;
pub mod bench;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod infer;
pub mod mat;
pub mod numerics;
pub mod pipeline;
pub mod seeding;
pub mod synthdata;
pub mod train;

pub use error::{FlisError, Result};

// The guide's code blocks compile and run as doc-tests, so the book in
// book/ can't drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    pub mod overview {}
    #[doc = include_str!("../../../book/src/features.md")]
    pub mod features {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/inference.md")]
    pub mod inference {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub mod baselines {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    pub mod pipeline {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
}
