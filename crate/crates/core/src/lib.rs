//! Order-preserving 2D matching of feature matrices.
//!
//! The crate is organized bottom-up:
//!
//! - [`matrix`] and [`io`]: feature matrices, datasets and their file formats.
//! - [`dtw`]: dynamic time warping with full tables and path backtracking.
//! - [`dpw`]: dynamic position warping distance, optimal hierarchical paths,
//!   path validation and an exhaustive path enumerator.
//! - [`adapter`]: an element-wise two-layer perceptron that maps emerging
//!   modality elements toward the seen modality.
//! - [`sloma`]: the inner loop alternating matching and adapter retraining.
//! - [`swim`]: the outer loop that grows the matched pair set.
//! - [`eval`]: top-k accuracy and the point-wise nearest-neighbour baseline.
//! - [`synth`]: synthetic cross-modality tasks with known ground truth.
//! - [`config`]: `key = value` run configuration.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod adapter;
pub mod config;
pub mod dpw;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod seed;
pub mod sloma;
pub mod swim;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::{element_distance, Dataset, Entry, FeatureElement, FeatureMatrix};
