//! Neighbor-reconstruction autoencoders for unsupervised vector verification.
//!
//! Training vectors are paired with their most cosine-similar neighbors
//! (no labels involved), and an autoencoder learns to reconstruct the
//! neighbor rather than the input. The encoder output then serves as an
//! embedding that is scored with cosine similarity on verification trials.
//!
//! Modules, bottom-up:
//!
//! - [`vecmath`]: cosine similarity and the pairwise similarity matrix
//! - [`neighbors`]: top-k / threshold neighbor selection, training pairs
//! - [`net`]: the autoencoder, its gradients and learning-rate schedules
//! - [`trainer`]: mini-batch SGD over training pairs
//! - [`embed`]: embedding extraction
//! - [`eval`]: trial scoring, EER, fusion
//! - [`synth`]: deterministic synthetic identity clusters
//! - [`io`]: file formats
//! - [`pipeline`]: the end-to-end experiment
//! - [`cli`]: the `nsae` command line

pub mod cli;
pub mod embed;
pub mod error;
pub mod eval;
pub mod io;
pub mod neighbors;
pub mod net;
pub mod pipeline;
pub mod synth;
pub mod trainer;
pub mod vecmath;

pub use error::{Error, Result};
pub use vecmath::FaceVector;
