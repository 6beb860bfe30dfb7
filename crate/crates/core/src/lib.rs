//! Diagnostics for embedding-based dialogue response scorers.
//!
//! The crate covers the whole pipeline: tokenizing and loading dialogue
//! corpora, pooling word vectors into sentence embeddings, a bilinear scorer
//! with training and persistence, embedding-geometry diagnostics, a battery
//! of seeded text perturbations, a whitebox attack realized through an
//! approximate nearest-neighbor index, correlation statistics, and report
//! generation.
//!
//! Data-parallel loops run on rayon with the default `parallel` feature.
//! Every parallel path produces the same output as the sequential one; see
//! [`par::Execution`].

pub mod attack;
pub mod embed;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod par;
pub mod perturb;
pub mod scorer;
pub mod stats;
pub mod text;

pub use harness::Error;
pub use par::Execution;
