//! Face and ear recognition in eigenspace.
//!
//! The pipeline trains one PCA subspace per modality, gates probe images by
//! normalized cross-correlation against the training mean, scores probes by
//! Euclidean distance to enrolled templates, and fuses per-sample decisions
//! with a majority vote inside each modality followed by an AND across
//! modalities. The [`evaluation`] module measures recognition rate, FAR and
//! FRR over threshold sweeps.

pub mod cli;
pub mod eigenspace;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod fusion;
pub mod gallery;
pub mod linalg;
pub mod matching;
pub mod pipeline;
pub mod quality;
pub mod sample;

pub use eigenspace::{Components, EigenModel, FeatureVector, Reconstruction};
pub use error::{Error, Result};
pub use exec::Parallelism;
pub use sample::{ImageSample, Modality};
