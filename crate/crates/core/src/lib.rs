//! Anomaly detection on attributed graphs by multi-view node–subgraph
//! contrast combined with masked attribute reconstruction.
//!
//! The pipeline is: [`graph`] loading, optional anomaly [`injector`],
//! personalized PageRank [`diffusion`] for the global view, random-walk
//! [`sampler`] for paired local/global subgraphs, the [`model`] built on the
//! small autodiff engine in [`nn`], the training and scoring loop in
//! [`pipeline`], and ROC/AUC in [`eval`].

pub mod diffusion;
pub mod error;
pub mod eval;
pub mod graph;
pub mod injector;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{AttributedGraph, DatasetFiles};
