//! Spectral analysis of normalized Laplacians on Z^d-periodic graphs and
//! their non-compact perturbations.

pub mod error;
pub mod catalog;
pub mod floquet;
pub mod graph;
pub mod input;
pub mod par;
pub mod perturbation;
pub mod truncation;
pub mod weyl;

pub use error::{Error, Result};
pub use graph::{Field, FundEdge, GraphOracle, PeriodicGraph, Vertex};
pub use par::Exec;
pub use perturbation::{Perturbation, PerturbedGraph};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
