use thiserror::Error;

use crate::graph::Vertex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("label {label} has no incident edges (isolated vertex)")]
    IsolatedVertex { label: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("label {label} out of range for cell size {cell_size}")]
    LabelOutOfRange { label: usize, cell_size: usize },

    #[error("invalid graph parameters: {0}")]
    InvalidGraph(String),

    #[error("vertex {0} is not in the graph")]
    VertexNotInGraph(Vertex),

    #[error("vertex {0} is not in the common subgraph")]
    VertexNotInCommonSubgraph(Vertex),

    #[error("Floquet matrix is not Hermitian after symmetrization (deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("lambda = {lambda} is not within {tol:e} of any band")]
    NotInSpectrum { lambda: f64, tol: f64 },

    #[error("no center satisfying condition (P) for n = {n} in the search window")]
    ConditionPFailed { n: usize },

    #[error("eigenpair residual {residual:e} exceeds tolerance")]
    BadEigenpair { residual: f64 },

    #[error("support set is empty")]
    EmptySupport,

    #[error("truncation box is empty")]
    EmptyBox,

    #[error("box has {vertices} vertices; dense solver is capped at {cap}")]
    BoxTooLarge { vertices: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
