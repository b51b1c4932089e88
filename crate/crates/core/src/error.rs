use thiserror::Error;

use crate::rational::{format_q, Q};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("operator is not elliptic: symbol is not injective at xi = ({})", fmt_vec(.xi))]
    NotElliptic { xi: Vec<Q> },
    #[error("operator is not homogeneous: row orders {0:?}")]
    NotHomogeneous(Vec<Option<u32>>),
    #[error("order k = {order} is below the space dimension n = {dim}")]
    OrderTooLow { order: u32, dim: usize },
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("quadrature did not converge: last change {change:e} above tolerance {tol:e} at level {level}")]
    QuadratureNotConverged { change: f64, tol: f64, level: u32 },
    #[error("symbol nearly singular at a quadrature node: det G = {det:e}")]
    NearSingularSymbol { det: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub(crate) fn fmt_vec(v: &[Q]) -> String {
    v.iter().map(format_q).collect::<Vec<_>>().join(", ")
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;
