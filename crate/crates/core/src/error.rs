//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input to a constructor or operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A control value fell outside the admissible control set.
    #[error("control {value} outside the control set [{lo}, {hi}]")]
    ControlOutOfSet { value: f64, lo: f64, hi: f64 },

    /// An integration produced a non-finite value. Reported at the first bad
    /// node so Riccati blow-ups can be localised.
    #[error("{context}: non-finite value at node {node} (t = {t})")]
    NonFinite {
        context: &'static str,
        node: usize,
        t: f64,
    },

    /// Posterior variance went negative, which the model forbids.
    #[error("posterior variance negative at node {node} (t = {t}): V = {value}")]
    NegativeVariance { node: usize, t: f64, value: f64 },

    /// Two paths or a path and a grid do not share the same grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Quadrature index order violation.
    #[error("index order violation: from = {from} > to = {to}")]
    IndexOrder { from: usize, to: usize },

    /// CARA utility exponent too large for f64.
    #[error(
        "exponent magnitude {magnitude:.1} exceeds 700; rescale the problem \
         (smaller risk aversion, |Z|, or horizon) to avoid overflow"
    )]
    ExponentOverflow { magnitude: f64 },

    /// Iterative optimiser did not reach its convergence criterion.
    #[error("optimiser did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}
