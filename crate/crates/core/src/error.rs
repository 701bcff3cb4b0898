//! Error type shared by all solver modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Polynomial order too small; the identity block of the mass-stiffness
    /// product has size N-3 and must be nonempty.
    #[error("polynomial order N = {0} is too small (need N >= 4)")]
    InvalidOrder(usize),

    /// A preconditioner denominator (or 2x2 block determinant) fell below the
    /// resonance tolerance. `kappa_critical` is the nearby value of kappa that
    /// makes the denominator vanish exactly.
    #[error("resonance at mode {indices:?}: |denominator| = {denominator:.3e} < tol, critical kappa ~ {kappa_critical:.6e}")]
    Resonance {
        indices: Vec<usize>,
        denominator: f64,
        kappa_critical: f64,
    },

    /// An iterative kernel (root finder, eigensolver) failed to converge.
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    /// Dense assembly requested beyond the supported size.
    #[error("capacity exceeded: {what} supports at most {limit}, got {got}")]
    Capacity {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    /// Invalid run configuration (bad field value, missing callback, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
