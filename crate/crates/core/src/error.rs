//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A dimension or index did not line up with the object it addresses.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An operation that requires a connected graph received a disconnected one.
    #[error("graph is disconnected")]
    Disconnected,

    /// Random geometric graph generation kept producing disconnected draws.
    #[error("failed to draw a connected graph after {attempts} attempts (m={m}, rho_c={rho_c})")]
    RetryLimitExhausted { attempts: usize, m: usize, rho_c: f64 },

    /// A parameter violated its documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested MSE target cannot be met even with lossless exchange.
    #[error(
        "MSE target {target} is infeasible at this horizon: lossless MSE is {lossless}; \
         increase the horizon (see t_min)"
    )]
    InfeasibleTarget { target: f64, lossless: f64 },

    /// The horizon scan hit its cap without reaching the target.
    #[error("MSE target {target} not reached within {cap} iterations")]
    TargetUnreachable { target: f64, cap: usize },

    /// EMSE is undefined when the lossless reference MSE is zero.
    #[error("EMSE undefined: lossless reference MSE is zero")]
    UndefinedEmse,

    /// A propagated covariance failed the positive-semidefiniteness check.
    #[error("covariance lost positive semidefiniteness at iteration {t}: min eigenvalue {min_eig}")]
    NotPsd { t: usize, min_eig: f64 },

    /// The solver stopped without meeting its convergence targets.
    #[error("solver failed to converge: {0}")]
    SolverFailure(String),

    /// An empirical estimator was handed no samples.
    #[error("empty input: {0}")]
    EmptyInput(String),
}
