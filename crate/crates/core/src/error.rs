//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by estimators, quadrature, and the scenario modules.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A guardrail with lower bound above its upper bound.
    #[error("invalid guardrail: lower bound {lower} exceeds upper bound {upper}")]
    InvalidGuardrail { lower: f64, upper: f64 },

    /// A sampled or evaluated quantity was NaN or infinite where a finite
    /// value is required.
    #[error("non-finite value {value} in {context}")]
    NonFinite { value: f64, context: String },

    /// Bad argument (empty grid, too few samples, out-of-range parameter).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation needs a piece of configuration that is absent
    /// (e.g. a loss without a minimizer used in a condition check).
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Adaptive quadrature ran out of subdivisions. Carries the partial
    /// estimate and its error bound at the point of failure.
    #[error("quadrature failed to converge: estimate {estimate} ± {error_bound} after {subdivisions} subdivisions")]
    QuadratureNoConvergence {
        estimate: f64,
        error_bound: f64,
        subdivisions: usize,
    },

    /// The estimated demand slopes upward; the revenue objective has no
    /// finite maximizer.
    #[error("nonpositive estimated slope {beta_hat}: no finite price maximizer")]
    NonpositiveSlope { beta_hat: f64 },

    /// OLS design matrix is singular (e.g. all prices identical).
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// A result's stated hypotheses do not hold for the supplied inputs.
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    /// An improvement condition whose defining denominator is nonpositive.
    #[error("condition inapplicable: {0}")]
    ConditionInapplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
