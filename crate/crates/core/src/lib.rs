// `!(a <= b)` is used deliberately throughout: unlike `a > b` it also
// rejects NaN operands in validation checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Simulation and verification toolkit for human-safeguarded algorithmic
//! decisions: clip-based guardrails, exact benefit identities with their
//! sufficient/necessary conditions, and three desk-scale pricing/prediction
//! scenarios where a simple human bound beats a well-fed algorithm
//! (competition blindness, model misspecification, data contamination).

pub mod competition;
pub mod contamination;
pub mod error;
pub mod estimate;
pub mod framework;
pub mod misspec;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
pub use estimate::{estimate_mean, EstimateWithCi, Method};
pub use framework::{
    benefit, benefit_curve, clip, condition_report, BenefitEstimate, ConditionKind,
    ConditionReport, EvalMethod, JointDecisionModel, JointDraw, LossSpec, Verdict,
};
pub use quadrature::{quadrature_1d, quadrature_2d};
pub use rng::RngStream;
