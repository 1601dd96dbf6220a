//! Clipping guardrails: operators, exact benefit identities, and the
//! sufficient/necessary conditions for one-sided, two-sided, and covariate
//! settings.

pub mod benefit;
pub mod condition;
pub mod loss;
pub mod model;

pub use benefit::{
    benefit, benefit_curve, clip, tightness_counterexample, tightness_model, BenefitEstimate,
    EvalMethod, TightnessOutcome, TightnessParams,
};
pub use condition::{condition_report, ConditionKind, ConditionReport, Verdict};
pub use loss::LossSpec;
pub use model::{
    BoundGen, CovariatePoint, GuardrailSpec, JointDecisionModel, JointDraw, MixedDensity,
    ModelDensity, Pdf, ScalarDist,
};
