// `!(a <= b)` rejects NaN as well as inverted values in validations.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Experiment orchestration for the guardrail toolkit: config parsing,
//! replication sweeps with reproducible CSV output, and the acceptance
//! verification suite.

pub mod config;
pub mod runner;
pub mod verify;

pub use config::{ConfigError, ScenarioConfig};
pub use runner::{execute, run_to_files, RunManifest, RunOutput};
pub use verify::{run_suite, CriterionResult, Suite};
