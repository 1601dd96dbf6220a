//! Acceptance suite: one test per criterion, each printing its pass/fail
//! line. Run with `cargo test --test acceptance -- --nocapture` to see the
//! measured values, or `guardrail verify all` for the same checks from the
//! command line.

use guardrail_cli::verify::run_criterion;

const SEED: u64 = 42;

fn check(id: u32) {
    let result = run_criterion(id, SEED);
    println!("{}", result.line());
    assert!(result.passed, "criterion {id} failed: {} (bound: {})", result.measured, result.bound);
}

#[test]
fn criterion_01_benefit_identity() {
    check(1);
}

#[test]
fn criterion_02_implication_chain() {
    check(2);
}

#[test]
fn criterion_03_benefit_curve_unimodality() {
    check(3);
}

#[test]
fn criterion_04_tightness_counterexample() {
    check(4);
}

#[test]
fn criterion_05_plim_convergence() {
    check(5);
}

#[test]
fn criterion_06_matching_threshold() {
    check(6);
}

#[test]
fn criterion_07_human_interval_coverage() {
    check(7);
}

#[test]
fn criterion_08_limit_price() {
    check(8);
}

#[test]
fn criterion_09_improvement_conditions() {
    check(9);
}

#[test]
fn criterion_10_response_contamination() {
    check(10);
}

#[test]
fn criterion_11_covariate_contamination() {
    check(11);
}

#[test]
fn criterion_12_reproducibility() {
    check(12);
}
