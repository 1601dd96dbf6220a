//! Config-driven experiment execution: replication sweeps dispatched to the
//! scenario modules, with reproducible CSV output and a run manifest.
//!
//! Output rows are ordered by (sweep index, replication index) and every
//! replication derives its own random stream from (seed, sweep, replication),
//! so the CSV bytes depend only on the config and seed, never on threads.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use guardrail_core::competition::run_replication;
use guardrail_core::contamination::{
    covariate_guardrail_condition, covariate_mse_compare, ols_fit, response_guardrail_condition,
    response_plim, simulate_response_contaminated, CovariateContamination, CovariateDist,
    ErrorDist, TrainingContamination,
};
use guardrail_core::framework::{
    benefit, condition_report, BoundGen, ConditionKind, EvalMethod, GuardrailSpec,
    JointDecisionModel, LossSpec, ScalarDist,
};
use guardrail_core::misspec::run_replication_misspec;
use guardrail_core::{Error as CoreError, RngStream};

use crate::config::{
    ConfigError, ConfigResult, ContaminationCovariateParams, ContaminationResponseParams,
    FrameworkParams, ScenarioConfig, TypedParams,
};

/// Bump when any scenario's column set changes.
pub const SCHEMA_VERSIONS: [(&str, &str); 5] = [
    ("framework", "framework-v1"),
    ("competition", "competition-v1"),
    ("misspec", "misspec-v1"),
    ("contamination-response", "contamination-response-v1"),
    ("contamination-covariate", "contamination-covariate-v1"),
];

pub fn schema_version(scenario: &str) -> &'static str {
    SCHEMA_VERSIONS
        .iter()
        .find(|(s, _)| *s == scenario)
        .map(|(_, v)| *v)
        .unwrap_or("unknown")
}

/// In-memory result of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub csv: String,
    pub rows: u64,
    pub summary: Vec<String>,
    pub schema_version: String,
}

/// Manifest written alongside every CSV.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub tool_version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub rows: u64,
    pub summary: Vec<String>,
    pub config: ScenarioConfig,
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        // Shortest round-trip representation, '.' separator.
        format!("{v}")
    }
}

fn fmt_bool(v: bool) -> String {
    if v { "true".into() } else { "false".into() }
}

/// Execute a validated config on the current thread pool.
pub fn execute(config: &ScenarioConfig) -> ConfigResult<RunOutput> {
    config.validate_all_points()?;
    let points = config.sweep_points();
    let root = RngStream::new(config.seed);

    let mut header: &'static str = "";
    let mut all_rows: Vec<String> = Vec::new();
    let mut summary: Vec<String> = Vec::new();

    for (sweep_idx, (assignments, table)) in points.iter().enumerate() {
        let typed = TypedParams::from_table(&config.scenario, table)?;
        let sweep_stream = root.child(sweep_idx as u64);
        let label = if assignments.is_empty() {
            "base".to_string()
        } else {
            assignments
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let (h, rows, lines) = run_sweep_point(&typed, config.replications, sweep_idx as u64, &sweep_stream)
            .map_err(|e| ConfigError(format!("sweep point {sweep_idx} ({label}): {e}")))?;
        header = h;
        for line in lines {
            summary.push(format!("[{label}] {line}"));
        }
        all_rows.extend(rows);
    }

    let mut csv = String::with_capacity(all_rows.len() * 64 + header.len() + 1);
    csv.push_str(header);
    csv.push('\n');
    for row in &all_rows {
        csv.push_str(row);
        csv.push('\n');
    }
    Ok(RunOutput {
        csv,
        rows: all_rows.len() as u64,
        summary,
        schema_version: schema_version(&config.scenario).to_string(),
    })
}

/// Execute and write `results.csv` + `manifest.toml` under `out_dir`.
pub fn run_to_files(config: &ScenarioConfig, out_dir: &Path) -> ConfigResult<(PathBuf, PathBuf)> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let output = execute(config)?;
    let finished = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);

    std::fs::create_dir_all(out_dir)
        .map_err(|e| ConfigError(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("results.csv");
    let manifest_path = out_dir.join("manifest.toml");
    std::fs::write(&csv_path, output.csv.as_bytes())
        .map_err(|e| ConfigError(format!("cannot write {}: {e}", csv_path.display())))?;

    let manifest = RunManifest {
        schema_version: output.schema_version.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        started_unix: started,
        finished_unix: finished,
        rows: output.rows,
        summary: output.summary.clone(),
        config: config.clone(),
    };
    let manifest_text =
        toml::to_string(&manifest).map_err(|e| ConfigError(format!("manifest serialization: {e}")))?;
    std::fs::write(&manifest_path, manifest_text.as_bytes())
        .map_err(|e| ConfigError(format!("cannot write {}: {e}", manifest_path.display())))?;
    Ok((csv_path, manifest_path))
}

type SweepResult = Result<(&'static str, Vec<String>, Vec<String>), CoreError>;

fn run_sweep_point(typed: &TypedParams, replications: u64, sweep_idx: u64, stream: &RngStream) -> SweepResult {
    match typed {
        TypedParams::Competition(p) => {
            let header = "sweep_index,replication,n,alpha_hat,beta_hat,p_a,p_prime,p_matched,revenue_matched,revenue_algorithmic,degenerate";
            let outcomes: Vec<_> = (0..replications)
                .into_par_iter()
                .map(|rep| run_replication(&p.duopoly, &p.history, p.n, p.competitor_price, &stream.child(rep)))
                .collect::<Result<_, _>>()?;
            let rows = outcomes
                .iter()
                .enumerate()
                .map(|(rep, o)| {
                    format!(
                        "{sweep_idx},{rep},{},{},{},{},{},{},{},{},{}",
                        o.n,
                        fmt_f64(o.alpha_hat),
                        fmt_f64(o.beta_hat),
                        fmt_f64(o.p_a),
                        fmt_f64(o.p_prime),
                        fmt_f64(o.p_matched),
                        fmt_f64(o.revenue_matched),
                        fmt_f64(o.revenue_algorithmic),
                        fmt_bool(o.degenerate)
                    )
                })
                .collect();
            let valid: Vec<&_> = outcomes.iter().filter(|o| !o.degenerate).collect();
            let degenerate = outcomes.len() - valid.len();
            let mean_pa = valid.iter().map(|o| o.p_a).sum::<f64>() / valid.len().max(1) as f64;
            let matched_wins =
                valid.iter().filter(|o| o.revenue_matched > o.revenue_algorithmic).count();
            let summary = vec![format!(
                "n={} replications={} mean_p_a={:.6} degenerate={} matched_improves={}/{}",
                p.n,
                replications,
                mean_pa,
                degenerate,
                matched_wins,
                valid.len()
            )];
            Ok((header, rows, summary))
        }
        TypedParams::Misspec(p) => {
            let header = "sweep_index,replication,k,n,alpha_hat,beta_hat,p_a,j_star,interval_lo,interval_hi,p_safeguarded,profit_algorithmic,profit_safeguarded,profit_optimal,optimal_in_interval,algorithmic_in_interval,degenerate";
            let oracle = p.oracle().map_err(|e| CoreError::Configuration(e.0))?;
            let outcomes: Vec<_> = (0..replications)
                .into_par_iter()
                .map(|rep| run_replication_misspec(&oracle, &p.experiment, &stream.child(rep)))
                .collect::<Result<_, _>>()?;
            let rows = outcomes
                .iter()
                .enumerate()
                .map(|(rep, o)| {
                    format!(
                        "{sweep_idx},{rep},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        o.k,
                        o.n,
                        fmt_f64(o.alpha_hat),
                        fmt_f64(o.beta_hat),
                        fmt_f64(o.p_a),
                        o.j_star,
                        fmt_f64(o.interval.0),
                        fmt_f64(o.interval.1),
                        fmt_f64(o.p_safeguarded),
                        fmt_f64(o.profit_algorithmic),
                        fmt_f64(o.profit_safeguarded),
                        fmt_f64(o.profit_optimal),
                        fmt_bool(o.optimal_in_interval),
                        fmt_bool(o.algorithmic_in_interval),
                        fmt_bool(o.degenerate)
                    )
                })
                .collect();
            let valid: Vec<&_> = outcomes.iter().filter(|o| !o.degenerate).collect();
            let contained = valid.iter().filter(|o| o.optimal_in_interval).count();
            let improved =
                valid.iter().filter(|o| o.profit_safeguarded >= o.profit_algorithmic - 1e-12).count();
            let summary = vec![format!(
                "K={} n={} contained={}/{} guardrail_no_worse={}/{} degenerate={}",
                p.experiment.k,
                p.experiment.n,
                contained,
                valid.len(),
                improved,
                valid.len(),
                outcomes.len() - valid.len()
            )];
            Ok((header, rows, summary))
        }
        TypedParams::ContaminationResponse(p) => run_contamination_response(p, replications, sweep_idx, stream),
        TypedParams::ContaminationCovariate(p) => run_contamination_covariate(p, replications, sweep_idx, stream),
        TypedParams::Framework(p) => run_framework(p, replications, sweep_idx, stream),
    }
}

fn run_contamination_response(
    p: &ContaminationResponseParams,
    replications: u64,
    sweep_idx: u64,
    stream: &RngStream,
) -> SweepResult {
    let header = "sweep_index,replication,n,bias_plim,bias_empirical,one_sided_holds,two_sided_holds,sup_loss_algorithmic,sup_loss_safeguarded,degenerate";
    let plim = response_plim(&p.contamination)?;
    let one_sided = response_guardrail_condition(&p.model, &p.contamination, p.upper_bound, None)
        .map(|r| r.holds)
        .ok();
    let two_sided = if p.lower_bound.is_finite() || p.upper_bound.is_finite() {
        response_guardrail_condition(&p.model, &p.contamination, p.upper_bound, Some(p.lower_bound))
            .map(|r| r.holds)
            .ok()
    } else {
        None
    };
    let grid = p.model.domain.evaluation_grid(&p.model.beta, p.grid_points as usize, &stream.child(u64::MAX))?;

    struct Row {
        bias_empirical: f64,
        sup_algo: f64,
        sup_safe: f64,
        degenerate: bool,
    }
    let outcomes: Vec<Row> = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<Row, CoreError> {
            let data =
                simulate_response_contaminated(&p.model, &p.contamination, p.n, &stream.child(rep))?;
            match ols_fit(&data) {
                Ok(fit) => {
                    let mut bias_sum = 0.0;
                    let mut sup_algo: f64 = 0.0;
                    let mut sup_safe: f64 = 0.0;
                    for w in &grid {
                        let target: f64 = w.iter().zip(&p.model.beta).map(|(a, b)| a * b).sum();
                        let x_a = fit.predict(w);
                        let x_hat = x_a.clamp(p.lower_bound, p.upper_bound);
                        bias_sum += x_a - target;
                        sup_algo = sup_algo.max((x_a - target) * (x_a - target));
                        sup_safe = sup_safe.max((x_hat - target) * (x_hat - target));
                    }
                    Ok(Row {
                        bias_empirical: bias_sum / grid.len() as f64,
                        sup_algo,
                        sup_safe,
                        degenerate: false,
                    })
                }
                Err(CoreError::DegenerateDesign(_)) => {
                    Ok(Row { bias_empirical: f64::NAN, sup_algo: f64::NAN, sup_safe: f64::NAN, degenerate: true })
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_, _>>()?;

    let fmt_opt = |v: Option<bool>| v.map(fmt_bool).unwrap_or_default();
    let rows = outcomes
        .iter()
        .enumerate()
        .map(|(rep, o)| {
            format!(
                "{sweep_idx},{rep},{},{},{},{},{},{},{},{}",
                p.n,
                fmt_f64(plim.bias),
                fmt_f64(o.bias_empirical),
                fmt_opt(one_sided),
                fmt_opt(two_sided),
                fmt_f64(o.sup_algo),
                fmt_f64(o.sup_safe),
                fmt_bool(o.degenerate)
            )
        })
        .collect();
    let valid: Vec<&Row> = outcomes.iter().filter(|o| !o.degenerate).collect();
    let mean_bias = valid.iter().map(|o| o.bias_empirical).sum::<f64>() / valid.len().max(1) as f64;
    let no_worse = valid.iter().filter(|o| o.sup_safe <= o.sup_algo + 1e-12).count();
    let summary = vec![format!(
        "n={} bias_plim={} mean_empirical_bias={:.6} guardrail_no_worse={}/{} one_sided_holds={:?}",
        p.n, plim.bias, mean_bias, no_worse, valid.len(), one_sided
    )];
    Ok((header, rows, summary))
}

fn run_contamination_covariate(
    p: &ContaminationCovariateParams,
    replications: u64,
    sweep_idx: u64,
    stream: &RngStream,
) -> SweepResult {
    let header = "sweep_index,replication,condition_holds,hypothesis_violated,threshold_lower,threshold_upper,loss_algorithmic,loss_algorithmic_hw,loss_safeguarded,loss_safeguarded_hw,improvement,improvement_hw";
    let z = CovariateDist::uniform_box(p.z_lower.clone(), p.z_upper.clone())?;
    let u = ErrorDist::symmetric_three_point(p.direction.clone(), p.tail_prob)?;
    let cont = CovariateContamination::new(z, u)?.with_training(TrainingContamination::None)?;

    struct Row {
        holds: Option<bool>,
        violated: bool,
        thresholds: (f64, f64),
        algo: (f64, f64),
        safe: (f64, f64),
        improvement: (f64, f64),
    }
    let outcomes: Vec<Row> = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<Row, CoreError> {
            let rep_stream = stream.child(rep);
            let condition = covariate_guardrail_condition(
                &cont,
                &p.beta,
                (p.lower_bound, p.upper_bound),
                p.b,
                p.p,
                &rep_stream.child(0),
            );
            let (holds, violated, thresholds) = match condition {
                Ok(r) => (Some(r.holds), false, (r.threshold_lower, r.threshold_upper)),
                Err(CoreError::HypothesisViolated(_)) => (None, true, (f64::NAN, f64::NAN)),
                Err(e) => return Err(e),
            };
            let cmp = covariate_mse_compare(
                &cont,
                &p.beta,
                (p.lower_bound, p.upper_bound),
                p.n_draws,
                &rep_stream.child(1),
                p.confidence,
            )?;
            Ok(Row {
                holds,
                violated,
                thresholds,
                algo: (cmp.loss_algorithmic.mean, cmp.loss_algorithmic.half_width),
                safe: (cmp.loss_safeguarded.mean, cmp.loss_safeguarded.half_width),
                improvement: (cmp.improvement.mean, cmp.improvement.half_width),
            })
        })
        .collect::<Result<_, _>>()?;

    let rows = outcomes
        .iter()
        .enumerate()
        .map(|(rep, o)| {
            format!(
                "{sweep_idx},{rep},{},{},{},{},{},{},{},{},{},{}",
                o.holds.map(fmt_bool).unwrap_or_default(),
                fmt_bool(o.violated),
                fmt_f64(o.thresholds.0),
                fmt_f64(o.thresholds.1),
                fmt_f64(o.algo.0),
                fmt_f64(o.algo.1),
                fmt_f64(o.safe.0),
                fmt_f64(o.safe.1),
                fmt_f64(o.improvement.0),
                fmt_f64(o.improvement.1)
            )
        })
        .collect();
    let improved = outcomes.iter().filter(|o| o.improvement.0 >= -o.improvement.1).count();
    let summary = vec![format!(
        "replications={} condition_holds={:?} improvement_nonnegative={}/{}",
        replications,
        outcomes.first().and_then(|o| o.holds),
        improved,
        outcomes.len()
    )];
    Ok((header, rows, summary))
}

fn framework_model(p: &FrameworkParams) -> Result<JointDecisionModel, CoreError> {
    let x_a = ScalarDist::normal(p.xa_mean, p.xa_sd);
    let side = |value: Option<f64>, sd: Option<f64>| -> Result<BoundGen, CoreError> {
        match (value, sd) {
            (None, None) => Ok(BoundGen::Absent),
            (Some(v), None) => Ok(BoundGen::Constant(v)),
            (Some(mu), Some(sd)) => Ok(BoundGen::Random(ScalarDist::normal(mu, sd))),
            (None, Some(_)) => Err(CoreError::Configuration(
                "a bound spread was given without its center".into(),
            )),
        }
    };
    let guardrail = GuardrailSpec::two_sided(side(p.lower, p.lower_sd)?, side(p.upper, p.upper_sd)?);
    if matches!(guardrail.lower, BoundGen::Random(_)) && !matches!(guardrail.upper, BoundGen::Absent)
        || matches!(guardrail.upper, BoundGen::Random(_)) && !matches!(guardrail.lower, BoundGen::Absent)
    {
        return Err(CoreError::Configuration(
            "random bounds are supported one-sided only; two-sided bounds must be constants".into(),
        ));
    }
    JointDecisionModel::with_guardrail(x_a, guardrail)
}

fn run_framework(p: &FrameworkParams, replications: u64, sweep_idx: u64, stream: &RngStream) -> SweepResult {
    let header = "sweep_index,replication,kind,lhs,lhs_half_width,rhs,rhs_half_width,verdict";
    let model = framework_model(p)?;
    let loss = LossSpec::quadratic(p.xstar);
    let has_upper = p.upper.is_some();
    let has_lower = p.lower.is_some();
    let kinds: Vec<ConditionKind> = match (has_upper, has_lower) {
        (true, false) => vec![
            ConditionKind::SufficientOneSidedUpper,
            ConditionKind::NecessaryOneSidedUpper,
            ConditionKind::IndependentReducedSufficient,
            ConditionKind::IndependentReducedNecessary,
        ],
        (false, true) => vec![ConditionKind::SufficientOneSidedLower, ConditionKind::NecessaryOneSidedLower],
        _ => vec![ConditionKind::SufficientTwoSided, ConditionKind::NecessaryTwoSided],
    };

    let per_rep: Vec<Vec<String>> = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<String>, CoreError> {
            let rep_stream = stream.child(rep);
            let method =
                EvalMethod::MonteCarlo { n: p.n_draws, stream: &rep_stream, confidence: p.confidence };
            let mut rows = Vec::with_capacity(kinds.len() + 2);
            let b = benefit(&model, &loss, &method)?;
            rows.push(format!(
                "{sweep_idx},{rep},benefit-direct,{},{},,,",
                fmt_f64(b.direct.mean),
                fmt_f64(b.direct.half_width)
            ));
            rows.push(format!(
                "{sweep_idx},{rep},benefit-identity-form,{},{},,,",
                fmt_f64(b.identity_form.mean),
                fmt_f64(b.identity_form.half_width)
            ));
            for &kind in &kinds {
                let report = condition_report(&model, &loss, kind, &method)?;
                rows.push(format!(
                    "{sweep_idx},{rep},{kind},{},{},{},{},{}",
                    fmt_f64(report.lhs.mean),
                    fmt_f64(report.lhs.half_width),
                    fmt_f64(report.rhs.mean),
                    fmt_f64(report.rhs.half_width),
                    report.verdict
                ))
            }
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;

    let rows: Vec<String> = per_rep.into_iter().flatten().collect();
    let summary = vec![format!("replications={} kinds={} draws_per_estimate={}", replications, kinds.len(), p.n_draws)];
    Ok((header, rows, summary))
}
