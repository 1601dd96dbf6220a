//! Grid price experiments on a nonlinear demand, a misspecified linear OLS
//! pricer, and the empirical-best-interval guardrail.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::framework::benefit::clip;
use crate::rng::RngStream;

/// Closed-form demand families plus a custom escape hatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DemandFamily {
    /// f(p) = b * p^(-a), a > 1.
    Isoelastic { a: f64, b: f64 },
    /// f(p) = b * exp(-a p), a > 0.
    Exponential { a: f64, b: f64 },
    Custom,
}

/// Nonincreasing true demand with (for the closed-form families) a known
/// optimal price.
#[derive(Clone)]
pub struct DemandOracle {
    pub family: DemandFamily,
    evaluate: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl DemandOracle {
    pub fn isoelastic(a: f64, b: f64) -> Result<Self> {
        if !(a > 1.0 && b > 0.0) {
            return Err(Error::InvalidArgument(format!("isoelastic needs a > 1, b > 0, got a={a} b={b}")));
        }
        Ok(Self { family: DemandFamily::Isoelastic { a, b }, evaluate: Arc::new(move |p| b * p.powf(-a)) })
    }

    pub fn exponential(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument(format!("exponential needs a > 0, b > 0, got a={a} b={b}")));
        }
        Ok(Self { family: DemandFamily::Exponential { a, b }, evaluate: Arc::new(move |p| b * (-a * p).exp()) })
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { family: DemandFamily::Custom, evaluate: Arc::new(f) }
    }

    pub fn demand(&self, p: f64) -> f64 {
        (self.evaluate)(p)
    }

    pub fn profit(&self, p: f64, c: f64) -> f64 {
        (p - c) * self.demand(p)
    }

    /// True optimal price: closed form for the named families, a fine-grid
    /// argmax over [c, p_bar] otherwise.
    pub fn optimal_price(&self, c: f64, p_bar: f64) -> f64 {
        match self.family {
            DemandFamily::Isoelastic { a, .. } => a * c / (a - 1.0),
            DemandFamily::Exponential { a, .. } => 1.0 / a + c,
            DemandFamily::Custom => {
                let points = 100_000;
                let mut best = (c, f64::NEG_INFINITY);
                for i in 0..=points {
                    let p = c + (p_bar - c) * f64::from(i) / f64::from(points);
                    let v = self.profit(p, c);
                    if v > best.1 {
                        best = (p, v);
                    }
                }
                best.0
            }
        }
    }

    /// Sampled monotonicity check on [c, p_bar].
    pub fn validate_nonincreasing(&self, c: f64, p_bar: f64, points: u32) -> Result<()> {
        let mut prev = self.demand(c);
        for i in 1..=points {
            let p = c + (p_bar - c) * f64::from(i) / f64::from(points);
            let now = self.demand(p);
            if now > prev + 1e-12 * (1.0 + prev.abs()) {
                return Err(Error::Configuration(format!("demand increases at p = {p}")));
            }
            prev = now;
        }
        Ok(())
    }
}

impl std::fmt::Debug for DemandOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DemandOracle").field("family", &self.family).finish()
    }
}

/// Uniform price grid p_j = c + j (p_bar - c)/n, j = 0..n, with K noisy
/// observations per grid price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridExperiment {
    pub c: f64,
    pub p_bar: f64,
    pub n: u32,
    pub k: u32,
    pub noise_sd: f64,
}

impl GridExperiment {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0) {
            return Err(Error::InvalidArgument(format!("unit cost must be >= 0, got {}", self.c)));
        }
        if !(self.p_bar > self.c) {
            return Err(Error::InvalidArgument(format!(
                "nominal price {} must exceed unit cost {}",
                self.p_bar, self.c
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 grid intervals, got {}", self.n)));
        }
        if self.k < 1 {
            return Err(Error::InvalidArgument("need at least one observation per price".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }

    /// j-th grid price; the endpoints are returned exactly.
    pub fn grid_point(&self, j: u32) -> f64 {
        if j == 0 {
            self.c
        } else if j == self.n {
            self.p_bar
        } else {
            self.c + (self.p_bar - self.c) * f64::from(j) / f64::from(self.n)
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.n).map(|j| self.grid_point(j)).collect()
    }

    /// Guardrail interval around grid index `j_star`, clamped at the ends.
    pub fn interval_around(&self, j_star: u32) -> (f64, f64) {
        let lo = self.grid_point(j_star.saturating_sub(1));
        let hi = self.grid_point((j_star + 1).min(self.n));
        (lo, hi)
    }
}

/// Observations matrix, row-major (n+1) rows by K columns.
#[derive(Debug, Clone)]
pub struct GridObservations {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl GridObservations {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.cols..(j + 1) * self.cols]
    }

    pub fn row_mean(&self, j: usize) -> f64 {
        self.row(j).iter().sum::<f64>() / self.cols as f64
    }
}

/// Collect K noisy demand observations at each grid price.
pub fn run_grid_experiment(
    oracle: &DemandOracle,
    exp: &GridExperiment,
    stream: &RngStream,
) -> Result<GridObservations> {
    exp.validate()?;
    let rows = exp.n as usize + 1;
    let cols = exp.k as usize;
    let mut rng = stream.rng();
    let mut values = Vec::with_capacity(rows * cols);
    for j in 0..rows {
        let f_pj = oracle.demand(exp.grid_point(j as u32));
        for _ in 0..cols {
            let eps: f64 = if exp.noise_sd > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                exp.noise_sd * z
            } else {
                0.0
            };
            values.push(f_pj + eps);
        }
    }
    Ok(GridObservations { values, rows, cols })
}

/// OLS fit of demand = alpha - beta * price over all (n+1)K observations.
/// Grouped by grid price, this is a weighted fit through the row means.
pub fn ols_linear_fit(obs: &GridObservations, exp: &GridExperiment) -> Result<(f64, f64)> {
    exp.validate()?;
    if obs.rows != exp.n as usize + 1 {
        return Err(Error::InvalidArgument("observation shape does not match the grid".into()));
    }
    let rows = obs.rows as f64;
    let grid = exp.grid();
    let p_mean = grid.iter().sum::<f64>() / rows;
    let y_mean = (0..obs.rows).map(|j| obs.row_mean(j)).sum::<f64>() / rows;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for j in 0..obs.rows {
        let dp = grid[j] - p_mean;
        sxx += dp * dp;
        sxy += dp * (obs.row_mean(j) - y_mean);
    }
    if sxx <= 0.0 {
        return Err(Error::DegenerateDesign("grid has no price variation".into()));
    }
    let beta_hat = -sxy / sxx;
    let alpha_hat = y_mean + beta_hat * p_mean;
    Ok((alpha_hat, beta_hat))
}

/// Profit-maximizing price for the fitted linear demand with unit cost c.
pub fn algorithmic_price_misspec(alpha_hat: f64, beta_hat: f64, c: f64) -> Result<f64> {
    if !(beta_hat > 0.0) {
        return Err(Error::NonpositiveSlope { beta_hat });
    }
    Ok(alpha_hat / (2.0 * beta_hat) + c / 2.0)
}

/// Deterministic K -> infinity algorithmic price from the grid moments
/// c1 = mean f(p_j), c2 = mean p_j f(p_j).
pub fn limit_algorithmic_price(oracle: &DemandOracle, exp: &GridExperiment) -> Result<f64> {
    exp.validate()?;
    let grid = exp.grid();
    let m = grid.len() as f64;
    let mut c1 = 0.0;
    let mut c2 = 0.0;
    for &p in &grid {
        let f = oracle.demand(p);
        c1 += f;
        c2 += p * f;
    }
    c1 /= m;
    c2 /= m;
    let (c, p_bar, n) = (exp.c, exp.p_bar, f64::from(exp.n));
    let denominator = (p_bar + c) * c1 - 2.0 * c2;
    if denominator.abs() < 1e-12 * (1.0 + c1.abs() + c2.abs()) {
        return Err(Error::DegenerateDesign("limit fit slope vanishes".into()));
    }
    let numerator = c * p_bar * c1 + (2.0 * n + 1.0) / (6.0 * n) * (p_bar - c).powi(2) * c1
        - (p_bar + c) / 2.0 * c2;
    Ok(numerator / denominator + c / 2.0)
}

/// Grid index with the highest empirical profit; ties break low.
pub fn human_best_index(obs: &GridObservations, exp: &GridExperiment) -> u32 {
    let mut best = (0u32, f64::NEG_INFINITY);
    for j in 0..obs.rows {
        let profit = (exp.grid_point(j as u32) - exp.c) * obs.row_mean(j);
        if profit > best.1 {
            best = (j as u32, profit);
        }
    }
    best.0
}

/// Clip the algorithmic price into the grid interval around j_star.
pub fn safeguarded_price_misspec(p_a: f64, j_star: u32, exp: &GridExperiment) -> Result<f64> {
    if j_star > exp.n {
        return Err(Error::InvalidArgument(format!("j_star {} beyond grid end {}", j_star, exp.n)));
    }
    let (lo, hi) = exp.interval_around(j_star);
    clip(p_a, lo, hi)
}

/// Noiseless (K -> infinity) human index and guardrail interval.
pub fn noiseless_interval(oracle: &DemandOracle, exp: &GridExperiment) -> (u32, f64, f64) {
    let mut best = (0u32, f64::NEG_INFINITY);
    for j in 0..=exp.n {
        let p = exp.grid_point(j);
        let profit = (p - exp.c) * oracle.demand(p);
        if profit > best.1 {
            best = (j, profit);
        }
    }
    let (lo, hi) = exp.interval_around(best.0);
    (best.0, lo, hi)
}

/// Nominal-price threshold above which the limiting algorithmic price is
/// guaranteed outside the guardrail interval (strict improvement).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementCondition {
    pub threshold_p_bar: f64,
    pub strict_improvement: bool,
}

/// Threshold in cleared-fraction form so the reference integer cases are
/// exact in f64:
///   isoelastic:  (3n * a/(a-1) - 1.5n - 6) c / (n - 6)
///   exponential: (3n/a + (1.5n - 6) c) / (n - 6)
pub fn improvement_condition(oracle: &DemandOracle, exp: &GridExperiment) -> Result<ImprovementCondition> {
    exp.validate()?;
    if exp.n <= 6 {
        return Err(Error::ConditionInapplicable(format!(
            "threshold needs more than 6 grid intervals (1/3 - 2/n <= 0 at n = {})",
            exp.n
        )));
    }
    let n = f64::from(exp.n);
    let threshold = match oracle.family {
        DemandFamily::Isoelastic { a, .. } => {
            (3.0 * n * (a / (a - 1.0)) - 1.5 * n - 6.0) * exp.c / (n - 6.0)
        }
        DemandFamily::Exponential { a, .. } => (3.0 * n / a + (1.5 * n - 6.0) * exp.c) / (n - 6.0),
        DemandFamily::Custom => {
            return Err(Error::Configuration(
                "improvement threshold is defined for the isoelastic and exponential families".into(),
            ))
        }
    };
    Ok(ImprovementCondition { threshold_p_bar: threshold, strict_improvement: exp.p_bar > threshold })
}

/// Largest lambda with profit'' <= -lambda on [c, p_bar], estimated from
/// second differences on a fine grid. Negative when the profit has a convex
/// stretch.
pub fn estimate_strong_concavity(oracle: &DemandOracle, exp: &GridExperiment, points: u32) -> f64 {
    let h = (exp.p_bar - exp.c) / f64::from(points);
    let mut lambda = f64::INFINITY;
    for i in 1..points {
        let p = exp.c + h * f64::from(i);
        let second = (oracle.profit(p + h, exp.c) - 2.0 * oracle.profit(p, exp.c)
            + oracle.profit(p - h, exp.c))
            / (h * h);
        lambda = lambda.min(-second);
    }
    lambda
}

/// Tail bound on the human interval missing the true optimum:
/// 2 (n+1) exp(-K lambda^2 (p_bar - c)^4 / (32 sigma^2 p_bar^2 n^4)).
pub fn human_miss_bound(exp: &GridExperiment, lambda: f64) -> f64 {
    if exp.noise_sd == 0.0 {
        return 0.0;
    }
    let n = f64::from(exp.n);
    let expo = f64::from(exp.k) * lambda * lambda * (exp.p_bar - exp.c).powi(4)
        / (32.0 * exp.noise_sd * exp.noise_sd * exp.p_bar * exp.p_bar * n.powi(4));
    2.0 * (n + 1.0) * (-expo).exp()
}

/// Concentration bound for the algorithmic price, built from the two
/// sub-Gaussian deviations of the grid moments. Only valid for deviations
/// up to `delta_cap`; reported qualitatively beyond it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AiDeviationBound {
    pub value: f64,
    pub delta_cap: f64,
}

pub fn ai_deviation_bound(oracle: &DemandOracle, exp: &GridExperiment, delta: f64) -> Result<AiDeviationBound> {
    exp.validate()?;
    if exp.noise_sd == 0.0 {
        return Ok(AiDeviationBound { value: 0.0, delta_cap: f64::INFINITY });
    }
    let grid = exp.grid();
    let m = grid.len() as f64;
    let c1 = grid.iter().map(|&p| oracle.demand(p)).sum::<f64>() / m;
    let c2 = grid.iter().map(|&p| p * oracle.demand(p)).sum::<f64>() / m;
    let n = f64::from(exp.n);
    let (c, p_bar) = (exp.c, exp.p_bar);
    let a_mom = c * p_bar + (2.0 * n + 1.0) / (6.0 * n) * (p_bar - c).powi(2);
    let b_mom = (p_bar + c) / 2.0;
    let slope = b_mom * c1 - c2;
    if !(slope > 0.0) {
        return Err(Error::DegenerateDesign("limit fit slope is nonpositive".into()));
    }
    let curvature = a_mom - b_mom * b_mom;
    let delta_cap = c1 * c2 * curvature / ((b_mom * c1 + c2) * slope);
    let delta1 = 3.0 * slope * slope / (c2 * (0.5 + 1.0 / n) * (p_bar - c).powi(2)) * delta;
    let delta2 = 6.0 * slope * slope / ((p_bar + c) * c1 * (0.5 + 1.0 / n) * (p_bar - c).powi(2)) * delta;
    let kn = (n + 1.0) * f64::from(exp.k);
    let s2 = exp.noise_sd * exp.noise_sd;
    let value = 2.0 * (-delta1 * delta1 * kn / (2.0 * s2)).exp()
        + 2.0 * (-delta2 * delta2 * kn / (4.0 * s2)).exp();
    Ok(AiDeviationBound { value, delta_cap })
}

/// Empirical frequency of the human interval missing the true optimum.
pub fn human_miss_frequency(
    oracle: &DemandOracle,
    exp: &GridExperiment,
    replications: u64,
    stream: &RngStream,
) -> Result<f64> {
    exp.validate()?;
    let p_star = oracle.optimal_price(exp.c, exp.p_bar);
    let misses: Vec<Result<bool>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let obs = run_grid_experiment(oracle, exp, &stream.child(rep))?;
            let j_star = human_best_index(&obs, exp);
            let (lo, hi) = exp.interval_around(j_star);
            Ok(!(lo <= p_star && p_star <= hi))
        })
        .collect();
    let mut count = 0u64;
    for m in misses {
        if m? {
            count += 1;
        }
    }
    Ok(count as f64 / replications as f64)
}

/// Finite-sample frequencies and bounds for one experiment configuration.
#[derive(Debug, Clone, Copy)]
pub struct FiniteSampleReport {
    pub freq_ai_deviation: f64,
    pub freq_human_miss: f64,
    pub bound_ai: f64,
    pub ai_delta_cap: f64,
    pub bound_human: f64,
    pub lambda: f64,
}

/// Runs `replications` experiments and reports deviation frequencies next
/// to their theoretical bounds. The strong-concavity parameter is estimated
/// when not supplied; a nonpositive estimate is a hypothesis violation.
pub fn finite_sample_check(
    oracle: &DemandOracle,
    exp: &GridExperiment,
    delta: f64,
    lambda: Option<f64>,
    replications: u64,
    stream: &RngStream,
) -> Result<FiniteSampleReport> {
    exp.validate()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let lambda = match lambda {
        Some(l) => l,
        None => estimate_strong_concavity(oracle, exp, 1000),
    };
    if !(lambda > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "profit is not strongly concave on [{}, {}]: lambda estimate {lambda}",
            exp.c, exp.p_bar
        )));
    }

    let p_a_star = limit_algorithmic_price(oracle, exp)?;
    let p_star = oracle.optimal_price(exp.c, exp.p_bar);
    let outcomes: Vec<Result<(bool, bool)>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let obs = run_grid_experiment(oracle, exp, &stream.child(rep))?;
            let (alpha_hat, beta_hat) = ols_linear_fit(&obs, exp)?;
            let ai_deviates = match algorithmic_price_misspec(alpha_hat, beta_hat, exp.c) {
                Ok(p_a) => (p_a - p_a_star).abs() >= delta,
                Err(Error::NonpositiveSlope { .. }) => true,
                Err(e) => return Err(e),
            };
            let j_star = human_best_index(&obs, exp);
            let (lo, hi) = exp.interval_around(j_star);
            Ok((ai_deviates, !(lo <= p_star && p_star <= hi)))
        })
        .collect();

    let mut ai = 0u64;
    let mut human = 0u64;
    for o in outcomes {
        let (a, h) = o?;
        ai += u64::from(a);
        human += u64::from(h);
    }
    let bound = ai_deviation_bound(oracle, exp, delta)?;
    Ok(FiniteSampleReport {
        freq_ai_deviation: ai as f64 / replications as f64,
        freq_human_miss: human as f64 / replications as f64,
        bound_ai: bound.value,
        ai_delta_cap: bound.delta_cap,
        bound_human: human_miss_bound(exp, lambda),
        lambda,
    })
}

/// Per-replication row for the runner.
#[derive(Debug, Clone, Copy)]
pub struct MisspecOutcome {
    pub k: u32,
    pub n: u32,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub p_a: f64,
    pub j_star: u32,
    pub interval: (f64, f64),
    pub p_safeguarded: f64,
    pub profit_algorithmic: f64,
    pub profit_safeguarded: f64,
    pub profit_optimal: f64,
    pub optimal_in_interval: bool,
    pub algorithmic_in_interval: bool,
    pub degenerate: bool,
}

/// One full replication: experiment, fit, price, guardrail, true profits.
pub fn run_replication_misspec(
    oracle: &DemandOracle,
    exp: &GridExperiment,
    stream: &RngStream,
) -> Result<MisspecOutcome> {
    let obs = run_grid_experiment(oracle, exp, stream)?;
    let (alpha_hat, beta_hat) = ols_linear_fit(&obs, exp)?;
    let j_star = human_best_index(&obs, exp);
    let interval = exp.interval_around(j_star);
    let p_star = oracle.optimal_price(exp.c, exp.p_bar);
    let profit_optimal = oracle.profit(p_star, exp.c);
    match algorithmic_price_misspec(alpha_hat, beta_hat, exp.c) {
        Ok(p_a) => {
            let p_safeguarded = safeguarded_price_misspec(p_a, j_star, exp)?;
            Ok(MisspecOutcome {
                k: exp.k,
                n: exp.n,
                alpha_hat,
                beta_hat,
                p_a,
                j_star,
                interval,
                p_safeguarded,
                profit_algorithmic: oracle.profit(p_a, exp.c),
                profit_safeguarded: oracle.profit(p_safeguarded, exp.c),
                profit_optimal,
                optimal_in_interval: interval.0 <= p_star && p_star <= interval.1,
                algorithmic_in_interval: interval.0 <= p_a && p_a <= interval.1,
                degenerate: false,
            })
        }
        Err(Error::NonpositiveSlope { .. }) => Ok(MisspecOutcome {
            k: exp.k,
            n: exp.n,
            alpha_hat,
            beta_hat,
            p_a: f64::NAN,
            j_star,
            interval,
            p_safeguarded: f64::NAN,
            profit_algorithmic: f64::NAN,
            profit_safeguarded: f64::NAN,
            profit_optimal,
            optimal_in_interval: interval.0 <= p_star && p_star <= interval.1,
            algorithmic_in_interval: false,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_family() -> (DemandOracle, GridExperiment) {
        let oracle = DemandOracle::exponential(1.0 / 3.0, 10.0).unwrap();
        let exp = GridExperiment { c: 1.0, p_bar: 10.0, n: 10, k: 3, noise_sd: 0.5 };
        (oracle, exp)
    }

    #[test]
    fn grid_endpoints_are_exact_and_spacing_uniform() {
        let exp = GridExperiment { c: 0.1, p_bar: 10.0, n: 7, k: 1, noise_sd: 0.0 };
        let grid = exp.grid();
        assert_eq!(grid[0], 0.1);
        assert_eq!(grid[7], 10.0);
        let h = (10.0 - 0.1) / 7.0;
        for w in grid.windows(2) {
            assert!((w[1] - w[0] - h).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_rows_are_constant() {
        let (oracle, _) = figure_family();
        let exp = GridExperiment { noise_sd: 0.0, k: 5, ..figure_family().1 };
        let obs = run_grid_experiment(&oracle, &exp, &RngStream::new(51)).unwrap();
        for j in 0..obs.rows {
            let expected = oracle.demand(exp.grid_point(j as u32));
            for &v in obs.row(j) {
                assert_eq!(v, expected);
            }
        }
    }

    #[test]
    fn row_means_converge_to_demand() {
        let (oracle, mut exp) = figure_family();
        exp.k = 100_000;
        let obs = run_grid_experiment(&oracle, &exp, &RngStream::new(52)).unwrap();
        for j in 0..obs.rows {
            let expected = oracle.demand(exp.grid_point(j as u32));
            assert!((obs.row_mean(j) - expected).abs() < 0.01, "row {j}");
        }
    }

    #[test]
    fn figure_setting_runs_and_means_decrease() {
        let (oracle, exp) = figure_family();
        let obs = run_grid_experiment(&oracle, &exp, &RngStream::new(53)).unwrap();
        assert_eq!(obs.rows, 11);
        assert_eq!(obs.cols, 3);
        let noiseless = GridExperiment { noise_sd: 0.0, ..exp };
        let clean = run_grid_experiment(&oracle, &noiseless, &RngStream::new(53)).unwrap();
        for j in 1..clean.rows {
            assert!(clean.row_mean(j) < clean.row_mean(j - 1));
        }
    }

    #[test]
    fn exactly_linear_data_recovers_coefficients() {
        let oracle = DemandOracle::custom(|p| 8.0 - 0.5 * p);
        let exp = GridExperiment { c: 1.0, p_bar: 9.0, n: 8, k: 2, noise_sd: 0.0 };
        let obs = run_grid_experiment(&oracle, &exp, &RngStream::new(54)).unwrap();
        let (a, b) = ols_linear_fit(&obs, &exp).unwrap();
        assert!((a - 8.0).abs() < 1e-12);
        assert!((b - 0.5).abs() < 1e-12);
        // And the pricer lands on the exact optimum of the linear model.
        let p_a = algorithmic_price_misspec(a, b, exp.c).unwrap();
        assert!((p_a - (8.0 / 0.5 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn large_k_fit_matches_the_noiseless_fit() {
        let (oracle, mut exp) = figure_family();
        exp.k = 20_000;
        let obs = run_grid_experiment(&oracle, &exp, &RngStream::new(55)).unwrap();
        let (a, b) = ols_linear_fit(&obs, &exp).unwrap();
        let noiseless = GridExperiment { noise_sd: 0.0, k: 1, ..exp };
        let clean = run_grid_experiment(&oracle, &noiseless, &RngStream::new(55)).unwrap();
        let (a0, b0) = ols_linear_fit(&clean, &noiseless).unwrap();
        assert!((a - a0).abs() < 0.02, "{a} vs {a0}");
        assert!((b - b0).abs() < 0.01, "{b} vs {b0}");
    }

    #[test]
    fn direct_price_formula() {
        assert_eq!(algorithmic_price_misspec(6.0, 1.0, 0.0).unwrap(), 3.0);
        assert!(matches!(
            algorithmic_price_misspec(6.0, -1.0, 0.0),
            Err(Error::NonpositiveSlope { .. })
        ));
    }

    #[test]
    fn limit_price_is_exact_for_linear_demand() {
        let oracle = DemandOracle::custom(|p| 12.0 - 1.5 * p);
        let exp = GridExperiment { c: 1.0, p_bar: 7.0, n: 12, k: 1, noise_sd: 0.0 };
        let p = limit_algorithmic_price(&oracle, &exp).unwrap();
        assert!((p - (12.0 / 1.5 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn limit_price_agrees_with_the_noiseless_pipeline() {
        let (oracle, exp) = figure_family();
        let formula = limit_algorithmic_price(&oracle, &exp).unwrap();
        let noiseless = GridExperiment { noise_sd: 0.0, k: 1, ..exp };
        let obs = run_grid_experiment(&oracle, &noiseless, &RngStream::new(56)).unwrap();
        let (a, b) = ols_linear_fit(&obs, &noiseless).unwrap();
        let pipeline = algorithmic_price_misspec(a, b, exp.c).unwrap();
        assert!((formula - pipeline).abs() < 1e-10, "{formula} vs {pipeline}");
    }

    #[test]
    fn human_index_ignores_the_zero_margin_point_and_brackets_p_star() {
        let (oracle, exp) = figure_family();
        let noiseless = GridExperiment { noise_sd: 0.0, ..exp };
        let obs = run_grid_experiment(&oracle, &noiseless, &RngStream::new(57)).unwrap();
        let j = human_best_index(&obs, &noiseless);
        assert_eq!(j, 3); // grid {1, 1.9, ..., 10}: argmax profit at p = 3.7
        let (lo, hi) = noiseless.interval_around(j);
        let p_star = oracle.optimal_price(exp.c, exp.p_bar);
        assert_eq!(p_star, 4.0);
        assert!(lo <= p_star && p_star <= hi);
    }

    #[test]
    fn zero_margin_grid_point_loses_to_any_positive_profit() {
        // p_0 = c earns zero profit; it is only selected when nothing earns
        // more (ties break toward the smallest index).
        let exp = GridExperiment { c: 1.0, p_bar: 5.0, n: 4, k: 1, noise_sd: 0.0 };
        let positive = run_grid_experiment(&DemandOracle::exponential(0.5, 5.0).unwrap(), &exp, &RngStream::new(96)).unwrap();
        assert_ne!(human_best_index(&positive, &exp), 0);
        let worthless = run_grid_experiment(&DemandOracle::custom(|_| 0.0), &exp, &RngStream::new(96)).unwrap();
        assert_eq!(human_best_index(&worthless, &exp), 0);
    }

    #[test]
    fn safeguard_clips_and_clamps_at_grid_ends() {
        let exp = GridExperiment { c: 1.0, p_bar: 10.0, n: 10, k: 1, noise_sd: 0.0 };
        // Inside: unchanged.
        assert_eq!(safeguarded_price_misspec(3.0, 3, &exp).unwrap(), 3.0);
        // Above: pulled to p_{j*+1}.
        let hi = exp.grid_point(4);
        assert_eq!(safeguarded_price_misspec(9.0, 3, &exp).unwrap(), hi);
        // Boundary indices clamp to the grid ends.
        assert_eq!(safeguarded_price_misspec(0.5, 0, &exp).unwrap(), exp.grid_point(0));
        assert_eq!(safeguarded_price_misspec(20.0, 10, &exp).unwrap(), exp.grid_point(10));
    }

    #[test]
    fn improvement_thresholds_match_the_reference_values_exactly() {
        let exp10 = GridExperiment { c: 1.0, p_bar: 10.0, n: 10, k: 1, noise_sd: 0.0 };
        let exponential = DemandOracle::exponential(2.0, 1.0).unwrap();
        let cond = improvement_condition(&exponential, &exp10).unwrap();
        assert_eq!(cond.threshold_p_bar, 3.75 + 2.25 * exp10.c);
        assert!(cond.strict_improvement);

        let isoelastic = DemandOracle::isoelastic(2.0, 1.0).unwrap();
        let cond = improvement_condition(&isoelastic, &exp10).unwrap();
        assert_eq!(cond.threshold_p_bar, 9.75 * exp10.c);
        assert!(cond.strict_improvement);

        for c in [0.0, 0.5, 2.0] {
            let exp = GridExperiment { c, p_bar: c + 50.0, ..exp10 };
            let cond = improvement_condition(&exponential, &exp).unwrap();
            assert_eq!(cond.threshold_p_bar, 3.75 + 2.25 * c);
        }
    }

    #[test]
    fn threshold_needs_more_than_six_intervals() {
        let oracle = DemandOracle::exponential(2.0, 1.0).unwrap();
        let exp = GridExperiment { c: 1.0, p_bar: 10.0, n: 6, k: 1, noise_sd: 0.0 };
        assert!(matches!(improvement_condition(&oracle, &exp), Err(Error::ConditionInapplicable(_))));
    }

    #[test]
    fn threshold_large_n_limits() {
        let exp = GridExperiment { c: 2.0, p_bar: 100.0, n: 1_000_000, k: 1, noise_sd: 0.0 };
        let iso = DemandOracle::isoelastic(2.0, 1.0).unwrap();
        let limit_iso = 3.0 * exp.c * (2.0 / (2.0 - 1.0) - 0.5);
        assert!((improvement_condition(&iso, &exp).unwrap().threshold_p_bar - limit_iso).abs() < 1e-3);
        let expo = DemandOracle::exponential(2.0, 1.0).unwrap();
        let limit_exp = 3.0 * (0.5 + exp.c / 2.0);
        assert!((improvement_condition(&expo, &exp).unwrap().threshold_p_bar - limit_exp).abs() < 1e-3);
    }

    #[test]
    fn noiseless_experiment_never_deviates() {
        // Narrow isoelastic grid: profit strongly concave on [1, 2.5].
        let oracle = DemandOracle::isoelastic(2.0, 10.0).unwrap();
        let exp = GridExperiment { c: 1.0, p_bar: 2.5, n: 8, k: 3, noise_sd: 0.0 };
        let report = finite_sample_check(&oracle, &exp, 0.01, None, 50, &RngStream::new(58)).unwrap();
        assert_eq!(report.freq_ai_deviation, 0.0);
        assert_eq!(report.freq_human_miss, 0.0);
        assert_eq!(report.bound_human, 0.0);
        assert!(report.lambda > 0.0);
    }

    #[test]
    fn figure_family_profit_is_not_strongly_concave() {
        let (oracle, exp) = figure_family();
        let lambda = estimate_strong_concavity(&oracle, &exp, 1000);
        assert!(lambda < 0.0, "profit has a convex stretch past p = 7, lambda = {lambda}");
        let err =
            finite_sample_check(&oracle, &exp, 0.05, None, 10, &RngStream::new(59)).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(_)));
    }

    #[test]
    fn miss_frequency_decreases_in_k() {
        let (oracle, mut exp) = figure_family();
        exp.noise_sd = 2.0;
        let mut prev = f64::INFINITY;
        for (i, k) in [10u32, 1000].into_iter().enumerate() {
            exp.k = k;
            let freq =
                human_miss_frequency(&oracle, &exp, 400, &RngStream::new(60).child(i as u64)).unwrap();
            assert!(freq <= prev + 0.05, "k={k}: {freq} vs {prev}");
            prev = freq;
        }
    }
}
