//! Cross-checks of the scenario modules against independent oracles:
//! the revenue-quadratic root for the matching threshold, noiseless-grid
//! pipelines for the limit price, and the deterministic improvement
//! guarantee of the interval guardrail.

use guardrail_core::competition::{
    equilibrium_prices, matching_threshold, mean_algorithmic_price, plim_price, revenue_compare,
    DuopolyParams, PriceFamily, PriceHistoryModel,
};
use guardrail_core::misspec::{
    algorithmic_price_misspec, human_best_index, improvement_condition, limit_algorithmic_price,
    noiseless_interval, ols_linear_fit, run_grid_experiment, run_replication_misspec, DemandOracle,
    GridExperiment,
};
use guardrail_core::RngStream;
use rand::Rng;

/// Smaller root of the revenue-equality quadratic r(p') = r(p_a) with the
/// algorithmic price at its probability limit. Built directly from the
/// revenue difference, independently of the closed-form threshold.
fn threshold_root_oracle(params: &DuopolyParams, hist: &PriceHistoryModel) -> f64 {
    let p_a = plim_price(params, hist).unwrap();
    let (alpha, beta, gamma) = (params.alpha, params.beta, params.gamma);
    // r(p') - r(p_a) = (gamma - beta) p'^2 + (alpha - gamma p_a) p' + p_a (beta p_a - alpha)
    //   where r(p) = p (alpha - beta p + gamma p') evaluated at own price.
    let a2 = gamma - beta;
    let a1 = alpha - gamma * p_a;
    let a0 = p_a * (beta * p_a - alpha);
    let disc = a1 * a1 - 4.0 * a2 * a0;
    assert!(disc >= 0.0, "revenue quadratic has no real roots");
    let r1 = (-a1 + disc.sqrt()) / (2.0 * a2);
    let r2 = (-a1 - disc.sqrt()) / (2.0 * a2);
    r1.min(r2)
}

fn random_valid_setup(rng: &mut impl Rng) -> (DuopolyParams, PriceHistoryModel) {
    let gamma = rng.random_range(0.2..2.0);
    let beta = gamma + rng.random_range(0.1..2.0);
    let alpha = rng.random_range(2.0..20.0);
    let params = DuopolyParams { alpha, beta, gamma, noise_sd: 1.0 };
    let nash = alpha / (2.0 * beta - gamma);
    let hist = PriceHistoryModel {
        mu: nash * rng.random_range(1.0..1.8),
        sigma2: rng.random_range(0.2..2.0),
        rho: rng.random_range(0.0..1.0),
        family: PriceFamily::BivariateGaussian,
    };
    (params, hist)
}

#[test]
fn matching_threshold_agrees_with_the_quadratic_root_oracle() {
    let mut rng = RngStream::new(80).rng();
    for _ in 0..200 {
        let (params, hist) = random_valid_setup(&mut rng);
        let closed = matching_threshold(&params, &hist).unwrap();
        let oracle = threshold_root_oracle(&params, &hist);
        assert!(
            (closed - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()),
            "closed {closed} vs oracle {oracle} for {params:?} {hist:?}"
        );
    }
}

#[test]
fn matching_threshold_worked_example() {
    let params = DuopolyParams { alpha: 10.0, beta: 2.0, gamma: 1.0, noise_sd: 0.0 };
    let hist = PriceHistoryModel { mu: 4.0, sigma2: 1.0, rho: 0.0, family: PriceFamily::BivariateGaussian };
    let p_l = matching_threshold(&params, &hist).unwrap();
    let oracle = threshold_root_oracle(&params, &hist);
    assert_eq!(p_l, 3.0);
    assert!((oracle - 3.0).abs() < 1e-10);
    let nash = equilibrium_prices(&params).unwrap().nash;
    let plim = plim_price(&params, &hist).unwrap();
    assert!(p_l <= nash && nash <= plim);
    assert!((plim - 3.5).abs() < 1e-12);
}

#[test]
fn threshold_ordering_over_random_sweeps() {
    let mut rng = RngStream::new(81).rng();
    for _ in 0..500 {
        let (params, hist) = random_valid_setup(&mut rng);
        let p_l = matching_threshold(&params, &hist).unwrap();
        let eq = equilibrium_prices(&params).unwrap();
        let plim = plim_price(&params, &hist).unwrap();
        assert!(eq.nash < eq.collusive, "{params:?}");
        assert!(
            p_l <= eq.nash + 1e-9 && eq.nash <= plim + 1e-9,
            "ordering broken: p_L={p_l} nash={} plim={plim} for {params:?} {hist:?}",
            eq.nash
        );
    }
}

#[test]
fn without_cross_sensitivity_demand_ignores_the_competitor() {
    // gamma = 0: the residual demand carries no trace of the competitor.
    let params = DuopolyParams { alpha: 10.0, beta: 2.0, gamma: 0.0, noise_sd: 1.0 };
    let hist = PriceHistoryModel { mu: 4.0, sigma2: 1.0, rho: 0.3, family: PriceFamily::BivariateGaussian };
    let data = guardrail_core::competition::simulate_history(&params, &hist, 200_000, &RngStream::new(95)).unwrap();
    // Correlate the demand residual d - (alpha - beta p) with p'.
    let n = data.len() as f64;
    let resid: Vec<f64> = (0..data.len())
        .map(|i| data.demands[i] - (10.0 - 2.0 * data.prices[i]))
        .collect();
    let mr = resid.iter().sum::<f64>() / n;
    let mq = data.competitor_prices.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vr = 0.0;
    let mut vq = 0.0;
    for (r, q) in resid.iter().zip(&data.competitor_prices) {
        cov += (r - mr) * (q - mq);
        vr += (r - mr).powi(2);
        vq += (q - mq).powi(2);
    }
    let corr = cov / (vr.sqrt() * vq.sqrt());
    assert!(corr.abs() < 5.0 / n.sqrt() + 1e-3, "corr = {corr}");
}

#[test]
fn revenue_sign_flips_exactly_at_the_roots() {
    let params = DuopolyParams { alpha: 10.0, beta: 2.0, gamma: 1.0, noise_sd: 0.0 };
    let hist = PriceHistoryModel { mu: 4.0, sigma2: 1.0, rho: 0.0, family: PriceFamily::BivariateGaussian };
    let p_a = plim_price(&params, &hist).unwrap();
    let p_l = matching_threshold(&params, &hist).unwrap();
    let nash = equilibrium_prices(&params).unwrap().nash;
    let mut grid_sign_changes = Vec::new();
    let steps = 400;
    let mut prev_sign = 0i32;
    for i in 1..=steps {
        let p_prime = 2.0 * nash * f64::from(i) / f64::from(steps);
        let cmp = revenue_compare(&params, p_a, p_prime).unwrap();
        let diff = cmp.matched - cmp.algorithmic;
        let sign = if diff > 1e-12 {
            1
        } else if diff < -1e-12 {
            -1
        } else {
            0
        };
        if sign != 0 && prev_sign != 0 && sign != prev_sign {
            grid_sign_changes.push(p_prime);
        }
        if sign != 0 {
            prev_sign = sign;
        }
    }
    // Exactly one strict sign change on (0, 2 p_NE): at p_L. Above p_a the
    // difference is identically zero (no clipping), not a sign change.
    assert_eq!(grid_sign_changes.len(), 1, "{grid_sign_changes:?}");
    assert!((grid_sign_changes[0] - p_l).abs() < 2.0 * 2.0 * nash / f64::from(steps));
}

#[test]
fn algorithmic_price_converges_along_n() {
    let params = DuopolyParams { alpha: 10.0, beta: 2.0, gamma: 1.0, noise_sd: 1.0 };
    let hist = PriceHistoryModel { mu: 4.0, sigma2: 1.0, rho: 0.0, family: PriceFamily::BivariateGaussian };
    let plim = plim_price(&params, &hist).unwrap();
    let mut errors = Vec::new();
    for (i, n) in [1_000u64, 10_000, 100_000].into_iter().enumerate() {
        let (mean, degenerate) =
            mean_algorithmic_price(&params, &hist, n, 40, &RngStream::new(82).child(i as u64)).unwrap();
        assert_eq!(degenerate, 0);
        errors.push((mean - plim).abs());
    }
    assert!(errors[2] < errors[0], "errors not shrinking: {errors:?}");
    assert!(errors[2] < 0.05, "{errors:?}");
}

#[test]
fn lognormal_history_family_obeys_the_same_limit() {
    let params = DuopolyParams { alpha: 10.0, beta: 2.0, gamma: 1.0, noise_sd: 1.0 };
    let hist = PriceHistoryModel { mu: 4.0, sigma2: 1.0, rho: 0.5, family: PriceFamily::BivariateLognormal };
    let plim = plim_price(&params, &hist).unwrap();
    let (mean, _) = mean_algorithmic_price(&params, &hist, 200_000, 50, &RngStream::new(83)).unwrap();
    assert!((mean - plim).abs() < 0.02, "lognormal mean {mean} vs plim {plim}");
}

// ---------------------------------------------------------------------------
// Misspecification scenario
// ---------------------------------------------------------------------------

#[test]
fn figure_setting_fits_a_downward_slope_with_overwhelming_probability() {
    let oracle = DemandOracle::exponential(1.0 / 3.0, 10.0).unwrap();
    let exp = GridExperiment { c: 1.0, p_bar: 10.0, n: 10, k: 3, noise_sd: 0.5 };
    let stream = RngStream::new(84);
    let replications = 10_000u64;
    let mut downward = 0u64;
    for rep in 0..replications {
        let obs = run_grid_experiment(&oracle, &exp, &stream.child(rep)).unwrap();
        let (_, beta_hat) = ols_linear_fit(&obs, &exp).unwrap();
        if beta_hat > 0.0 {
            downward += 1;
        }
    }
    let freq = downward as f64 / replications as f64;
    assert!(freq >= 0.99, "downward-slope frequency {freq}");
}

#[test]
fn interval_guardrail_never_hurts_when_it_straddles_the_optimum() {
    // Theorem-level guarantee, deterministic per draw: whenever the true
    // optimal price lies in the guardrail interval, the clipped price earns
    // at least the algorithmic profit.
    let mut rng = RngStream::new(85).rng();
    for trial in 0..300u64 {
        let family: bool = rng.random();
        let (oracle, c) = if family {
            let a = rng.random_range(1.5..3.0);
            (DemandOracle::isoelastic(a, rng.random_range(5.0..20.0)).unwrap(), rng.random_range(0.5..2.0))
        } else {
            let a = rng.random_range(0.2..0.7);
            (DemandOracle::exponential(a, rng.random_range(5.0..20.0)).unwrap(), rng.random_range(0.5..2.0))
        };
        let exp = GridExperiment {
            c,
            p_bar: c + rng.random_range(3.0..9.0),
            n: rng.random_range(7..15),
            k: rng.random_range(2..6),
            noise_sd: rng.random_range(0.1..1.0),
        };
        let outcome = run_replication_misspec(&oracle, &exp, &RngStream::new(86).child(trial)).unwrap();
        if outcome.degenerate {
            continue;
        }
        if outcome.optimal_in_interval {
            assert!(
                outcome.profit_safeguarded >= outcome.profit_algorithmic - 1e-12,
                "trial {trial}: clipping hurt despite containment: {outcome:?}"
            );
        }
    }
}

#[test]
fn well_specified_linear_demand_leaves_the_algorithm_alone() {
    // Linear truth: the fitted model is correct, the limiting price is the
    // true optimum, and at large K the guardrail interval contains it.
    let oracle = DemandOracle::custom(|p| 20.0 - 2.0 * p);
    let exp = GridExperiment { c: 1.0, p_bar: 8.0, n: 10, k: 5000, noise_sd: 0.5 };
    let p_true = (20.0 / 2.0 + 1.0) / 2.0;
    let limit = limit_algorithmic_price(&oracle, &exp).unwrap();
    assert!((limit - p_true).abs() < 1e-10);
    let outcome = run_replication_misspec(&oracle, &exp, &RngStream::new(87)).unwrap();
    assert!((outcome.p_a - p_true).abs() < 0.05);
    assert!(outcome.algorithmic_in_interval, "{outcome:?}");
    assert_eq!(outcome.p_safeguarded, outcome.p_a);
}

#[test]
fn strict_improvement_flag_implies_limit_price_outside_the_interval() {
    // The threshold is a sufficient condition: every flagged configuration
    // must have its limiting price outside the noiseless guardrail interval.
    // (The converse fails; the flag is conservative.)
    let mut rng = RngStream::new(88).rng();
    let mut flagged = 0u32;
    for _ in 0..400 {
        let family: bool = rng.random();
        let (oracle, c) = if family {
            (DemandOracle::isoelastic(rng.random_range(1.3..4.0), 1.0).unwrap(), rng.random_range(0.3..3.0))
        } else {
            (DemandOracle::exponential(rng.random_range(0.1..1.2), 1.0).unwrap(), rng.random_range(0.3..3.0))
        };
        let exp = GridExperiment {
            c,
            p_bar: c + rng.random_range(0.5..40.0),
            n: rng.random_range(7..40),
            k: 1,
            noise_sd: 0.0,
        };
        let cond = improvement_condition(&oracle, &exp).unwrap();
        if !cond.strict_improvement {
            continue;
        }
        flagged += 1;
        let limit = limit_algorithmic_price(&oracle, &exp).unwrap();
        let (_, lo, hi) = noiseless_interval(&oracle, &exp);
        assert!(
            limit < lo || limit > hi,
            "flagged but inside: limit {limit} in [{lo}, {hi}] ({:?}, c={c}, p_bar={}, n={})",
            oracle.family,
            exp.p_bar,
            exp.n
        );
    }
    assert!(flagged > 100, "sweep produced too few flagged cases: {flagged}");
}

#[test]
fn noiseless_pipeline_is_the_limit_price_oracle() {
    let mut rng = RngStream::new(89).rng();
    for _ in 0..50 {
        let family: bool = rng.random();
        let (oracle, c) = if family {
            (
                DemandOracle::isoelastic(rng.random_range(1.4..3.5), rng.random_range(1.0..20.0)).unwrap(),
                rng.random_range(0.3..2.5),
            )
        } else {
            (
                DemandOracle::exponential(rng.random_range(0.15..0.9), rng.random_range(1.0..20.0)).unwrap(),
                rng.random_range(0.3..2.5),
            )
        };
        let exp = GridExperiment {
            c,
            p_bar: c + rng.random_range(2.0..12.0),
            n: rng.random_range(7..20),
            k: 1,
            noise_sd: 0.0,
        };
        let formula = limit_algorithmic_price(&oracle, &exp).unwrap();
        let obs = run_grid_experiment(&oracle, &exp, &RngStream::new(90)).unwrap();
        let (a, b) = ols_linear_fit(&obs, &exp).unwrap();
        let pipeline = algorithmic_price_misspec(a, b, exp.c).unwrap();
        assert!(
            (formula - pipeline).abs() <= 1e-10 * (1.0 + pipeline.abs()),
            "formula {formula} vs pipeline {pipeline}"
        );
    }
}

#[test]
fn human_index_on_figure_grid_matches_exhaustive_evaluation() {
    let oracle = DemandOracle::exponential(1.0 / 3.0, 10.0).unwrap();
    let exp = GridExperiment { c: 1.0, p_bar: 10.0, n: 10, k: 1, noise_sd: 0.0 };
    let obs = run_grid_experiment(&oracle, &exp, &RngStream::new(91)).unwrap();
    let j = human_best_index(&obs, &exp);
    // Exhaustive oracle over the grid.
    let grid = exp.grid();
    let best = grid
        .iter()
        .enumerate()
        .max_by(|a, b| {
            let pa = (a.1 - exp.c) * oracle.demand(*a.1);
            let pb = (b.1 - exp.c) * oracle.demand(*b.1);
            pa.partial_cmp(&pb).unwrap()
        })
        .unwrap()
        .0;
    assert_eq!(j as usize, best);
}
