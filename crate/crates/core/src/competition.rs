//! Pricing under competition: a monopolistic OLS pricer that never sees the
//! competitor, its large-sample limit, and the price-matching guardrail with
//! its improvement threshold.

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// True duopoly demand d = alpha - beta*p + gamma*p' + eps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuopolyParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub noise_sd: f64,
}

impl DuopolyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        // gamma = 0 is the monopoly edge case used by the plim examples;
        // the duopoly results proper assume it strictly positive.
        if !(self.beta > self.gamma && self.gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need beta > gamma >= 0, got beta={} gamma={}",
                self.beta, self.gamma
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }

    /// Expected demand at own price `p` against competitor price `p_prime`.
    pub fn expected_demand(&self, p: f64, p_prime: f64) -> f64 {
        self.alpha - self.beta * p + self.gamma * p_prime
    }
}

/// Marginal family of the i.i.d. price history pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceFamily {
    BivariateGaussian,
    /// Bivariate log-normal with moments matched to (mu, sigma2, rho).
    BivariateLognormal,
}

/// Historical price process: mean mu, variance sigma2, correlation rho.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceHistoryModel {
    pub mu: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub family: PriceFamily,
}

impl PriceHistoryModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!("rho must be in [0,1], got {}", self.rho)));
        }
        if self.family == PriceFamily::BivariateLognormal && !(self.mu > 0.0) {
            return Err(Error::InvalidArgument("log-normal prices need mu > 0".into()));
        }
        Ok(())
    }

    /// One (p, p') pair with the requested moments.
    pub fn sample_pair(&self, rng: &mut ChaCha12Rng) -> (f64, f64) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        match self.family {
            PriceFamily::BivariateGaussian => {
                let sd = self.sigma2.sqrt();
                let p = self.mu + sd * z1;
                let q = self.mu + sd * (self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * z2);
                (p, q)
            }
            PriceFamily::BivariateLognormal => {
                // exp(m + s N) with s^2 = ln(1 + sigma2/mu^2) matches the
                // mean and variance; the Gaussian-scale correlation r is
                // chosen so the price-scale correlation equals rho.
                let s2 = (1.0 + self.sigma2 / (self.mu * self.mu)).ln();
                let s = s2.sqrt();
                let m = self.mu.ln() - 0.5 * s2;
                let r = if self.rho == 0.0 {
                    0.0
                } else {
                    (1.0 + self.rho * (s2.exp() - 1.0)).ln() / s2
                };
                let g1 = z1;
                let g2 = r * z1 + (1.0 - r * r).max(0.0).sqrt() * z2;
                ((m + s * g1).exp(), (m + s * g2).exp())
            }
        }
    }
}

/// Simulated pricing history.
#[derive(Debug, Clone, Default)]
pub struct HistoryDataset {
    pub prices: Vec<f64>,
    pub competitor_prices: Vec<f64>,
    pub demands: Vec<f64>,
}

impl HistoryDataset {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Per-replication outcome row.
#[derive(Debug, Clone, Copy)]
pub struct CompetitionOutcome {
    pub n: u64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub p_a: f64,
    pub p_prime: f64,
    pub p_matched: f64,
    pub revenue_algorithmic: f64,
    pub revenue_matched: f64,
    pub degenerate: bool,
}

/// Draw `n` periods of (p, p', d) from the duopoly demand model.
pub fn simulate_history(
    params: &DuopolyParams,
    hist: &PriceHistoryModel,
    n: u64,
    stream: &RngStream,
) -> Result<HistoryDataset> {
    params.validate()?;
    hist.validate()?;
    if n < 3 {
        return Err(Error::InvalidArgument(format!("history length must be >= 3, got {n}")));
    }
    let mut rng = stream.rng();
    let mut out = HistoryDataset {
        prices: Vec::with_capacity(n as usize),
        competitor_prices: Vec::with_capacity(n as usize),
        demands: Vec::with_capacity(n as usize),
    };
    for _ in 0..n {
        let (p, q) = hist.sample_pair(&mut rng);
        let eps: f64 = if params.noise_sd > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            params.noise_sd * z
        } else {
            0.0
        };
        out.prices.push(p);
        out.competitor_prices.push(q);
        out.demands.push(params.expected_demand(p, q) + eps);
    }
    Ok(out)
}

/// OLS fit of the monopolistic model d = alpha_hat - beta_hat * p.
pub fn ols_monopoly_fit(dataset: &HistoryDataset) -> Result<(f64, f64)> {
    ols_alpha_minus_beta(&dataset.prices, &dataset.demands)
}

/// Least squares for y = alpha - beta * x (note the sign convention).
pub(crate) fn ols_alpha_minus_beta(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two paired observations".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if sxx <= 0.0 || sxx < 1e-12 * n * (1.0 + mx * mx) {
        return Err(Error::DegenerateDesign("all regressor values are (numerically) equal".into()));
    }
    let beta_hat = -sxy / sxx;
    let alpha_hat = my + beta_hat * mx;
    Ok((alpha_hat, beta_hat))
}

/// Revenue-maximizing price for the fitted monopolistic demand.
pub fn algorithmic_price(alpha_hat: f64, beta_hat: f64) -> Result<f64> {
    if !(beta_hat > 0.0) {
        return Err(Error::NonpositiveSlope { beta_hat });
    }
    Ok(alpha_hat / (2.0 * beta_hat))
}

/// Probability limit of the algorithmic price:
/// (alpha + gamma*mu*(1-rho)) / (2*(beta - gamma*rho)).
pub fn plim_price(params: &DuopolyParams, hist: &PriceHistoryModel) -> Result<f64> {
    params.validate()?;
    hist.validate()?;
    let denom = params.beta - params.gamma * hist.rho;
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument(format!("beta - gamma*rho must be positive, got {denom}")));
    }
    Ok((params.alpha + params.gamma * hist.mu * (1.0 - hist.rho)) / (2.0 * denom))
}

/// Symmetric Nash and collusive price levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumPrices {
    pub nash: f64,
    pub collusive: f64,
}

pub fn equilibrium_prices(params: &DuopolyParams) -> Result<EquilibriumPrices> {
    params.validate()?;
    let nash = params.alpha / (2.0 * params.beta - params.gamma);
    let collusive = params.alpha / (2.0 * (params.beta - params.gamma));
    Ok(EquilibriumPrices { nash, collusive })
}

/// Lowest competitor price at which matching still beats the limiting
/// algorithmic price:
/// p_L = (alpha*beta - 2*alpha*gamma*rho - beta*gamma*(1-rho)*mu)
///       / (2*(beta - rho*gamma)*(beta - gamma)).
///
/// Requires mu >= nash price; then p_L <= p_NE <= plim price.
pub fn matching_threshold(params: &DuopolyParams, hist: &PriceHistoryModel) -> Result<f64> {
    params.validate()?;
    hist.validate()?;
    let nash = equilibrium_prices(params)?.nash;
    if hist.mu < nash {
        return Err(Error::HypothesisViolated(format!(
            "matching threshold needs mu >= nash price ({} < {nash})",
            hist.mu
        )));
    }
    let DuopolyParams { alpha, beta, gamma, .. } = *params;
    let rho = hist.rho;
    let numerator = alpha * beta - 2.0 * alpha * gamma * rho - beta * gamma * (1.0 - rho) * hist.mu;
    let denominator = 2.0 * (beta - rho * gamma) * (beta - gamma);
    Ok(numerator / denominator)
}

/// Expected revenues of the matched price min(p_a, p') and the raw price,
/// both facing competitor price p'. Noise is excluded: the comparison is
/// between expected revenues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevenueComparison {
    pub matched: f64,
    pub algorithmic: f64,
}

pub fn revenue_compare(params: &DuopolyParams, p_a: f64, p_prime: f64) -> Result<RevenueComparison> {
    params.validate()?;
    if !(p_a > 0.0 && p_prime > 0.0) {
        return Err(Error::InvalidArgument("prices must be positive".into()));
    }
    let p_matched = p_a.min(p_prime);
    Ok(RevenueComparison {
        matched: p_matched * params.expected_demand(p_matched, p_prime),
        algorithmic: p_a * params.expected_demand(p_a, p_prime),
    })
}

/// One full replication: simulate, fit, price, match, compare.
///
/// `competitor_price` pins the evaluation p'; otherwise a fresh draw from
/// the price marginal is used. A nonpositive fitted slope marks the row
/// degenerate instead of dropping it.
pub fn run_replication(
    params: &DuopolyParams,
    hist: &PriceHistoryModel,
    n: u64,
    competitor_price: Option<f64>,
    stream: &RngStream,
) -> Result<CompetitionOutcome> {
    let dataset = simulate_history(params, hist, n, &stream.child(0))?;
    let (alpha_hat, beta_hat) = ols_monopoly_fit(&dataset)?;
    let p_prime = match competitor_price {
        Some(p) => p,
        None => {
            let mut rng = stream.child(1).rng();
            hist.sample_pair(&mut rng).0
        }
    };
    match algorithmic_price(alpha_hat, beta_hat) {
        Ok(p_a) => {
            let revenues = revenue_compare(params, p_a, p_prime)?;
            Ok(CompetitionOutcome {
                n,
                alpha_hat,
                beta_hat,
                p_a,
                p_prime,
                p_matched: p_a.min(p_prime),
                revenue_algorithmic: revenues.algorithmic,
                revenue_matched: revenues.matched,
                degenerate: false,
            })
        }
        Err(Error::NonpositiveSlope { .. }) => Ok(CompetitionOutcome {
            n,
            alpha_hat,
            beta_hat,
            p_a: f64::NAN,
            p_prime,
            p_matched: f64::NAN,
            revenue_algorithmic: f64::NAN,
            revenue_matched: f64::NAN,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// Streaming mean algorithmic price over `replications` independent
/// histories of length `n`; degenerate fits are counted, not averaged.
pub fn mean_algorithmic_price(
    params: &DuopolyParams,
    hist: &PriceHistoryModel,
    n: u64,
    replications: u64,
    stream: &RngStream,
) -> Result<(f64, u64)> {
    use rayon::prelude::*;
    let results: Vec<Result<Option<f64>>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            // Streaming sums; the dataset is never materialized.
            let mut rng = stream.child(rep).rng();
            let mut sp = 0.0;
            let mut spp = 0.0;
            let mut sd = 0.0;
            let mut spd = 0.0;
            for _ in 0..n {
                let (p, q) = hist.sample_pair(&mut rng);
                let eps: f64 = if params.noise_sd > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    params.noise_sd * z
                } else {
                    0.0
                };
                let d = params.expected_demand(p, q) + eps;
                sp += p;
                spp += p * p;
                sd += d;
                spd += p * d;
            }
            let nf = n as f64;
            let sxx = spp - sp * sp / nf;
            if sxx <= 0.0 {
                return Err(Error::DegenerateDesign("constant prices in replication".into()));
            }
            let sxy = spd - sp * sd / nf;
            let beta_hat = -sxy / sxx;
            let alpha_hat = sd / nf + beta_hat * sp / nf;
            if beta_hat <= 0.0 {
                return Ok(None);
            }
            Ok(Some(alpha_hat / (2.0 * beta_hat)))
        })
        .collect();

    let mut sum = 0.0;
    let mut valid = 0u64;
    let mut degenerate = 0u64;
    for r in results {
        match r? {
            Some(p) => {
                sum += p;
                valid += 1;
            }
            None => degenerate += 1,
        }
    }
    if valid == 0 {
        return Err(Error::DegenerateDesign("every replication had a nonpositive slope".into()));
    }
    params.validate()?;
    hist.validate()?;
    Ok((sum / valid as f64, degenerate))
}
