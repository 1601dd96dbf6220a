//! Monte Carlo mean estimation with confidence intervals.

use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Draws per estimator chunk. Each chunk owns a derived sub-stream and the
/// chunk partials are merged in chunk order, so the estimate is bit-identical
/// at any thread count. Changing this constant changes results; it is part of
/// the determinism contract, not a tuning knob.
const CHUNK: u64 = 4096;

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MonteCarlo,
    Quadrature,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::MonteCarlo => write!(f, "monte-carlo"),
            Method::Quadrature => write!(f, "quadrature"),
        }
    }
}

/// A point estimate with a symmetric uncertainty bound.
///
/// For Monte Carlo the half-width is a CLT confidence interval at the
/// configured level; for quadrature it is the a-posteriori error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithCi {
    pub mean: f64,
    pub half_width: f64,
    pub n_samples: u64,
    pub method: Method,
    /// Confidence level of the interval; 1.0 for deterministic bounds.
    pub confidence: f64,
}

impl EstimateWithCi {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, half_width: 0.0, n_samples: 0, method: Method::Quadrature, confidence: 1.0 }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    fn merged_meta(&self, other: &Self) -> (u64, Method, f64) {
        let method = if self.method == other.method { self.method } else { Method::MonteCarlo };
        (self.n_samples.max(other.n_samples), method, self.confidence.min(other.confidence))
    }

    /// Interval sum.
    pub fn add(&self, other: &Self) -> Self {
        let (n, method, confidence) = self.merged_meta(other);
        Self { mean: self.mean + other.mean, half_width: self.half_width + other.half_width, n_samples: n, method, confidence }
    }

    /// Interval difference.
    pub fn sub(&self, other: &Self) -> Self {
        let (n, method, confidence) = self.merged_meta(other);
        Self { mean: self.mean - other.mean, half_width: self.half_width + other.half_width, n_samples: n, method, confidence }
    }

    /// Interval product (worst case over endpoints).
    pub fn mul(&self, other: &Self) -> Self {
        let (n, method, confidence) = self.merged_meta(other);
        let candidates = [
            self.lower() * other.lower(),
            self.lower() * other.upper(),
            self.upper() * other.lower(),
            self.upper() * other.upper(),
        ];
        let lo = candidates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = candidates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { mean: (lo + hi) / 2.0, half_width: (hi - lo) / 2.0, n_samples: n, method, confidence }
    }

    /// Interval quotient; an unbounded interval when the divisor spans zero.
    pub fn div(&self, other: &Self) -> Self {
        let (n, method, confidence) = self.merged_meta(other);
        if other.lower() <= 0.0 && other.upper() >= 0.0 {
            return Self { mean: f64::NAN, half_width: f64::INFINITY, n_samples: n, method, confidence };
        }
        let candidates = [
            self.lower() / other.lower(),
            self.lower() / other.upper(),
            self.upper() / other.lower(),
            self.upper() / other.upper(),
        ];
        let lo = candidates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = candidates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { mean: (lo + hi) / 2.0, half_width: (hi - lo) / 2.0, n_samples: n, method, confidence }
    }
}

/// Two-sided standard normal quantile for a confidence level in (0, 1).
pub fn z_value(confidence: f64) -> f64 {
    let normal = Normal::standard();
    normal.inverse_cdf(0.5 + confidence / 2.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Sample mean of `n` draws with a CLT confidence interval.
///
/// Draws are split into fixed-size chunks, each with its own sub-stream of
/// `stream`; chunk partials are merged in chunk order. The result therefore
/// depends only on (seed, path, n), never on how many workers ran the chunks.
pub fn estimate_mean<F>(sampler: F, n: u64, stream: &RngStream, confidence: f64) -> Result<EstimateWithCi>
where
    F: Fn(&mut ChaCha12Rng) -> f64 + Sync,
{
    if n < 2 {
        return Err(Error::InvalidArgument(format!("estimate_mean needs n >= 2, got {n}")));
    }
    if !(0.0 < confidence && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence must be in (0,1), got {confidence}")));
    }

    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Result<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.child(c).rng();
            let count = CHUNK.min(n - c * CHUNK);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for i in 0..count {
                let x = sampler(&mut rng);
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        value: x,
                        context: format!("sampler draw {} of estimate_mean", c * CHUNK + i),
                    });
                }
                sum += x;
                sum_sq += x * x;
            }
            Ok((sum, sum_sq))
        })
        .collect();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for partial in partials {
        let (s, s2) = partial?;
        sum += s;
        sum_sq += s2;
    }

    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    let half_width = z_value(confidence) * (var / nf).sqrt();
    Ok(EstimateWithCi { mean, half_width, n_samples: n, method: Method::MonteCarlo, confidence })
}
