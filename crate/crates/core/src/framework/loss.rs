//! Loss functions with a known minimizer.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;

type LossFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
type MinimizerFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A nonnegative quasiconvex loss `l(x, w)` with minimizer `x*(w)`.
///
/// Losses without covariates are evaluated with an empty covariate slice.
#[derive(Clone)]
pub struct LossSpec {
    eval: LossFn,
    minimizer: MinimizerFn,
}

impl LossSpec {
    /// Loss of a scalar decision, no covariates.
    pub fn scalar(eval: impl Fn(f64) -> f64 + Send + Sync + 'static, minimizer: f64) -> Self {
        Self {
            eval: Arc::new(move |x, _| eval(x)),
            minimizer: Arc::new(move |_| minimizer),
        }
    }

    /// Covariate-indexed loss with minimizer map `x*(w)`.
    pub fn with_covariates(
        eval: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        minimizer: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { eval: Arc::new(eval), minimizer: Arc::new(minimizer) }
    }

    /// Squared-error loss `(x - x*)^2`.
    pub fn quadratic(minimizer: f64) -> Self {
        Self::scalar(move |x| (x - minimizer) * (x - minimizer), minimizer)
    }

    /// Absolute-error loss `|x - x*|`.
    pub fn absolute(minimizer: f64) -> Self {
        Self::scalar(move |x| (x - minimizer).abs(), minimizer)
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        (self.eval)(x, &[])
    }

    pub fn evaluate_cov(&self, x: f64, w: &[f64]) -> f64 {
        (self.eval)(x, w)
    }

    pub fn minimizer(&self) -> f64 {
        (self.minimizer)(&[])
    }

    pub fn minimizer_cov(&self, w: &[f64]) -> f64 {
        (self.minimizer)(w)
    }

    /// Statistical check of nonnegativity and quasiconvexity on one slice.
    ///
    /// Draws `triples` ordered pairs on each side of the minimizer within
    /// `range` of it and verifies the one-sided monotonicity that defines
    /// quasiconvexity, plus `l >= 0` at every probe.
    pub fn validate_quasiconvex(
        &self,
        w: &[f64],
        range: f64,
        triples: u32,
        stream: &RngStream,
    ) -> Result<()> {
        let m = self.minimizer_cov(w);
        let mut rng = stream.rng();
        let tol = 1e-12;
        for i in 0..triples {
            let a = rng.random::<f64>() * range;
            let b = rng.random::<f64>() * range;
            let (near, far) = (a.min(b), a.max(b));
            // Left of the minimizer: nonincreasing toward it.
            let l_far = self.evaluate_cov(m - far, w);
            let l_near = self.evaluate_cov(m - near, w);
            if l_far + tol < l_near {
                return Err(Error::Configuration(format!(
                    "loss not quasiconvex left of x*({w:?}): l({}) = {l_far} < l({}) = {l_near} (probe {i})",
                    m - far,
                    m - near
                )));
            }
            // Right of the minimizer: nondecreasing away from it.
            let r_near = self.evaluate_cov(m + near, w);
            let r_far = self.evaluate_cov(m + far, w);
            if r_far + tol < r_near {
                return Err(Error::Configuration(format!(
                    "loss not quasiconvex right of x*({w:?}) (probe {i})"
                )));
            }
            for value in [l_far, l_near, r_near, r_far] {
                if !(value >= 0.0) {
                    return Err(Error::Configuration(format!("loss is negative: {value}")));
                }
            }
        }
        Ok(())
    }

    /// Checks `l(x*) <= l(x) + tol` on a dense grid around the minimizer.
    pub fn validate_minimizer(&self, w: &[f64], range: f64, points: u32, tol: f64) -> Result<()> {
        let m = self.minimizer_cov(w);
        let at_min = self.evaluate_cov(m, w);
        for i in 0..=points {
            let x = m - range + 2.0 * range * f64::from(i) / f64::from(points);
            if self.evaluate_cov(x, w) + tol < at_min {
                return Err(Error::Configuration(format!(
                    "declared minimizer {m} is not minimal: l({x}) < l({m})"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossSpec").field("minimizer", &self.minimizer()).finish()
    }
}
