//! Benefit of clipping an algorithmic decision to guardrail bounds.
//!
//! The benefit E[l(X_a)] - E[l(X̂)] is evaluated along two routes that are
//! algebraically identical but numerically distinct:
//!
//! * direct — expected loss before and after clipping, subtracted;
//! * identity form — E[(l(X_a)-l(X̲))·1(X_a ≤ X̲)] + E[(l(X_a)-l(X̄))·1(X_a ≥ X̄)].
//!
//! Returning both makes the identity itself testable. On a shared Monte
//! Carlo stream the two routes agree draw by draw, hence exactly; under
//! quadrature they agree within the accumulated error bounds.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimate::{estimate_mean, EstimateWithCi};
use crate::quadrature::quadrature_1d;
use crate::rng::RngStream;

use super::loss::LossSpec;
use super::model::{JointDecisionModel, JointDraw, MixedDensity, ModelDensity, Pdf, ScalarDist};

/// Clip `x_a` into `[lower, upper]`; infinite bounds encode absence.
///
/// Ties count as clipped, which leaves the value unchanged.
pub fn clip(x_a: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(lower <= upper) {
        return Err(Error::InvalidGuardrail { lower, upper });
    }
    Ok(if x_a < lower {
        lower
    } else if x_a > upper {
        upper
    } else {
        x_a
    })
}

/// How to evaluate an expectation-valued operation.
#[derive(Clone)]
pub enum EvalMethod<'a> {
    MonteCarlo { n: u64, stream: &'a RngStream, confidence: f64 },
    Quadrature { tol: f64 },
}

/// Benefit evaluated along both routes.
#[derive(Debug, Clone, Copy)]
pub struct BenefitEstimate {
    pub direct: EstimateWithCi,
    pub identity_form: EstimateWithCi,
}

/// Per-draw loss reduction, direct route.
pub(crate) fn draw_benefit_direct(loss: &LossSpec, d: &JointDraw) -> Result<f64> {
    let clipped = clip(d.x_a, d.lower, d.upper)?;
    Ok(loss.evaluate_cov(d.x_a, &d.w) - loss.evaluate_cov(clipped, &d.w))
}

/// Per-draw loss reduction, identity route. The loss is only evaluated at a
/// bound when the corresponding indicator fires, so infinite (absent) bounds
/// are never fed to the loss.
pub(crate) fn draw_benefit_identity(loss: &LossSpec, d: &JointDraw) -> Result<f64> {
    if !(d.lower <= d.upper) {
        return Err(Error::InvalidGuardrail { lower: d.lower, upper: d.upper });
    }
    let la = loss.evaluate_cov(d.x_a, &d.w);
    let mut total = 0.0;
    if d.x_a <= d.lower {
        total += la - loss.evaluate_cov(d.lower, &d.w);
    }
    if d.x_a >= d.upper {
        total += la - loss.evaluate_cov(d.upper, &d.w);
    }
    Ok(total)
}

fn mc_expectation<F>(f: F, n: u64, stream: &RngStream, confidence: f64) -> Result<EstimateWithCi>
where
    F: Fn(&mut rand_chacha::ChaCha12Rng) -> Result<f64> + Sync,
{
    // estimate_mean rejects non-finite draws; evaluation errors are stashed
    // and re-raised so the caller sees the original diagnostic.
    let stash = std::sync::Mutex::new(None::<Error>);
    let est = estimate_mean(
        |rng| match f(rng) {
            Ok(v) => v,
            Err(e) => {
                stash.lock().unwrap().get_or_insert(e);
                f64::NAN
            }
        },
        n,
        stream,
        confidence,
    );
    if let Some(e) = stash.into_inner().unwrap() {
        return Err(e);
    }
    est
}

/// Expected loss reduction from clipping, both routes.
pub fn benefit(model: &JointDecisionModel, loss: &LossSpec, method: &EvalMethod) -> Result<BenefitEstimate> {
    match method {
        EvalMethod::MonteCarlo { n, stream, confidence } => {
            let direct = mc_expectation(
                |rng| draw_benefit_direct(loss, &model.draw(rng)),
                *n,
                stream,
                *confidence,
            )?;
            let identity_form = mc_expectation(
                |rng| draw_benefit_identity(loss, &model.draw(rng)),
                *n,
                stream,
                *confidence,
            )?;
            Ok(BenefitEstimate { direct, identity_form })
        }
        EvalMethod::Quadrature { tol } => {
            let density = model.density.as_ref().ok_or_else(|| {
                Error::Configuration("quadrature benefit needs a model with densities".into())
            })?;
            quadrature_benefit(density, loss, *tol)
        }
    }
}

// ---------------------------------------------------------------------------
// Quadrature routes
// ---------------------------------------------------------------------------

fn pdf_integral(pdf: &Pdf, g: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<EstimateWithCi> {
    let lo = a.max(pdf.support.0);
    let hi = b.min(pdf.support.1);
    if !(lo < hi) {
        return Ok(EstimateWithCi::exact(0.0));
    }
    let density = pdf.density.clone();
    quadrature_1d(move |x| g(x) * density(x), lo, hi, tol)
}

/// Loss-weighted integral split at the minimizer, where quasiconvex losses
/// may have a kink that would otherwise degrade the error estimate.
fn pdf_loss_integral(
    pdf: &Pdf,
    g: impl Fn(f64) -> f64 + Copy,
    a: f64,
    b: f64,
    split: f64,
    tol: f64,
) -> Result<EstimateWithCi> {
    let lo = a.max(pdf.support.0);
    let hi = b.min(pdf.support.1);
    if !(lo < hi) {
        return Ok(EstimateWithCi::exact(0.0));
    }
    if split > lo && split < hi {
        let left = pdf_integral(pdf, g, lo, split, tol)?;
        let right = pdf_integral(pdf, g, split, hi, tol)?;
        Ok(left.add(&right))
    } else {
        pdf_integral(pdf, g, lo, hi, tol)
    }
}

/// E[l(X)] for X with density `pdf`, loss slice fixed at `w`.
fn expected_loss(pdf: &Pdf, loss: &LossSpec, w: &[f64], tol: f64) -> Result<EstimateWithCi> {
    pdf_loss_integral(
        pdf,
        |x| loss.evaluate_cov(x, w),
        f64::NEG_INFINITY,
        f64::INFINITY,
        loss.minimizer_cov(w),
        tol,
    )
}

/// E[l(clip(X, lower, upper))] with deterministic bounds.
fn expected_clipped_loss(
    pdf: &Pdf,
    loss: &LossSpec,
    w: &[f64],
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<EstimateWithCi> {
    let mut total = EstimateWithCi::exact(0.0);
    let m = loss.minimizer_cov(w);
    if lower.is_finite() {
        let mass = pdf_integral(pdf, |_| 1.0, f64::NEG_INFINITY, lower, tol)?;
        let at_bound = EstimateWithCi::exact(loss.evaluate_cov(lower, w));
        total = total.add(&mass.mul(&at_bound));
    }
    let mid = pdf_loss_integral(pdf, |x| loss.evaluate_cov(x, w), lower, upper, m, tol)?;
    total = total.add(&mid);
    if upper.is_finite() {
        let mass = pdf_integral(pdf, |_| 1.0, upper, f64::INFINITY, tol)?;
        let at_bound = EstimateWithCi::exact(loss.evaluate_cov(upper, w));
        total = total.add(&mass.mul(&at_bound));
    }
    Ok(total)
}

/// Identity-form benefit with deterministic bounds.
fn identity_form_fixed(
    pdf: &Pdf,
    loss: &LossSpec,
    w: &[f64],
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<EstimateWithCi> {
    let mut total = EstimateWithCi::exact(0.0);
    let m = loss.minimizer_cov(w);
    if lower.is_finite() {
        let at_bound = loss.evaluate_cov(lower, w);
        let term = pdf_loss_integral(
            pdf,
            |x| loss.evaluate_cov(x, w) - at_bound,
            f64::NEG_INFINITY,
            lower,
            m,
            tol,
        )?;
        total = total.add(&term);
    }
    if upper.is_finite() {
        let at_bound = loss.evaluate_cov(upper, w);
        let term =
            pdf_loss_integral(pdf, |x| loss.evaluate_cov(x, w) - at_bound, upper, f64::INFINITY, m, tol)?;
        total = total.add(&term);
    }
    Ok(total)
}

fn fixed_bounds_benefit(
    pdf: &Pdf,
    loss: &LossSpec,
    w: &[f64],
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<BenefitEstimate> {
    if !(lower <= upper) {
        return Err(Error::InvalidGuardrail { lower, upper });
    }
    let direct = expected_loss(pdf, loss, w, tol)?.sub(&expected_clipped_loss(pdf, loss, w, lower, upper, tol)?);
    let identity_form = identity_form_fixed(pdf, loss, w, lower, upper, tol)?;
    Ok(BenefitEstimate { direct, identity_form })
}

/// Expectation of `g(bound)` under a mixed bound distribution; `g` must
/// return an exact-or-bounded estimate per bound value. Atom locations at
/// infinity are passed through to `g` unchanged.
fn mixed_expectation(
    mixed: &MixedDensity,
    g: impl Fn(f64) -> Result<EstimateWithCi>,
    tol: f64,
) -> Result<EstimateWithCi> {
    let mut total = EstimateWithCi::exact(0.0);
    for &(location, mass) in &mixed.atoms {
        let val = g(location)?;
        total = total.add(&val.mul(&EstimateWithCi::exact(mass)));
    }
    if let Some(pdf) = &mixed.continuous {
        // Nested quadrature: inner estimates enter through their means, and
        // their error bounds are folded into the reported half-width via the
        // inner tolerance allowance.
        let inner_tol = tol * 0.1;
        let stash = std::sync::Mutex::new(None::<Error>);
        let density = pdf.density.clone();
        let outer = quadrature_1d(
            |h| match g(h) {
                Ok(v) => v.mean * density(h),
                Err(e) => {
                    stash.lock().unwrap().get_or_insert(e);
                    f64::NAN
                }
            },
            pdf.support.0,
            pdf.support.1,
            tol,
        );
        if let Some(e) = stash.into_inner().unwrap() {
            return Err(e);
        }
        let outer = outer?;
        let padded = EstimateWithCi { half_width: outer.half_width + inner_tol, ..outer };
        total = total.add(&padded);
    }
    Ok(total)
}

fn independent_one_sided_benefit(
    x_a: &Pdf,
    bound: &MixedDensity,
    loss: &LossSpec,
    is_upper: bool,
    tol: f64,
) -> Result<BenefitEstimate> {
    let inner_tol = tol * 0.1;
    let e_loss = expected_loss(x_a, loss, &[], inner_tol)?;

    let clipped_at = |b: f64| -> Result<EstimateWithCi> {
        let (lo, hi) = if is_upper { (f64::NEG_INFINITY, b) } else { (b, f64::INFINITY) };
        if b.is_infinite() {
            return Ok(e_loss);
        }
        expected_clipped_loss(x_a, loss, &[], lo, hi, inner_tol)
    };
    let direct = e_loss.sub(&mixed_expectation(bound, clipped_at, tol)?);

    let identity_at = |b: f64| -> Result<EstimateWithCi> {
        if b.is_infinite() {
            return Ok(EstimateWithCi::exact(0.0));
        }
        let (lo, hi) = if is_upper { (f64::NEG_INFINITY, b) } else { (b, f64::INFINITY) };
        identity_form_fixed(x_a, loss, &[], lo, hi, inner_tol)
    };
    let identity_form = mixed_expectation(bound, identity_at, tol)?;

    Ok(BenefitEstimate { direct, identity_form })
}

fn joint_one_sided_benefit(
    density: &Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    x_a_support: (f64, f64),
    bound_support: (f64, f64),
    loss: &LossSpec,
    is_upper: bool,
    tol: f64,
) -> Result<BenefitEstimate> {
    let inner_tol = tol * 0.05;
    let stash = std::sync::Mutex::new(None::<Error>);
    let run_outer = |inner: &dyn Fn(f64) -> Result<f64>| -> Result<EstimateWithCi> {
        let est = quadrature_1d(
            |h| match inner(h) {
                Ok(v) => v,
                Err(e) => {
                    stash.lock().unwrap().get_or_insert(e);
                    f64::NAN
                }
            },
            bound_support.0,
            bound_support.1,
            tol,
        )?;
        if let Some(e) = stash.lock().unwrap().take() {
            return Err(e);
        }
        Ok(EstimateWithCi { half_width: est.half_width + inner_tol, ..est })
    };

    let (s_lo, s_hi) = x_a_support;
    let m = loss.minimizer();

    // Inner slices split at the loss minimizer (possible kink).
    let slice = |g: &dyn Fn(f64) -> f64, a: f64, b: f64| -> Result<f64> {
        if !(a < b) {
            return Ok(0.0);
        }
        if m > a && m < b {
            Ok(quadrature_1d(g, a, m, inner_tol)?.mean + quadrature_1d(g, m, b, inner_tol)?.mean)
        } else {
            Ok(quadrature_1d(g, a, b, inner_tol)?.mean)
        }
    };

    let e_loss = run_outer(&|h| slice(&|x| loss.evaluate(x) * density(x, h), s_lo, s_hi))?;

    // E[l(clipped)]: the slice additionally splits at the bound value.
    let e_clipped = run_outer(&|h| {
        let cut = h.clamp(s_lo, s_hi);
        let (kept, clipped_side) = if is_upper { ((s_lo, cut), (cut, s_hi)) } else { ((cut, s_hi), (s_lo, cut)) };
        let kept_part = slice(&|x| loss.evaluate(x) * density(x, h), kept.0, kept.1)?;
        let mass = slice(&|x| density(x, h), clipped_side.0, clipped_side.1)?;
        Ok(kept_part + loss.evaluate(h) * mass)
    })?;

    let direct = e_loss.sub(&e_clipped);

    // Identity form: integrate (l(x_a) - l(h)) over the clipped side only.
    let identity_form = run_outer(&|h| {
        let cut = h.clamp(s_lo, s_hi);
        let (a, b) = if is_upper { (cut, s_hi) } else { (s_lo, cut) };
        let at_bound = loss.evaluate(h);
        slice(&|x| (loss.evaluate(x) - at_bound) * density(x, h), a, b)
    })?;

    Ok(BenefitEstimate { direct, identity_form })
}

fn quadrature_benefit(density: &ModelDensity, loss: &LossSpec, tol: f64) -> Result<BenefitEstimate> {
    match density {
        ModelDensity::FixedBounds { x_a, lower, upper } => {
            fixed_bounds_benefit(x_a, loss, &[], *lower, *upper, tol)
        }
        ModelDensity::IndependentUpper { x_a, upper } => {
            independent_one_sided_benefit(x_a, upper, loss, true, tol)
        }
        ModelDensity::IndependentLower { x_a, lower } => {
            independent_one_sided_benefit(x_a, lower, loss, false, tol)
        }
        ModelDensity::JointUpper { density, x_a_support, upper_support } => {
            joint_one_sided_benefit(density, *x_a_support, *upper_support, loss, true, tol)
        }
        ModelDensity::JointLower { density, x_a_support, lower_support } => {
            joint_one_sided_benefit(density, *x_a_support, *lower_support, loss, false, tol)
        }
        ModelDensity::CovariateMixture { points } => {
            let mut direct = EstimateWithCi::exact(0.0);
            let mut identity_form = EstimateWithCi::exact(0.0);
            for point in points {
                let pdf = point.x_a.pdf.as_ref().ok_or_else(|| {
                    Error::Configuration("covariate cell lacks a density".into())
                })?;
                let cell = fixed_bounds_benefit(pdf, loss, &point.w, point.lower, point.upper, tol)?;
                let weight = EstimateWithCi::exact(point.prob);
                direct = direct.add(&cell.direct.mul(&weight));
                identity_form = identity_form.add(&cell.identity_form.mul(&weight));
            }
            Ok(BenefitEstimate { direct, identity_form })
        }
    }
}

// ---------------------------------------------------------------------------
// Benefit curve
// ---------------------------------------------------------------------------

/// Benefit as a function of a deterministic upper bound swept over `grid`.
///
/// Under Monte Carlo every grid point reuses the same stream (common random
/// numbers), which makes neighboring points directly comparable.
pub fn benefit_curve(
    family: impl Fn(f64) -> Result<JointDecisionModel>,
    loss: &LossSpec,
    grid: &[f64],
    method: &EvalMethod,
) -> Result<Vec<(f64, BenefitEstimate)>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("benefit_curve needs a nonempty grid".into()));
    }
    if grid.windows(2).any(|p| p[0] > p[1]) {
        return Err(Error::InvalidArgument("benefit_curve grid must be sorted ascending".into()));
    }
    grid.iter()
        .map(|&x_h| {
            let model = family(x_h)?;
            Ok((x_h, benefit(&model, loss, method)?))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Tightness counterexample
// ---------------------------------------------------------------------------

/// Parameters of the heavy-tailed counterexample: a Gaussian decision
/// N(x*, sigma2) and an upper bound that is +inf with mass 1-epsilon and has
/// density 3*epsilon/(x-x*)^4 below x*-1.
#[derive(Debug, Clone, Copy)]
pub struct TightnessParams {
    pub a: f64,
    pub sigma2: f64,
    pub xstar: f64,
    pub epsilon: f64,
}

impl TightnessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.25) {
            return Err(Error::InvalidArgument(format!("need a >= 1/4, got {}", self.a)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2 < 1.5) {
            return Err(Error::InvalidArgument(format!("need 0 < sigma2 < 3/2, got {}", self.sigma2)));
        }
        if !(self.xstar < 1.0) {
            return Err(Error::InvalidArgument(format!("need xstar < 1, got {}", self.xstar)));
        }
        let cap = self.sigma2 / (6.0 * self.a);
        if !(self.epsilon > 0.0 && self.epsilon < cap) {
            return Err(Error::InvalidArgument(format!(
                "need epsilon in (0, sigma2/(6a)) = (0, {cap}), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Outcome of the tightness check: the sufficient-style inequality with the
/// constant multiplier holds, yet the clipped decision is strictly worse.
#[derive(Debug, Clone)]
pub struct TightnessOutcome {
    /// E[l(X_a) 1(X_a >= x*)], analytically sigma2/2.
    pub algorithmic_tail_loss: EstimateWithCi,
    /// E[l(X_h) 1(X_h <= x*)], analytically 3*epsilon.
    pub human_tail_loss: EstimateWithCi,
    /// algorithmic_tail_loss >= a * human_tail_loss.
    pub lhs_ratio_check: bool,
    /// Benefit of clipping; strictly negative here.
    pub benefit: BenefitEstimate,
}

/// The counterexample's joint model (decision independent of the bound).
pub fn tightness_model(params: &TightnessParams) -> Result<JointDecisionModel> {
    params.validate()?;
    let TightnessParams { sigma2, xstar, epsilon, .. } = *params;
    let sd = sigma2.sqrt();
    let xs = xstar;
    let eps = epsilon;
    let bound_sampler = move |rng: &mut rand_chacha::ChaCha12Rng| {
        if rng.random::<f64>() < 1.0 - eps {
            f64::INFINITY
        } else {
            // Conditional CDF on x <= x*-1 is |x - x*|^-3; invert it.
            let u: f64 = rng.random::<f64>();
            xs - u.powf(-1.0 / 3.0)
        }
    };
    let bound_density = MixedDensity {
        continuous: Some(Pdf::new(
            move |x| 3.0 * eps / (x - xs).powi(4),
            (f64::NEG_INFINITY, xs - 1.0),
        )),
        atoms: vec![(f64::INFINITY, 1.0 - eps)],
    };
    Ok(JointDecisionModel::independent_upper(
        ScalarDist::normal(xstar, sd),
        bound_sampler,
        Some(bound_density),
    ))
}

/// Evaluate the counterexample by quadrature.
pub fn tightness_counterexample(params: &TightnessParams, tol: f64) -> Result<TightnessOutcome> {
    params.validate()?;
    let model = tightness_model(params)?;
    let loss = LossSpec::quadratic(params.xstar);

    let xs = params.xstar;
    let eps = params.epsilon;
    let x_a_pdf = Pdf::normal(xs, params.sigma2.sqrt());
    let algorithmic_tail_loss = pdf_integral(&x_a_pdf, |x| (x - xs) * (x - xs), xs, f64::INFINITY, tol)?;
    let human_tail_loss = quadrature_1d(
        move |h| 3.0 * eps / (h - xs).powi(4) * (h - xs) * (h - xs),
        f64::NEG_INFINITY,
        xs - 1.0,
        tol,
    )?;

    let lhs_ratio_check = algorithmic_tail_loss.mean >= params.a * human_tail_loss.mean;
    let benefit = benefit(&model, &loss, &EvalMethod::Quadrature { tol })?;

    Ok(TightnessOutcome { algorithmic_tail_loss, human_tail_loss, lhs_ratio_check, benefit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_examples() {
        assert_eq!(clip(5.0, 1.0, 3.0).unwrap(), 3.0);
        assert_eq!(clip(2.0, 1.0, 3.0).unwrap(), 2.0);
        assert_eq!(clip(0.0, 1.0, 3.0).unwrap(), 1.0);
        assert!(clip(0.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn clip_is_idempotent() {
        for x in [-10.0, -1.0, 0.0, 1.5, 2.0, 7.0] {
            let once = clip(x, -1.0, 2.0).unwrap();
            assert_eq!(clip(once, -1.0, 2.0).unwrap(), once);
        }
    }

    #[test]
    fn absent_bounds_give_zero_benefit() {
        let model = JointDecisionModel::fixed_bounds(
            ScalarDist::normal(0.3, 1.2),
            f64::NEG_INFINITY,
            f64::INFINITY,
        )
        .unwrap();
        let loss = LossSpec::quadratic(0.0);
        let stream = RngStream::new(21);
        let mc = benefit(&model, &loss, &EvalMethod::MonteCarlo { n: 20_000, stream: &stream, confidence: 0.99 }).unwrap();
        assert_eq!(mc.direct.mean, 0.0);
        assert_eq!(mc.identity_form.mean, 0.0);
        let quad = benefit(&model, &loss, &EvalMethod::Quadrature { tol: 1e-9 }).unwrap();
        assert!(quad.direct.mean.abs() < 1e-8);
        assert!(quad.identity_form.mean.abs() < 1e-8);
    }

    #[test]
    fn symmetric_upper_bound_halves_the_second_moment() {
        // l(x) = x^2, X_a ~ N(0,1), upper bound 0: benefit is exactly 1/2.
        let model = JointDecisionModel::fixed_bounds(ScalarDist::normal(0.0, 1.0), f64::NEG_INFINITY, 0.0).unwrap();
        let loss = LossSpec::quadratic(0.0);
        let quad = benefit(&model, &loss, &EvalMethod::Quadrature { tol: 1e-10 }).unwrap();
        assert!((quad.direct.mean - 0.5).abs() < 1e-8, "{quad:?}");
        assert!((quad.identity_form.mean - 0.5).abs() < 1e-8);
        let stream = RngStream::new(22);
        let mc = benefit(&model, &loss, &EvalMethod::MonteCarlo { n: 200_000, stream: &stream, confidence: 0.99 }).unwrap();
        assert!((mc.direct.mean - 0.5).abs() <= mc.direct.half_width, "{mc:?}");
    }

    #[test]
    fn monte_carlo_routes_agree_exactly_on_a_shared_stream() {
        let model = JointDecisionModel::bivariate_gaussian_upper(0.2, 1.0, 0.0, 0.7, 0.4).unwrap();
        let loss = LossSpec::absolute(0.0);
        let stream = RngStream::new(23);
        let est = benefit(&model, &loss, &EvalMethod::MonteCarlo { n: 50_000, stream: &stream, confidence: 0.99 }).unwrap();
        assert_eq!(est.direct.mean.to_bits(), est.identity_form.mean.to_bits());
    }

    #[test]
    fn gaussian_upper_half_benefit_matches_frozen_oracle() {
        // Oracle: 1-D quadrature of (x^2 - 0.25) phi(x) over [0.5, inf).
        let oracle = quadrature_1d(
            |x| (x * x - 0.25) * crate::estimate::normal_pdf(x),
            0.5,
            f64::INFINITY,
            1e-10,
        )
        .unwrap();
        assert!((oracle.mean - 0.4074358174266399).abs() < 1e-9, "oracle = {}", oracle.mean);

        let model = JointDecisionModel::fixed_bounds(ScalarDist::normal(0.0, 1.0), f64::NEG_INFINITY, 0.5).unwrap();
        let loss = LossSpec::quadratic(0.0);
        let quad = benefit(&model, &loss, &EvalMethod::Quadrature { tol: 1e-9 }).unwrap();
        assert!((quad.direct.mean - oracle.mean).abs() < 1e-7);
        assert!((quad.identity_form.mean - oracle.mean).abs() < 1e-7);

        let stream = RngStream::new(24);
        let mc = benefit(&model, &loss, &EvalMethod::MonteCarlo { n: 400_000, stream: &stream, confidence: 0.99 }).unwrap();
        assert!((mc.direct.mean - oracle.mean).abs() <= mc.direct.half_width, "{mc:?}");
    }

    #[test]
    fn benefit_curve_peaks_at_the_minimizer() {
        let loss = LossSpec::quadratic(0.0);
        let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let curve = benefit_curve(
            |x_h| JointDecisionModel::fixed_bounds(ScalarDist::normal(0.0, 1.0), f64::NEG_INFINITY, x_h),
            &loss,
            &grid,
            &EvalMethod::Quadrature { tol: 1e-9 },
        )
        .unwrap();
        let peak = curve
            .iter()
            .max_by(|a, b| a.1.direct.mean.partial_cmp(&b.1.direct.mean).unwrap())
            .unwrap();
        assert_eq!(peak.0, 0.0);
    }

    #[test]
    fn benefit_curve_monte_carlo_matches_the_quadrature_oracle() {
        let loss = LossSpec::quadratic(0.0);
        let grid = [-1.0, 0.0, 1.0];
        let family =
            |x_h: f64| JointDecisionModel::fixed_bounds(ScalarDist::normal(0.0, 1.0), f64::NEG_INFINITY, x_h);
        let oracle = benefit_curve(family, &loss, &grid, &EvalMethod::Quadrature { tol: 1e-9 }).unwrap();
        let stream = RngStream::new(26);
        let mc = benefit_curve(
            family,
            &loss,
            &grid,
            &EvalMethod::MonteCarlo { n: 400_000, stream: &stream, confidence: 0.99 },
        )
        .unwrap();
        for ((_, q), (_, m)) in oracle.iter().zip(&mc) {
            assert!(
                (q.direct.mean - m.direct.mean).abs() <= m.direct.half_width + q.direct.half_width,
                "quadrature {q:?} vs MC {m:?}"
            );
        }
    }

    #[test]
    fn benefit_curve_at_infinite_bound_is_zero() {
        let loss = LossSpec::quadratic(0.0);
        let curve = benefit_curve(
            |x_h| JointDecisionModel::fixed_bounds(ScalarDist::normal(0.0, 1.0), f64::NEG_INFINITY, x_h),
            &loss,
            &[f64::INFINITY],
            &EvalMethod::Quadrature { tol: 1e-9 },
        )
        .unwrap();
        assert!(curve[0].1.direct.mean.abs() < 1e-8);
    }

    #[test]
    fn benefit_curve_rejects_empty_and_unsorted_grids() {
        let loss = LossSpec::quadratic(0.0);
        let family =
            |x_h: f64| JointDecisionModel::fixed_bounds(ScalarDist::normal(0.0, 1.0), f64::NEG_INFINITY, x_h);
        assert!(benefit_curve(family, &loss, &[], &EvalMethod::Quadrature { tol: 1e-8 }).is_err());
        assert!(benefit_curve(family, &loss, &[1.0, 0.0], &EvalMethod::Quadrature { tol: 1e-8 }).is_err());
    }

    #[test]
    fn tightness_rejects_out_of_range_parameters() {
        let bad = TightnessParams { a: 0.1, sigma2: 1.0, xstar: 0.0, epsilon: 0.5 };
        assert!(tightness_counterexample(&bad, 1e-6).is_err());
        let bad_eps = TightnessParams { a: 0.25, sigma2: 1.0, xstar: 0.0, epsilon: 0.9 };
        assert!(tightness_counterexample(&bad_eps, 1e-6).is_err());
    }

    #[test]
    fn tightness_counterexample_has_exact_tail_losses_and_negative_benefit() {
        let params = TightnessParams { a: 0.25, sigma2: 1.0, xstar: 0.0, epsilon: 0.5 };
        let outcome = tightness_counterexample(&params, 1e-7).unwrap();
        // sigma2/2 and 3 epsilon from the closed forms.
        assert!((outcome.algorithmic_tail_loss.mean - 0.5).abs() < 1e-6);
        assert!((outcome.human_tail_loss.mean - 1.5).abs() < 1e-5);
        assert!(outcome.lhs_ratio_check);
        // 0.5 >= 0.25 * 1.5 = 0.375 holds, yet clipping hurts:
        assert!(outcome.benefit.direct.mean <= -0.25 + 1e-3, "{:?}", outcome.benefit);
        // Proof's bound is loose; the actual value is near -1.073.
        assert!((outcome.benefit.direct.mean - outcome.benefit.identity_form.mean).abs() < 1e-4);
    }

    #[test]
    fn tightness_monte_carlo_agrees_with_quadrature() {
        let params = TightnessParams { a: 0.25, sigma2: 1.0, xstar: 0.0, epsilon: 0.5 };
        let outcome = tightness_counterexample(&params, 1e-7).unwrap();
        let model = tightness_model(&params).unwrap();
        let loss = LossSpec::quadratic(0.0);
        let stream = RngStream::new(25);
        let mc = benefit(&model, &loss, &EvalMethod::MonteCarlo { n: 2_000_000, stream: &stream, confidence: 0.99 }).unwrap();
        assert!(
            (mc.direct.mean - outcome.benefit.direct.mean).abs()
                <= mc.direct.half_width + outcome.benefit.direct.half_width,
            "mc {:?} quad {:?}",
            mc.direct,
            outcome.benefit.direct
        );
    }
}
