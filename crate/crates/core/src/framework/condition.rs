//! Sufficient and necessary conditions for beneficial clipping.
//!
//! Each condition compares two expectations built from the loss, the
//! decision, the bounds, and the minimizer x*(w). The report carries both
//! sides with uncertainty and a three-way verdict: a Monte Carlo estimate
//! cannot certify a strict inequality, so overlapping intervals yield
//! `Inconclusive` rather than a coin-flip answer.

use crate::error::{Error, Result};
use crate::estimate::EstimateWithCi;
use crate::quadrature::quadrature_1d;
use crate::rng::RngStream;

use super::benefit::EvalMethod;
use super::loss::LossSpec;
use super::model::{JointDecisionModel, JointDraw, MixedDensity, ModelDensity, Pdf};

/// Which inequality to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionKind {
    SufficientOneSidedUpper,
    NecessaryOneSidedUpper,
    SufficientOneSidedLower,
    NecessaryOneSidedLower,
    SufficientTwoSided,
    NecessaryTwoSided,
    SufficientCovariate,
    NecessaryCovariate,
    IndependentReducedSufficient,
    IndependentReducedNecessary,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 10] = [
        ConditionKind::SufficientOneSidedUpper,
        ConditionKind::NecessaryOneSidedUpper,
        ConditionKind::SufficientOneSidedLower,
        ConditionKind::NecessaryOneSidedLower,
        ConditionKind::SufficientTwoSided,
        ConditionKind::NecessaryTwoSided,
        ConditionKind::SufficientCovariate,
        ConditionKind::NecessaryCovariate,
        ConditionKind::IndependentReducedSufficient,
        ConditionKind::IndependentReducedNecessary,
    ];

    pub fn is_sufficient(&self) -> bool {
        matches!(
            self,
            ConditionKind::SufficientOneSidedUpper
                | ConditionKind::SufficientOneSidedLower
                | ConditionKind::SufficientTwoSided
                | ConditionKind::SufficientCovariate
                | ConditionKind::IndependentReducedSufficient
        )
    }

    fn needs_independence(&self) -> bool {
        matches!(
            self,
            ConditionKind::IndependentReducedSufficient | ConditionKind::IndependentReducedNecessary
        )
    }

    /// Upper-only kinds must not see a finite lower bound, and vice versa.
    fn bound_requirement(&self) -> BoundRequirement {
        match self {
            ConditionKind::SufficientOneSidedUpper
            | ConditionKind::NecessaryOneSidedUpper
            | ConditionKind::IndependentReducedSufficient
            | ConditionKind::IndependentReducedNecessary => BoundRequirement::UpperOnly,
            ConditionKind::SufficientOneSidedLower | ConditionKind::NecessaryOneSidedLower => {
                BoundRequirement::LowerOnly
            }
            _ => BoundRequirement::Any,
        }
    }
}

impl std::fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ConditionKind::SufficientOneSidedUpper => "sufficient-one-sided-upper",
            ConditionKind::NecessaryOneSidedUpper => "necessary-one-sided-upper",
            ConditionKind::SufficientOneSidedLower => "sufficient-one-sided-lower",
            ConditionKind::NecessaryOneSidedLower => "necessary-one-sided-lower",
            ConditionKind::SufficientTwoSided => "sufficient-two-sided",
            ConditionKind::NecessaryTwoSided => "necessary-two-sided",
            ConditionKind::SufficientCovariate => "sufficient-covariate",
            ConditionKind::NecessaryCovariate => "necessary-covariate",
            ConditionKind::IndependentReducedSufficient => "independent-reduced-sufficient",
            ConditionKind::IndependentReducedNecessary => "independent-reduced-necessary",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoundRequirement {
    UpperOnly,
    LowerOnly,
    Any,
}

/// Three-way outcome of comparing the two sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Holds => write!(f, "holds"),
            Verdict::Fails => write!(f, "fails"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Evaluated sides of one condition.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub kind: ConditionKind,
    pub lhs: EstimateWithCi,
    pub rhs: EstimateWithCi,
    pub verdict: Verdict,
}

pub(crate) fn verdict_from(lhs: &EstimateWithCi, rhs: &EstimateWithCi) -> Verdict {
    if lhs.lower() >= rhs.upper() {
        Verdict::Holds
    } else if lhs.upper() < rhs.lower() {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    }
}

// ---------------------------------------------------------------------------
// Primitive expectation terms shared by all kinds
// ---------------------------------------------------------------------------

/// The expectations appearing on either side of the inequalities.
/// `m` is the per-draw minimizer x*(w).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Term {
    /// E[l(X_a) 1(X_a > m, upper <= m)]
    LossAboveStrictWithUpperLow,
    /// E[l(upper) 1(upper <= m)]
    UpperLossLow,
    /// E[l(X_a) 1(X_a >= m)]
    LossAboveWeak,
    /// E[l(X_a) 1(X_a > m)]
    LossAboveStrict,
    /// E[l(upper) 1(upper <= m, X_a > m)]
    UpperLossLowWithAboveStrict,
    /// E[l(X_a) 1(X_a < m, lower >= m)]
    LossBelowStrictWithLowerHigh,
    /// E[l(lower) 1(lower >= m)]
    LowerLossHigh,
    /// E[l(X_a) 1(X_a <= m)]
    LossBelowWeak,
    /// E[l(lower) 1(lower >= m, X_a < m)]
    LowerLossHighWithBelowStrict,
    /// E[l(X_a) 1(X_a >= m, upper <= m)]
    LossAboveWeakWithUpperLow,
    /// E[l(X_a) 1(X_a <= m, lower >= m)]
    LossBelowWeakWithLowerHigh,
    /// E[l(X_a)]
    LossTotal,
    /// E[l(upper) 1(upper <= m <= X_a)]
    UpperLossSandwich,
    /// E[l(lower) 1(X_a <= m <= lower)]
    LowerLossSandwich,
    /// P(upper <= m)
    ProbUpperLow,
    /// P(X_a > m)
    ProbAboveStrict,
}

/// Per-draw value of a term. Losses at bounds are only evaluated when the
/// gating indicator fires, so absent (infinite) bounds never reach the loss.
fn term_value(term: Term, loss: &LossSpec, d: &JointDraw) -> f64 {
    let m = loss.minimizer_cov(&d.w);
    let la = || loss.evaluate_cov(d.x_a, &d.w);
    let lu = || loss.evaluate_cov(d.upper, &d.w);
    let ll = || loss.evaluate_cov(d.lower, &d.w);
    match term {
        Term::LossAboveStrictWithUpperLow => {
            if d.x_a > m && d.upper <= m { la() } else { 0.0 }
        }
        Term::UpperLossLow => {
            if d.upper <= m { lu() } else { 0.0 }
        }
        Term::LossAboveWeak => {
            if d.x_a >= m { la() } else { 0.0 }
        }
        Term::LossAboveStrict => {
            if d.x_a > m { la() } else { 0.0 }
        }
        Term::UpperLossLowWithAboveStrict => {
            if d.upper <= m && d.x_a > m { lu() } else { 0.0 }
        }
        Term::LossBelowStrictWithLowerHigh => {
            if d.x_a < m && d.lower >= m { la() } else { 0.0 }
        }
        Term::LowerLossHigh => {
            if d.lower >= m { ll() } else { 0.0 }
        }
        Term::LossBelowWeak => {
            if d.x_a <= m { la() } else { 0.0 }
        }
        Term::LowerLossHighWithBelowStrict => {
            if d.lower >= m && d.x_a < m { ll() } else { 0.0 }
        }
        Term::LossAboveWeakWithUpperLow => {
            if d.x_a >= m && d.upper <= m { la() } else { 0.0 }
        }
        Term::LossBelowWeakWithLowerHigh => {
            if d.x_a <= m && d.lower >= m { la() } else { 0.0 }
        }
        Term::LossTotal => la(),
        Term::UpperLossSandwich => {
            if d.upper <= m && m <= d.x_a { lu() } else { 0.0 }
        }
        Term::LowerLossSandwich => {
            if d.x_a <= m && m <= d.lower { ll() } else { 0.0 }
        }
        Term::ProbUpperLow => {
            if d.upper <= m { 1.0 } else { 0.0 }
        }
        Term::ProbAboveStrict => {
            if d.x_a > m { 1.0 } else { 0.0 }
        }
    }
}

/// lhs and rhs of `kind` as compositions of primitive terms.
/// `Ratio(a, b)` is E[a]/E[b] with the empty-event convention 0/0 = 0.
#[derive(Debug, Clone)]
enum SideExpr {
    Sum(Vec<Term>),
    Ratio(Term, Term),
    Product(Term, Term),
}

fn sides_of(kind: ConditionKind) -> (SideExpr, SideExpr) {
    use ConditionKind::*;
    use Term::*;
    match kind {
        SufficientOneSidedUpper => (
            SideExpr::Sum(vec![LossAboveStrictWithUpperLow]),
            SideExpr::Sum(vec![UpperLossLow]),
        ),
        NecessaryOneSidedUpper => (
            SideExpr::Sum(vec![LossAboveWeak]),
            SideExpr::Sum(vec![UpperLossLowWithAboveStrict]),
        ),
        SufficientOneSidedLower => (
            SideExpr::Sum(vec![LossBelowStrictWithLowerHigh]),
            SideExpr::Sum(vec![LowerLossHigh]),
        ),
        NecessaryOneSidedLower => (
            SideExpr::Sum(vec![LossBelowWeak]),
            SideExpr::Sum(vec![LowerLossHighWithBelowStrict]),
        ),
        SufficientTwoSided | SufficientCovariate => (
            SideExpr::Sum(vec![LossAboveWeakWithUpperLow, LossBelowWeakWithLowerHigh]),
            SideExpr::Sum(vec![UpperLossLow, LowerLossHigh]),
        ),
        NecessaryTwoSided | NecessaryCovariate => (
            SideExpr::Sum(vec![LossTotal]),
            SideExpr::Sum(vec![UpperLossSandwich, LowerLossSandwich]),
        ),
        IndependentReducedSufficient => (
            SideExpr::Sum(vec![LossAboveStrict]),
            SideExpr::Ratio(UpperLossLow, ProbUpperLow),
        ),
        IndependentReducedNecessary => (
            SideExpr::Sum(vec![LossAboveWeak]),
            SideExpr::Product(UpperLossLow, ProbAboveStrict),
        ),
    }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Evaluate one condition on a model.
pub fn condition_report(
    model: &JointDecisionModel,
    loss: &LossSpec,
    kind: ConditionKind,
    method: &EvalMethod,
) -> Result<ConditionReport> {
    if kind.needs_independence() && !model.independent {
        return Err(Error::Configuration(format!(
            "{kind} requires a model asserting independence of the decision and the bounds"
        )));
    }
    let (lhs_expr, rhs_expr) = sides_of(kind);
    let (lhs, rhs) = match method {
        EvalMethod::MonteCarlo { n, stream, confidence } => {
            let eval = |expr: &SideExpr| mc_side(model, loss, kind, expr, *n, stream, *confidence);
            (eval(&lhs_expr)?, eval(&rhs_expr)?)
        }
        EvalMethod::Quadrature { tol } => {
            let density = model.density.as_ref().ok_or_else(|| {
                Error::Configuration("quadrature condition evaluation needs a model with densities".into())
            })?;
            let eval = |expr: &SideExpr| quad_side(density, loss, kind, expr, *tol);
            (eval(&lhs_expr)?, eval(&rhs_expr)?)
        }
    };
    let verdict = verdict_from(&lhs, &rhs);
    Ok(ConditionReport { kind, lhs, rhs, verdict })
}

fn check_draw_compatible(kind: ConditionKind, d: &JointDraw) -> Result<()> {
    match kind.bound_requirement() {
        BoundRequirement::UpperOnly if d.lower.is_finite() => Err(Error::Configuration(format!(
            "{kind} applies to upper-only guardrails but a draw has lower bound {}",
            d.lower
        ))),
        BoundRequirement::LowerOnly if d.upper.is_finite() => Err(Error::Configuration(format!(
            "{kind} applies to lower-only guardrails but a draw has upper bound {}",
            d.upper
        ))),
        _ => Ok(()),
    }
}

fn mc_term(
    model: &JointDecisionModel,
    loss: &LossSpec,
    kind: ConditionKind,
    term: Term,
    n: u64,
    stream: &RngStream,
    confidence: f64,
) -> Result<EstimateWithCi> {
    let stash = std::sync::Mutex::new(None::<Error>);
    let est = crate::estimate::estimate_mean(
        |rng| {
            let d = model.draw(rng);
            if let Err(e) = check_draw_compatible(kind, &d) {
                stash.lock().unwrap().get_or_insert(e);
                return f64::NAN;
            }
            term_value(term, loss, &d)
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

fn compose(expr: &SideExpr, mut term_of: impl FnMut(Term) -> Result<EstimateWithCi>) -> Result<EstimateWithCi> {
    match expr {
        SideExpr::Sum(terms) => {
            let mut total = EstimateWithCi::exact(0.0);
            for &t in terms {
                total = total.add(&term_of(t)?);
            }
            Ok(total)
        }
        SideExpr::Ratio(num, den) => {
            let num = term_of(*num)?;
            let den = term_of(*den)?;
            // Empty clipping event: the conditional expectation of nothing
            // is taken as zero (the bound never binds below x*).
            if num.mean == 0.0 && num.half_width == 0.0 && den.mean == 0.0 {
                return Ok(EstimateWithCi::exact(0.0));
            }
            Ok(num.div(&den))
        }
        SideExpr::Product(a, b) => {
            let a = term_of(*a)?;
            let b = term_of(*b)?;
            Ok(a.mul(&b))
        }
    }
}

fn mc_side(
    model: &JointDecisionModel,
    loss: &LossSpec,
    kind: ConditionKind,
    expr: &SideExpr,
    n: u64,
    stream: &RngStream,
    confidence: f64,
) -> Result<EstimateWithCi> {
    compose(expr, |t| mc_term(model, loss, kind, t, n, stream, confidence))
}

// ---------------------------------------------------------------------------
// Quadrature term evaluation
// ---------------------------------------------------------------------------

fn pdf_piece(pdf: &Pdf, g: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<EstimateWithCi> {
    let lo = a.max(pdf.support.0);
    let hi = b.min(pdf.support.1);
    if !(lo < hi) {
        return Ok(EstimateWithCi::exact(0.0));
    }
    let density = pdf.density.clone();
    quadrature_1d(move |x| g(x) * density(x), lo, hi, tol)
}

/// Term for a continuous decision with deterministic bounds on one slice.
fn fixed_term(
    term: Term,
    pdf: &Pdf,
    loss: &LossSpec,
    w: &[f64],
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<EstimateWithCi> {
    let m = loss.minimizer_cov(w);
    let l = |x: f64| loss.evaluate_cov(x, w);
    let loss_above = || pdf_piece(pdf, l, m, f64::INFINITY, tol);
    let loss_below = || pdf_piece(pdf, l, f64::NEG_INFINITY, m, tol);
    let prob_above = || pdf_piece(pdf, |_| 1.0, m, f64::INFINITY, tol);
    let prob_below = || pdf_piece(pdf, |_| 1.0, f64::NEG_INFINITY, m, tol);
    let upper_low = upper <= m;
    let lower_high = lower >= m;
    let zero = EstimateWithCi::exact(0.0);
    Ok(match term {
        Term::LossAboveStrictWithUpperLow | Term::LossAboveWeakWithUpperLow => {
            if upper_low { loss_above()? } else { zero }
        }
        Term::UpperLossLow => {
            if upper_low { EstimateWithCi::exact(l(upper)) } else { zero }
        }
        Term::LossAboveWeak | Term::LossAboveStrict => loss_above()?,
        Term::UpperLossLowWithAboveStrict | Term::UpperLossSandwich => {
            if upper_low { EstimateWithCi::exact(l(upper)).mul(&prob_above()?) } else { zero }
        }
        Term::LossBelowStrictWithLowerHigh | Term::LossBelowWeakWithLowerHigh => {
            if lower_high { loss_below()? } else { zero }
        }
        Term::LowerLossHigh => {
            if lower_high { EstimateWithCi::exact(l(lower)) } else { zero }
        }
        Term::LossBelowWeak => loss_below()?,
        Term::LowerLossHighWithBelowStrict | Term::LowerLossSandwich => {
            if lower_high { EstimateWithCi::exact(l(lower)).mul(&prob_below()?) } else { zero }
        }
        Term::LossTotal => pdf_piece(pdf, l, f64::NEG_INFINITY, f64::INFINITY, tol)?,
        Term::ProbUpperLow => EstimateWithCi::exact(if upper_low { 1.0 } else { 0.0 }),
        Term::ProbAboveStrict => prob_above()?,
    })
}

/// Mass and gated loss of a mixed bound distribution below/above the cut.
fn mixed_mass_and_loss(
    mixed: &MixedDensity,
    loss: &LossSpec,
    m: f64,
    below: bool,
    tol: f64,
) -> Result<(EstimateWithCi, EstimateWithCi)> {
    let mut mass = EstimateWithCi::exact(0.0);
    let mut gated = EstimateWithCi::exact(0.0);
    for &(location, weight) in &mixed.atoms {
        let fires = if below { location <= m } else { location >= m };
        if fires {
            mass = mass.add(&EstimateWithCi::exact(weight));
            gated = gated.add(&EstimateWithCi::exact(weight * loss.evaluate(location)));
        }
    }
    if let Some(pdf) = &mixed.continuous {
        let (a, b) = if below { (f64::NEG_INFINITY, m) } else { (m, f64::INFINITY) };
        mass = mass.add(&pdf_piece(pdf, |_| 1.0, a, b, tol)?);
        gated = gated.add(&pdf_piece(pdf, |x| loss.evaluate(x), a, b, tol)?);
    }
    Ok((mass, gated))
}

/// Term for a decision independent of one random bound (the other absent).
fn independent_term(
    term: Term,
    x_a: &Pdf,
    bound: &MixedDensity,
    is_upper: bool,
    loss: &LossSpec,
    tol: f64,
) -> Result<EstimateWithCi> {
    let m = loss.minimizer();
    let l = |x: f64| loss.evaluate(x);
    let loss_above = || pdf_piece(x_a, l, m, f64::INFINITY, tol);
    let loss_below = || pdf_piece(x_a, l, f64::NEG_INFINITY, m, tol);
    let prob_above = || pdf_piece(x_a, |_| 1.0, m, f64::INFINITY, tol);
    let prob_below = || pdf_piece(x_a, |_| 1.0, f64::NEG_INFINITY, m, tol);
    let zero = EstimateWithCi::exact(0.0);

    // Bound-side mass and gated loss; the absent side contributes nothing.
    let upper_stats = || -> Result<(EstimateWithCi, EstimateWithCi)> {
        if is_upper { mixed_mass_and_loss(bound, loss, m, true, tol) } else { Ok((zero, zero)) }
    };
    let lower_stats = || -> Result<(EstimateWithCi, EstimateWithCi)> {
        if is_upper { Ok((zero, zero)) } else { mixed_mass_and_loss(bound, loss, m, false, tol) }
    };

    Ok(match term {
        Term::LossAboveStrictWithUpperLow | Term::LossAboveWeakWithUpperLow => {
            loss_above()?.mul(&upper_stats()?.0)
        }
        Term::UpperLossLow => upper_stats()?.1,
        Term::LossAboveWeak | Term::LossAboveStrict => loss_above()?,
        Term::UpperLossLowWithAboveStrict | Term::UpperLossSandwich => {
            upper_stats()?.1.mul(&prob_above()?)
        }
        Term::LossBelowStrictWithLowerHigh | Term::LossBelowWeakWithLowerHigh => {
            loss_below()?.mul(&lower_stats()?.0)
        }
        Term::LowerLossHigh => lower_stats()?.1,
        Term::LossBelowWeak => loss_below()?,
        Term::LowerLossHighWithBelowStrict | Term::LowerLossSandwich => {
            lower_stats()?.1.mul(&prob_below()?)
        }
        Term::LossTotal => pdf_piece(x_a, l, f64::NEG_INFINITY, f64::INFINITY, tol)?,
        Term::ProbUpperLow => upper_stats()?.0,
        Term::ProbAboveStrict => prob_above()?,
    })
}

/// 2-D rectangle expectation against a joint density.
fn joint_rect(
    density: &std::sync::Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    x_range: (f64, f64),
    h_range: (f64, f64),
    g: impl Fn(f64, f64) -> f64 + Copy,
    tol: f64,
) -> Result<EstimateWithCi> {
    if !(x_range.0 < x_range.1 && h_range.0 < h_range.1) {
        return Ok(EstimateWithCi::exact(0.0));
    }
    let inner_tol = tol * 0.05;
    let stash = std::sync::Mutex::new(None::<Error>);
    let density = density.clone();
    let est = quadrature_1d(
        |h| {
            match quadrature_1d(|x| g(x, h) * density(x, h), x_range.0, x_range.1, inner_tol) {
                Ok(v) => v.mean,
                Err(e) => {
                    stash.lock().unwrap().get_or_insert(e);
                    f64::NAN
                }
            }
        },
        h_range.0,
        h_range.1,
        tol,
    );
    if let Some(e) = stash.into_inner().unwrap() {
        return Err(e);
    }
    let est = est?;
    Ok(EstimateWithCi { half_width: est.half_width + inner_tol, ..est })
}

/// Term for a joint continuous (decision, bound) density; `is_upper` says
/// which side the random bound guards. All events are axis-aligned.
fn joint_term(
    term: Term,
    density: &std::sync::Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    x_supp: (f64, f64),
    h_supp: (f64, f64),
    is_upper: bool,
    loss: &LossSpec,
    tol: f64,
) -> Result<EstimateWithCi> {
    let m = loss.minimizer();
    let above = (m.max(x_supp.0), x_supp.1);
    let below = (x_supp.0, m.min(x_supp.1));
    let bound_low = (h_supp.0, m.min(h_supp.1));
    let bound_high = (m.max(h_supp.0), h_supp.1);
    let zero = EstimateWithCi::exact(0.0);
    let la = |x: f64, _: f64| loss.evaluate(x);
    let lh = |_: f64, h: f64| loss.evaluate(h);
    let one = |_: f64, _: f64| 1.0;

    Ok(match term {
        Term::LossAboveStrictWithUpperLow | Term::LossAboveWeakWithUpperLow => {
            if is_upper { joint_rect(density, above, bound_low, la, tol)? } else { zero }
        }
        Term::UpperLossLow => {
            if is_upper { joint_rect(density, x_supp, bound_low, lh, tol)? } else { zero }
        }
        Term::LossAboveWeak | Term::LossAboveStrict => joint_rect(density, above, h_supp, la, tol)?,
        Term::UpperLossLowWithAboveStrict | Term::UpperLossSandwich => {
            if is_upper { joint_rect(density, above, bound_low, lh, tol)? } else { zero }
        }
        Term::LossBelowStrictWithLowerHigh | Term::LossBelowWeakWithLowerHigh => {
            if is_upper { zero } else { joint_rect(density, below, bound_high, la, tol)? }
        }
        Term::LowerLossHigh => {
            if is_upper { zero } else { joint_rect(density, x_supp, bound_high, lh, tol)? }
        }
        Term::LossBelowWeak => joint_rect(density, below, h_supp, la, tol)?,
        Term::LowerLossHighWithBelowStrict | Term::LowerLossSandwich => {
            if is_upper { zero } else { joint_rect(density, below, bound_high, lh, tol)? }
        }
        Term::LossTotal => joint_rect(density, x_supp, h_supp, la, tol)?,
        Term::ProbUpperLow => {
            if is_upper { joint_rect(density, x_supp, bound_low, one, tol)? } else { zero }
        }
        Term::ProbAboveStrict => joint_rect(density, above, h_supp, one, tol)?,
    })
}

fn quad_term(density: &ModelDensity, loss: &LossSpec, term: Term, tol: f64) -> Result<EstimateWithCi> {
    match density {
        ModelDensity::FixedBounds { x_a, lower, upper } => {
            fixed_term(term, x_a, loss, &[], *lower, *upper, tol)
        }
        ModelDensity::IndependentUpper { x_a, upper } => {
            independent_term(term, x_a, upper, true, loss, tol)
        }
        ModelDensity::IndependentLower { x_a, lower } => {
            independent_term(term, x_a, lower, false, loss, tol)
        }
        ModelDensity::JointUpper { density, x_a_support, upper_support } => {
            joint_term(term, density, *x_a_support, *upper_support, true, loss, tol)
        }
        ModelDensity::JointLower { density, x_a_support, lower_support } => {
            joint_term(term, density, *x_a_support, *lower_support, false, loss, tol)
        }
        ModelDensity::CovariateMixture { points } => {
            let mut total = EstimateWithCi::exact(0.0);
            for point in points {
                let pdf = point.x_a.pdf.as_ref().ok_or_else(|| {
                    Error::Configuration("covariate cell lacks a density".into())
                })?;
                let cell = fixed_term(term, pdf, loss, &point.w, point.lower, point.upper, tol)?;
                total = total.add(&cell.mul(&EstimateWithCi::exact(point.prob)));
            }
            Ok(total)
        }
    }
}

fn density_compatible(kind: ConditionKind, density: &ModelDensity) -> Result<()> {
    let requirement = kind.bound_requirement();
    let ok = match requirement {
        BoundRequirement::UpperOnly => !matches!(
            density,
            ModelDensity::IndependentLower { .. } | ModelDensity::JointLower { .. }
        ) && !has_finite_lower(density),
        BoundRequirement::LowerOnly => !matches!(
            density,
            ModelDensity::IndependentUpper { .. } | ModelDensity::JointUpper { .. }
        ) && !has_finite_upper(density),
        BoundRequirement::Any => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Configuration(format!("{kind} is incompatible with the bounds this model defines")))
    }
}

fn has_finite_lower(density: &ModelDensity) -> bool {
    match density {
        ModelDensity::FixedBounds { lower, .. } => lower.is_finite(),
        ModelDensity::CovariateMixture { points } => points.iter().any(|p| p.lower.is_finite()),
        ModelDensity::IndependentLower { .. } | ModelDensity::JointLower { .. } => true,
        _ => false,
    }
}

fn has_finite_upper(density: &ModelDensity) -> bool {
    match density {
        ModelDensity::FixedBounds { upper, .. } => upper.is_finite(),
        ModelDensity::CovariateMixture { points } => points.iter().any(|p| p.upper.is_finite()),
        ModelDensity::IndependentUpper { .. } | ModelDensity::JointUpper { .. } => true,
        _ => false,
    }
}

fn quad_side(
    density: &ModelDensity,
    loss: &LossSpec,
    kind: ConditionKind,
    expr: &SideExpr,
    tol: f64,
) -> Result<EstimateWithCi> {
    density_compatible(kind, density)?;
    compose(expr, |t| quad_term(density, loss, t, tol))
}
