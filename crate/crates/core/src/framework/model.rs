//! Joint models for the algorithmic decision and its guardrail bounds.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

type SampleFn = Arc<dyn Fn(&mut ChaCha12Rng) -> f64 + Send + Sync>;
type DrawFn = Arc<dyn Fn(&mut ChaCha12Rng) -> JointDraw + Send + Sync>;
type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Density2Fn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type CovariateBoundFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Probability density with its support; either endpoint may be infinite.
#[derive(Clone)]
pub struct Pdf {
    pub density: DensityFn,
    pub support: (f64, f64),
}

impl Pdf {
    pub fn new(density: impl Fn(f64) -> f64 + Send + Sync + 'static, support: (f64, f64)) -> Self {
        Self { density: Arc::new(density), support }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        let inv = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
        // The density underflows to zero beyond ~39 sigma, so the support
        // is declared finite; integrators then never hunt for mass across
        // dead zones.
        Self::new(
            move |x| {
                let z = (x - mean) / sd;
                inv * (-0.5 * z * z).exp()
            },
            (mean - 40.0 * sd, mean + 40.0 * sd),
        )
    }

    pub fn uniform(a: f64, b: f64) -> Self {
        let h = 1.0 / (b - a);
        Self::new(move |x| if x >= a && x <= b { h } else { 0.0 }, (a, b))
    }
}

/// Continuous-plus-atoms distribution for a random bound. The continuous
/// density carries its own mass (it integrates to one minus the atom mass).
/// Atom locations may be infinite, encoding "no bound drawn".
#[derive(Clone)]
pub struct MixedDensity {
    pub continuous: Option<Pdf>,
    pub atoms: Vec<(f64, f64)>,
}

/// Scalar distribution that can always be sampled and, when a density is
/// attached, integrated against.
#[derive(Clone)]
pub struct ScalarDist {
    pub sampler: SampleFn,
    pub pdf: Option<Pdf>,
}

impl ScalarDist {
    pub fn from_sampler(sampler: impl Fn(&mut ChaCha12Rng) -> f64 + Send + Sync + 'static) -> Self {
        Self { sampler: Arc::new(sampler), pdf: None }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        Self {
            sampler: Arc::new(move |rng| {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }),
            pdf: Some(Pdf::normal(mean, sd)),
        }
    }

    pub fn uniform(a: f64, b: f64) -> Self {
        Self {
            sampler: Arc::new(move |rng| a + (b - a) * rng.random::<f64>()),
            pdf: Some(Pdf::uniform(a, b)),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        (self.sampler)(rng)
    }
}

/// One draw of the joint decision problem. Absent bounds are encoded as
/// -inf / +inf; `w` is empty when the model carries no covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDraw {
    pub x_a: f64,
    pub lower: f64,
    pub upper: f64,
    pub w: Vec<f64>,
}

/// Generator for one side of a guardrail.
#[derive(Clone)]
pub enum BoundGen {
    /// No bound on this side.
    Absent,
    Constant(f64),
    Random(ScalarDist),
    /// Bound as a function of the covariate vector.
    OfCovariate(CovariateBoundFn),
}

impl BoundGen {
    fn draw(&self, rng: &mut ChaCha12Rng, w: &[f64], absent: f64) -> f64 {
        match self {
            BoundGen::Absent => absent,
            BoundGen::Constant(v) => *v,
            BoundGen::Random(dist) => dist.sample(rng),
            BoundGen::OfCovariate(f) => f(w),
        }
    }
}

/// Optional lower/upper bound generators for the guardrail.
#[derive(Clone)]
pub struct GuardrailSpec {
    pub lower: BoundGen,
    pub upper: BoundGen,
}

impl GuardrailSpec {
    pub fn upper_only(upper: BoundGen) -> Self {
        Self { lower: BoundGen::Absent, upper }
    }

    pub fn lower_only(lower: BoundGen) -> Self {
        Self { lower, upper: BoundGen::Absent }
    }

    pub fn two_sided(lower: BoundGen, upper: BoundGen) -> Self {
        Self { lower, upper }
    }

    /// Draw the (lower, upper) pair for one decision epoch. Ordering is not
    /// validated here; every consumer of a draw rejects an inverted pair.
    pub fn draw(&self, rng: &mut ChaCha12Rng, w: &[f64]) -> (f64, f64) {
        (self.lower.draw(rng, w, f64::NEG_INFINITY), self.upper.draw(rng, w, f64::INFINITY))
    }

    /// Checked draw: errors when both sides are present and inverted.
    pub fn draw_checked(&self, rng: &mut ChaCha12Rng, w: &[f64]) -> Result<(f64, f64)> {
        let (lower, upper) = self.draw(rng, w);
        if lower <= upper {
            Ok((lower, upper))
        } else {
            Err(Error::InvalidGuardrail { lower, upper })
        }
    }
}

/// One covariate cell of a finite-mixture model.
#[derive(Clone)]
pub struct CovariatePoint {
    pub w: Vec<f64>,
    pub prob: f64,
    pub x_a: ScalarDist,
    pub lower: f64,
    pub upper: f64,
}

/// Density information enabling quadrature-based exact evaluation.
/// Shapes needing more than two integration dimensions are out of scope;
/// such models evaluate by Monte Carlo only.
#[derive(Clone)]
pub enum ModelDensity {
    /// Continuous decision, deterministic bounds.
    FixedBounds { x_a: Pdf, lower: f64, upper: f64 },
    /// Decision independent of a random upper bound (no lower bound).
    IndependentUpper { x_a: Pdf, upper: MixedDensity },
    /// Decision independent of a random lower bound (no upper bound).
    IndependentLower { x_a: Pdf, lower: MixedDensity },
    /// Joint continuous density f(x_a, upper); no lower bound.
    JointUpper { density: Density2Fn, x_a_support: (f64, f64), upper_support: (f64, f64) },
    /// Joint continuous density f(x_a, lower); no upper bound.
    JointLower { density: Density2Fn, x_a_support: (f64, f64), lower_support: (f64, f64) },
    /// Finite covariate mixture with per-cell decision density and bounds.
    CovariateMixture { points: Vec<CovariatePoint> },
}

/// Sampler (and optional densities) for the joint draw
/// (x_a, lower, upper, w).
#[derive(Clone)]
pub struct JointDecisionModel {
    sampler: DrawFn,
    pub density: Option<ModelDensity>,
    /// Asserts that the decision is independent of the bound draws.
    pub independent: bool,
}

impl JointDecisionModel {
    pub fn from_sampler(
        sampler: impl Fn(&mut ChaCha12Rng) -> JointDraw + Send + Sync + 'static,
        independent: bool,
    ) -> Self {
        Self { sampler: Arc::new(sampler), density: None, independent }
    }

    /// Decision clipped by a guardrail, no covariates. Densities are
    /// attached for the shapes quadrature supports: deterministic bounds,
    /// or a single random bound with a known density.
    pub fn with_guardrail(x_a: ScalarDist, guardrail: GuardrailSpec) -> Result<Self> {
        match (guardrail.lower.clone(), guardrail.upper.clone()) {
            (BoundGen::Absent | BoundGen::Constant(_), BoundGen::Absent | BoundGen::Constant(_)) => {
                let lower = match guardrail.lower {
                    BoundGen::Constant(v) => v,
                    _ => f64::NEG_INFINITY,
                };
                let upper = match guardrail.upper {
                    BoundGen::Constant(v) => v,
                    _ => f64::INFINITY,
                };
                Self::fixed_bounds(x_a, lower, upper)
            }
            (BoundGen::Absent, BoundGen::Random(dist)) => {
                let sampler = dist.sampler.clone();
                let density = dist
                    .pdf
                    .clone()
                    .map(|pdf| MixedDensity { continuous: Some(pdf), atoms: vec![] });
                Ok(Self::independent_upper(x_a, move |rng| sampler(rng), density))
            }
            (BoundGen::Random(dist), BoundGen::Absent) => {
                let sampler = dist.sampler.clone();
                let density = dist
                    .pdf
                    .clone()
                    .map(|pdf| MixedDensity { continuous: Some(pdf), atoms: vec![] });
                Ok(Self::independent_lower(x_a, move |rng| sampler(rng), density))
            }
            _ => {
                // General shape: sample-only model, no quadrature density.
                let x_sampler = x_a.sampler.clone();
                Ok(Self {
                    sampler: Arc::new(move |rng| {
                        let x_a = x_sampler(rng);
                        let (lower, upper) = guardrail.draw(rng, &[]);
                        JointDraw { x_a, lower, upper, w: Vec::new() }
                    }),
                    density: None,
                    independent: true,
                })
            }
        }
    }

    /// Continuous decision clipped by fixed bounds.
    pub fn fixed_bounds(x_a: ScalarDist, lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidGuardrail { lower, upper });
        }
        let density = x_a.pdf.clone().map(|pdf| ModelDensity::FixedBounds { x_a: pdf, lower, upper });
        let sampler = x_a.sampler.clone();
        Ok(Self {
            sampler: Arc::new(move |rng| JointDraw { x_a: sampler(rng), lower, upper, w: Vec::new() }),
            density,
            independent: true,
        })
    }

    /// Decision with an independent random upper bound.
    pub fn independent_upper(
        x_a: ScalarDist,
        bound_sampler: impl Fn(&mut ChaCha12Rng) -> f64 + Send + Sync + 'static,
        bound_density: Option<MixedDensity>,
    ) -> Self {
        let density = match (&x_a.pdf, bound_density) {
            (Some(pdf), Some(upper)) => Some(ModelDensity::IndependentUpper { x_a: pdf.clone(), upper }),
            _ => None,
        };
        let sampler = x_a.sampler.clone();
        Self {
            sampler: Arc::new(move |rng| JointDraw {
                x_a: sampler(rng),
                lower: f64::NEG_INFINITY,
                upper: bound_sampler(rng),
                w: Vec::new(),
            }),
            density,
            independent: true,
        }
    }

    /// Decision with an independent random lower bound.
    pub fn independent_lower(
        x_a: ScalarDist,
        bound_sampler: impl Fn(&mut ChaCha12Rng) -> f64 + Send + Sync + 'static,
        bound_density: Option<MixedDensity>,
    ) -> Self {
        let density = match (&x_a.pdf, bound_density) {
            (Some(pdf), Some(lower)) => Some(ModelDensity::IndependentLower { x_a: pdf.clone(), lower }),
            _ => None,
        };
        let sampler = x_a.sampler.clone();
        Self {
            sampler: Arc::new(move |rng| JointDraw {
                x_a: sampler(rng),
                lower: bound_sampler(rng),
                upper: f64::INFINITY,
                w: Vec::new(),
            }),
            density,
            independent: true,
        }
    }

    /// Correlated decision and upper bound, jointly bivariate Gaussian.
    pub fn bivariate_gaussian_upper(
        mean_a: f64,
        sd_a: f64,
        mean_h: f64,
        sd_h: f64,
        corr: f64,
    ) -> Result<Self> {
        if !(sd_a > 0.0 && sd_h > 0.0) {
            return Err(Error::InvalidArgument("standard deviations must be positive".into()));
        }
        if !(-1.0 < corr && corr < 1.0) {
            return Err(Error::InvalidArgument(format!("correlation must be in (-1,1), got {corr}")));
        }
        let det_norm = 1.0 - corr * corr;
        let density: Density2Fn = Arc::new(move |x, h| {
            let za = (x - mean_a) / sd_a;
            let zh = (h - mean_h) / sd_h;
            let q = (za * za - 2.0 * corr * za * zh + zh * zh) / det_norm;
            (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * sd_a * sd_h * det_norm.sqrt())
        });
        let cross = corr;
        Ok(Self {
            sampler: Arc::new(move |rng| {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let x_a = mean_a + sd_a * z1;
                let upper = mean_h + sd_h * (cross * z1 + (1.0 - cross * cross).sqrt() * z2);
                JointDraw { x_a, lower: f64::NEG_INFINITY, upper, w: Vec::new() }
            }),
            density: Some(ModelDensity::JointUpper {
                density,
                x_a_support: (mean_a - 40.0 * sd_a, mean_a + 40.0 * sd_a),
                upper_support: (mean_h - 40.0 * sd_h, mean_h + 40.0 * sd_h),
            }),
            independent: corr == 0.0,
        })
    }

    /// Finite covariate mixture: draw a cell by probability, then the
    /// decision within it. Bounds are deterministic per cell.
    pub fn covariate_mixture(points: Vec<CovariatePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("covariate mixture needs at least one point".into()));
        }
        let total: f64 = points.iter().map(|p| p.prob).sum();
        if (total - 1.0).abs() > 1e-9 || points.iter().any(|p| p.prob < 0.0) {
            return Err(Error::InvalidArgument(format!("cell probabilities must be nonnegative and sum to 1, got {total}")));
        }
        for p in &points {
            if !(p.lower <= p.upper) {
                return Err(Error::InvalidGuardrail { lower: p.lower, upper: p.upper });
            }
        }
        let cells = points.clone();
        let densities_ok = points.iter().all(|p| p.x_a.pdf.is_some());
        Ok(Self {
            sampler: Arc::new(move |rng| {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut chosen = &cells[cells.len() - 1];
                for cell in &cells {
                    acc += cell.prob;
                    if u < acc {
                        chosen = cell;
                        break;
                    }
                }
                JointDraw {
                    x_a: chosen.x_a.sample(rng),
                    lower: chosen.lower,
                    upper: chosen.upper,
                    w: chosen.w.clone(),
                }
            }),
            density: densities_ok.then_some(ModelDensity::CovariateMixture { points }),
            independent: false,
        })
    }

    pub fn draw(&self, rng: &mut ChaCha12Rng) -> JointDraw {
        (self.sampler)(rng)
    }
}

impl std::fmt::Debug for JointDecisionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JointDecisionModel")
            .field("has_density", &self.density.is_some())
            .field("independent", &self.independent)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn fixed_bounds_rejects_inverted_guardrail() {
        let err = JointDecisionModel::fixed_bounds(ScalarDist::normal(0.0, 1.0), 2.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidGuardrail { .. }));
    }

    #[test]
    fn bivariate_model_matches_requested_moments() {
        let model = JointDecisionModel::bivariate_gaussian_upper(1.0, 2.0, -0.5, 1.0, 0.6).unwrap();
        let mut rng = RngStream::new(5).rng();
        let n = 200_000;
        let (mut sa, mut sh, mut saa, mut shh, mut sah) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let d = model.draw(&mut rng);
            sa += d.x_a;
            sh += d.upper;
            saa += d.x_a * d.x_a;
            shh += d.upper * d.upper;
            sah += d.x_a * d.upper;
        }
        let nf = n as f64;
        let (ma, mh) = (sa / nf, sh / nf);
        let va = saa / nf - ma * ma;
        let vh = shh / nf - mh * mh;
        let cov = sah / nf - ma * mh;
        assert!((ma - 1.0).abs() < 0.02);
        assert!((mh + 0.5).abs() < 0.02);
        assert!((va - 4.0).abs() < 0.1);
        assert!((vh - 1.0).abs() < 0.03);
        assert!((cov / (va.sqrt() * vh.sqrt()) - 0.6).abs() < 0.02);
    }

    #[test]
    fn independence_flag_backed_by_correlation_diagnostic() {
        let model = JointDecisionModel::independent_upper(
            ScalarDist::normal(0.0, 1.0),
            |rng| {
                let z: f64 = StandardNormal.sample(rng);
                0.5 + z
            },
            None,
        );
        assert!(model.independent);
        let mut rng = RngStream::new(6).rng();
        let n = 100_000;
        let (mut sa, mut sh, mut saa, mut shh, mut sah) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let d = model.draw(&mut rng);
            sa += d.x_a;
            sh += d.upper;
            saa += d.x_a * d.x_a;
            shh += d.upper * d.upper;
            sah += d.x_a * d.upper;
        }
        let nf = n as f64;
        let corr = (sah / nf - sa / nf * sh / nf)
            / ((saa / nf - (sa / nf).powi(2)).sqrt() * (shh / nf - (sh / nf).powi(2)).sqrt());
        assert!(corr.abs() < 4.0 / (n as f64).sqrt() + 0.005, "corr = {corr}");
    }

    #[test]
    fn guardrail_spec_draws_and_validates_ordering() {
        let mut rng = RngStream::new(7).rng();
        // Constant two-sided pair is always ordered.
        let spec = GuardrailSpec::two_sided(BoundGen::Constant(-1.0), BoundGen::Constant(1.0));
        for _ in 0..10 {
            assert_eq!(spec.draw_checked(&mut rng, &[]).unwrap(), (-1.0, 1.0));
        }
        // Two random sides may invert; the checked draw reports it.
        let crossing = GuardrailSpec::two_sided(
            BoundGen::Random(ScalarDist::normal(0.5, 1.0)),
            BoundGen::Random(ScalarDist::normal(-0.5, 1.0)),
        );
        let mut saw_error = false;
        for _ in 0..200 {
            if crossing.draw_checked(&mut rng, &[]).is_err() {
                saw_error = true;
            }
        }
        assert!(saw_error);
        // Covariate-indexed bound follows its slice.
        let indexed = GuardrailSpec::upper_only(BoundGen::OfCovariate(Arc::new(|w| w[0] + 1.0)));
        assert_eq!(indexed.draw(&mut rng, &[2.0]), (f64::NEG_INFINITY, 3.0));
    }

    #[test]
    fn guardrail_model_shapes_expose_densities_where_supported() {
        let fixed = JointDecisionModel::with_guardrail(
            ScalarDist::normal(0.0, 1.0),
            GuardrailSpec::two_sided(BoundGen::Constant(-1.0), BoundGen::Constant(1.0)),
        )
        .unwrap();
        assert!(fixed.density.is_some());
        let random_upper = JointDecisionModel::with_guardrail(
            ScalarDist::normal(0.0, 1.0),
            GuardrailSpec::upper_only(BoundGen::Random(ScalarDist::normal(0.3, 0.5))),
        )
        .unwrap();
        assert!(matches!(random_upper.density, Some(ModelDensity::IndependentUpper { .. })));
        let general = JointDecisionModel::with_guardrail(
            ScalarDist::normal(0.0, 1.0),
            GuardrailSpec::two_sided(
                BoundGen::Random(ScalarDist::normal(-2.0, 0.1)),
                BoundGen::Random(ScalarDist::normal(2.0, 0.1)),
            ),
        )
        .unwrap();
        assert!(general.density.is_none());
        let mut rng = RngStream::new(8).rng();
        let d = general.draw(&mut rng);
        assert!(d.lower < d.upper);
    }

    #[test]
    fn covariate_mixture_validates_probabilities() {
        let bad = JointDecisionModel::covariate_mixture(vec![CovariatePoint {
            w: vec![1.0],
            prob: 0.4,
            x_a: ScalarDist::normal(0.0, 1.0),
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }]);
        assert!(bad.is_err());
    }
}
