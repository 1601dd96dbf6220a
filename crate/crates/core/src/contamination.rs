//! OLS prediction under response and covariate contamination, the biased
//! large-sample limits, and the guardrail conditions that bound the damage.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimate::{estimate_mean, z_value, EstimateWithCi};
use crate::framework::benefit::clip;
use crate::rng::RngStream;

type VecSampler = Arc<dyn Fn(&mut ChaCha12Rng) -> Vec<f64> + Send + Sync>;

// ---------------------------------------------------------------------------
// Domains
// ---------------------------------------------------------------------------

/// Covariate domain restricted to shapes whose linear extremes are exact:
/// axis-aligned boxes (coordinate-wise extremes) or finite point sets.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Points(Vec<Vec<f64>>),
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lower, .. } => lower.len(),
            Domain::Points(points) => points.first().map_or(0, |p| p.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::InvalidArgument("box bounds must be nonempty and same length".into()));
                }
                for (lo, hi) in lower.iter().zip(upper) {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(Error::InvalidArgument(format!("bad box coordinate [{lo}, {hi}]")));
                    }
                }
                Ok(())
            }
            Domain::Points(points) => {
                if points.is_empty() {
                    return Err(Error::InvalidArgument("point-set domain must be nonempty".into()));
                }
                let d = points[0].len();
                if d == 0 || points.iter().any(|p| p.len() != d) {
                    return Err(Error::InvalidArgument("points must share a positive dimension".into()));
                }
                Ok(())
            }
        }
    }

    /// Exact min and max of w -> w.beta over the domain.
    pub fn linear_extremes(&self, beta: &[f64]) -> Result<(f64, f64)> {
        if beta.len() != self.dim() {
            return Err(Error::InvalidArgument("beta dimension does not match the domain".into()));
        }
        match self {
            Domain::Box { lower, upper } => {
                let mut min = 0.0;
                let mut max = 0.0;
                for i in 0..beta.len() {
                    let (a, b) = (beta[i] * lower[i], beta[i] * upper[i]);
                    min += a.min(b);
                    max += a.max(b);
                }
                Ok((min, max))
            }
            Domain::Points(points) => {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for p in points {
                    let v = dot(p, beta);
                    min = min.min(v);
                    max = max.max(v);
                }
                Ok((min, max))
            }
        }
    }

    pub fn sample_uniform(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        match self {
            Domain::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
            Domain::Points(points) => {
                let i = rng.random_range(0..points.len());
                points[i].clone()
            }
        }
    }

    /// Deterministic evaluation grid: for boxes, the two vertices extremizing
    /// w.beta plus uniform fill from `stream`; for point sets, the points.
    pub fn evaluation_grid(&self, beta: &[f64], fill: usize, stream: &RngStream) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        match self {
            Domain::Box { lower, upper } => {
                let argmax: Vec<f64> = (0..beta.len())
                    .map(|i| if beta[i] >= 0.0 { upper[i] } else { lower[i] })
                    .collect();
                let argmin: Vec<f64> = (0..beta.len())
                    .map(|i| if beta[i] >= 0.0 { lower[i] } else { upper[i] })
                    .collect();
                let mut grid = vec![argmax, argmin];
                let mut rng = stream.rng();
                grid.extend((0..fill.saturating_sub(2)).map(|_| self.sample_uniform(&mut rng)));
                Ok(grid)
            }
            Domain::Points(points) => Ok(points.clone()),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Response contamination
// ---------------------------------------------------------------------------

/// Additive response corruption B.
#[derive(Clone)]
pub enum ResponseContamination {
    /// B = magnitude with probability propensity, else 0.
    TwoPoint { magnitude: f64, propensity: f64 },
    /// Arbitrary B with a declared finite mean.
    General { sampler: Arc<dyn Fn(&mut ChaCha12Rng) -> f64 + Send + Sync>, mean: f64 },
}

impl ResponseContamination {
    pub fn validate(&self) -> Result<()> {
        match self {
            ResponseContamination::TwoPoint { propensity, .. } => {
                if !(0.0..=1.0).contains(propensity) {
                    return Err(Error::InvalidArgument(format!("propensity must be in [0,1], got {propensity}")));
                }
                Ok(())
            }
            ResponseContamination::General { mean, .. } => {
                if !mean.is_finite() {
                    return Err(Error::InvalidArgument("contamination mean must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ResponseContamination::TwoPoint { magnitude, propensity } => magnitude * propensity,
            ResponseContamination::General { mean, .. } => *mean,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            ResponseContamination::TwoPoint { magnitude, propensity } => {
                if rng.random::<f64>() < *propensity {
                    *magnitude
                } else {
                    0.0
                }
            }
            ResponseContamination::General { sampler, .. } => sampler(rng),
        }
    }
}

impl std::fmt::Debug for ResponseContamination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResponseContamination::TwoPoint { magnitude, propensity } => f
                .debug_struct("TwoPoint")
                .field("magnitude", magnitude)
                .field("propensity", propensity)
                .finish(),
            ResponseContamination::General { mean, .. } => {
                f.debug_struct("General").field("mean", mean).finish()
            }
        }
    }
}

/// Linear response model on a bounded covariate domain.
#[derive(Debug, Clone)]
pub struct BoundedLinearModel {
    pub beta: Vec<f64>,
    pub domain: Domain,
    pub noise_sd: f64,
}

impl BoundedLinearModel {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.beta.len() != self.domain.dim() {
            return Err(Error::InvalidArgument("beta dimension does not match the domain".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }
}

/// Row-major regression dataset.
#[derive(Debug, Clone)]
pub struct ResponseDataset {
    pub design: Vec<f64>,
    pub responses: Vec<f64>,
    pub d: usize,
    pub n_contaminated: u64,
}

impl ResponseDataset {
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.d..(i + 1) * self.d]
    }
}

/// Draw (W_i, X_i) with X = W.beta + B + eps and W uniform on the domain.
pub fn simulate_response_contaminated(
    model: &BoundedLinearModel,
    cont: &ResponseContamination,
    n: u64,
    stream: &RngStream,
) -> Result<ResponseDataset> {
    model.validate()?;
    cont.validate()?;
    let d = model.beta.len();
    if n < d as u64 + 1 {
        return Err(Error::InvalidArgument(format!("need n >= dim(beta)+1 = {}, got {n}", d + 1)));
    }
    let mut rng = stream.rng();
    let mut design = Vec::with_capacity(n as usize * d);
    let mut responses = Vec::with_capacity(n as usize);
    let mut n_contaminated = 0u64;
    for _ in 0..n {
        let w = model.domain.sample_uniform(&mut rng);
        let b = cont.sample(&mut rng);
        if b != 0.0 {
            n_contaminated += 1;
        }
        let eps: f64 = if model.noise_sd > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            model.noise_sd * z
        } else {
            0.0
        };
        responses.push(dot(&w, &model.beta) + b + eps);
        design.extend_from_slice(&w);
    }
    Ok(ResponseDataset { design, responses, d, n_contaminated })
}

/// OLS fit with a heteroskedasticity-robust covariance for the estimates.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta_hat: Vec<f64>,
    /// Sandwich covariance of beta_hat (HC0).
    pub covariance: DMatrix<f64>,
}

impl OlsFit {
    pub fn predict(&self, w: &[f64]) -> f64 {
        dot(&self.beta_hat, w)
    }

    /// Standard error of the prediction at `w`.
    pub fn prediction_se(&self, w: &[f64]) -> f64 {
        let wv = DVector::from_column_slice(w);
        (wv.transpose() * &self.covariance * &wv)[(0, 0)].max(0.0).sqrt()
    }
}

/// Least squares on a dataset; errors on a singular design.
pub fn ols_fit(dataset: &ResponseDataset) -> Result<OlsFit> {
    let n = dataset.len();
    let d = dataset.d;
    if n < d + 1 {
        return Err(Error::InvalidArgument("too few rows for the design dimension".into()));
    }
    let mut xtx = DMatrix::zeros(d, d);
    let mut xty = DVector::zeros(d);
    for i in 0..n {
        let row = dataset.row(i);
        for a in 0..d {
            xty[a] += row[a] * dataset.responses[i];
            for b in 0..d {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    let inv = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateDesign("X'X is singular".into()))?;
    let cond_check = (&xtx * &inv - DMatrix::<f64>::identity(d, d)).norm();
    if !cond_check.is_finite() || cond_check > 1e-3 {
        return Err(Error::DegenerateDesign("X'X is numerically singular".into()));
    }
    let beta_hat = &inv * &xty;

    // HC0 sandwich: (X'X)^-1 [sum x x' e^2] (X'X)^-1.
    let mut meat = DMatrix::zeros(d, d);
    for i in 0..n {
        let row = dataset.row(i);
        let resid = dataset.responses[i] - dot(row, beta_hat.as_slice());
        let r2 = resid * resid;
        for a in 0..d {
            for b in 0..d {
                meat[(a, b)] += row[a] * row[b] * r2;
            }
        }
    }
    let covariance = &inv * meat * &inv;
    Ok(OlsFit { beta_hat: beta_hat.as_slice().to_vec(), covariance })
}

/// Fit then predict at `w`.
pub fn ols_predict(dataset: &ResponseDataset, w: &[f64]) -> Result<f64> {
    Ok(ols_fit(dataset)?.predict(w))
}

/// Large-sample behavior of the contaminated-response OLS prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePlim {
    /// Uniform prediction bias E[B].
    pub bias: f64,
    /// Asymptotic pointwise squared-error loss E[B]^2.
    pub asymptotic_loss: f64,
}

pub fn response_plim(cont: &ResponseContamination) -> Result<ResponsePlim> {
    cont.validate()?;
    let bias = cont.mean();
    Ok(ResponsePlim { bias, asymptotic_loss: bias * bias })
}

/// Guardrail thresholds for response contamination: one-sided for the
/// upward two-point model, two-sided for any finite-mean model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseGuardrailReport {
    pub holds: bool,
    pub threshold_upper: f64,
    pub threshold_lower: Option<f64>,
}

pub fn response_guardrail_condition(
    model: &BoundedLinearModel,
    cont: &ResponseContamination,
    upper: f64,
    lower: Option<f64>,
) -> Result<ResponseGuardrailReport> {
    model.validate()?;
    cont.validate()?;
    let (min_v, max_v) = model.domain.linear_extremes(&model.beta)?;
    match lower {
        None => {
            let ResponseContamination::TwoPoint { magnitude, propensity } = cont else {
                return Err(Error::Configuration(
                    "the one-sided condition is defined for the two-point upward contamination".into(),
                ));
            };
            if !(*magnitude > 0.0) {
                return Err(Error::Configuration("one-sided condition needs an upward bias".into()));
            }
            let threshold_upper = max_v - propensity * magnitude;
            Ok(ResponseGuardrailReport { holds: upper >= threshold_upper, threshold_upper, threshold_lower: None })
        }
        Some(lower) => {
            if !(lower <= upper) {
                return Err(Error::InvalidGuardrail { lower, upper });
            }
            let abs_bias = cont.mean().abs();
            let threshold_upper = max_v - abs_bias;
            let threshold_lower = min_v + abs_bias;
            Ok(ResponseGuardrailReport {
                holds: upper >= threshold_upper && lower <= threshold_lower,
                threshold_upper,
                threshold_lower: Some(threshold_lower),
            })
        }
    }
}

/// Pointwise losses on a covariate grid, asymptotic response case.
#[derive(Debug, Clone)]
pub struct MseRow {
    pub w: Vec<f64>,
    pub loss_algorithmic: f64,
    pub loss_safeguarded: f64,
}

/// Asymptotic response-case comparison: the prediction is w.beta + E[B]
/// exactly, so the losses are deterministic per grid point.
pub fn response_mse_compare(
    model: &BoundedLinearModel,
    cont: &ResponseContamination,
    bounds: (f64, f64),
    grid: &[Vec<f64>],
) -> Result<Vec<MseRow>> {
    model.validate()?;
    cont.validate()?;
    let (lower, upper) = bounds;
    if !(lower <= upper) {
        return Err(Error::InvalidGuardrail { lower, upper });
    }
    let bias = cont.mean();
    grid.iter()
        .map(|w| {
            if w.len() != model.beta.len() {
                return Err(Error::InvalidArgument("grid point dimension mismatch".into()));
            }
            let target = dot(w, &model.beta);
            let x_a = target + bias;
            let x_hat = clip(x_a, lower, upper)?;
            Ok(MseRow {
                w: w.clone(),
                loss_algorithmic: (x_a - target) * (x_a - target),
                loss_safeguarded: (x_hat - target) * (x_hat - target),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Covariate contamination
// ---------------------------------------------------------------------------

/// True covariate distribution with its declared second-moment matrix and,
/// when available, a bounded domain for threshold computations.
#[derive(Clone)]
pub struct CovariateDist {
    pub sampler: VecSampler,
    pub second_moment: DMatrix<f64>,
    pub domain: Option<Domain>,
}

impl CovariateDist {
    pub fn from_parts(
        sampler: impl Fn(&mut ChaCha12Rng) -> Vec<f64> + Send + Sync + 'static,
        second_moment: DMatrix<f64>,
        domain: Option<Domain>,
    ) -> Self {
        Self { sampler: Arc::new(sampler), second_moment, domain }
    }

    /// Independent standard normals (unbounded; no domain).
    pub fn standard_normal(d: usize) -> Self {
        Self {
            sampler: Arc::new(move |rng| (0..d).map(|_| StandardNormal.sample(rng)).collect()),
            second_moment: DMatrix::identity(d, d),
            domain: None,
        }
    }

    /// Uniform on a box, with the exact product second moments.
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let domain = Domain::Box { lower: lower.clone(), upper: upper.clone() };
        domain.validate()?;
        let d = lower.len();
        let mean: Vec<f64> = (0..d).map(|i| 0.5 * (lower[i] + upper[i])).collect();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = if i == j {
                    (lower[i] * lower[i] + lower[i] * upper[i] + upper[i] * upper[i]) / 3.0
                } else {
                    mean[i] * mean[j]
                };
            }
        }
        let dom = domain.clone();
        Ok(Self {
            sampler: Arc::new(move |rng| dom.sample_uniform(rng)),
            second_moment: m,
            domain: Some(domain),
        })
    }

    pub fn dim(&self) -> usize {
        self.second_moment.nrows()
    }
}

/// Measurement-error distribution with its declared second-moment matrix.
#[derive(Clone)]
pub struct ErrorDist {
    pub sampler: VecSampler,
    pub second_moment: DMatrix<f64>,
}

impl ErrorDist {
    pub fn from_parts(
        sampler: impl Fn(&mut ChaCha12Rng) -> Vec<f64> + Send + Sync + 'static,
        second_moment: DMatrix<f64>,
    ) -> Self {
        Self { sampler: Arc::new(sampler), second_moment }
    }

    /// No error at all.
    pub fn zero(d: usize) -> Self {
        Self { sampler: Arc::new(move |_| vec![0.0; d]), second_moment: DMatrix::zeros(d, d) }
    }

    /// Independent Gaussian error, sd per coordinate.
    pub fn gaussian(sds: Vec<f64>) -> Self {
        let d = sds.len();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = sds[i] * sds[i];
        }
        Self {
            sampler: Arc::new(move |rng| {
                (0..d)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(rng);
                        sds[i] * z
                    })
                    .collect()
            }),
            second_moment: m,
        }
    }

    /// U = s * direction with s in {-1, 0, +1}, P(s = 1) = P(s = -1) = tail_prob.
    pub fn symmetric_three_point(direction: Vec<f64>, tail_prob: f64) -> Result<Self> {
        if !(tail_prob > 0.0 && tail_prob <= 0.5) {
            return Err(Error::InvalidArgument(format!("tail probability must be in (0, 0.5], got {tail_prob}")));
        }
        let d = direction.len();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = 2.0 * tail_prob * direction[i] * direction[j];
            }
        }
        Ok(Self {
            sampler: Arc::new(move |rng| {
                let u = rng.random::<f64>();
                let s = if u < tail_prob {
                    1.0
                } else if u < 2.0 * tail_prob {
                    -1.0
                } else {
                    0.0
                };
                direction.iter().map(|&v| s * v).collect()
            }),
            second_moment: m,
        })
    }

    pub fn dim(&self) -> usize {
        self.second_moment.nrows()
    }
}

/// Which error contaminates the training covariates. The guardrail result
/// for prediction-time contamination needs a consistent training fit, which
/// a single error distribution with two-sided tails along beta cannot
/// deliver; the split makes that premise explicit and checkable.
#[derive(Clone, Default)]
pub enum TrainingContamination {
    /// Training covariates carry the same error as predictions.
    #[default]
    SameAsPrediction,
    /// Training covariates are clean.
    None,
    /// A separate training-error distribution.
    Custom(ErrorDist),
}

/// Errors-in-variables setup: observed covariate W = Z + U.
#[derive(Clone)]
pub struct CovariateContamination {
    pub z: CovariateDist,
    pub u: ErrorDist,
    pub training: TrainingContamination,
}

impl CovariateContamination {
    pub fn new(z: CovariateDist, u: ErrorDist) -> Result<Self> {
        if z.dim() != u.dim() {
            return Err(Error::InvalidArgument("covariate and error dimensions differ".into()));
        }
        Ok(Self { z, u, training: TrainingContamination::SameAsPrediction })
    }

    pub fn with_training(mut self, training: TrainingContamination) -> Result<Self> {
        if let TrainingContamination::Custom(e) = &training {
            if e.dim() != self.z.dim() {
                return Err(Error::InvalidArgument("training error dimension mismatch".into()));
            }
        }
        self.training = training;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    fn training_second_moment(&self) -> DMatrix<f64> {
        match &self.training {
            TrainingContamination::SameAsPrediction => self.u.second_moment.clone(),
            TrainingContamination::None => DMatrix::zeros(self.dim(), self.dim()),
            TrainingContamination::Custom(e) => e.second_moment.clone(),
        }
    }

    fn sample_training_error(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        match &self.training {
            TrainingContamination::SameAsPrediction => (self.u.sampler)(rng),
            TrainingContamination::None => vec![0.0; self.dim()],
            TrainingContamination::Custom(e) => (e.sampler)(rng),
        }
    }

    /// Empirical check of the declared second-moment matrices: positive
    /// definiteness of Sigma1, positive semidefiniteness of Sigma2, and
    /// agreement of sample moments with the declarations.
    pub fn validate_moments(&self, n: u64, stream: &RngStream, tol: f64) -> Result<()> {
        let d = self.dim();
        let eig1 = self.z.second_moment.clone().symmetric_eigen().eigenvalues;
        if eig1.iter().any(|&e| e <= tol) {
            return Err(Error::Configuration("Sigma1 is not positive definite".into()));
        }
        let eig2 = self.u.second_moment.clone().symmetric_eigen().eigenvalues;
        if eig2.iter().any(|&e| e < -tol) {
            return Err(Error::Configuration("Sigma2 is not positive semidefinite".into()));
        }
        let mut rng = stream.rng();
        let mut m1 = DMatrix::zeros(d, d);
        let mut m2 = DMatrix::zeros(d, d);
        for _ in 0..n {
            let z = (self.z.sampler)(&mut rng);
            let u = (self.u.sampler)(&mut rng);
            for a in 0..d {
                for b in 0..d {
                    m1[(a, b)] += z[a] * z[b];
                    m2[(a, b)] += u[a] * u[b];
                }
            }
        }
        m1 /= n as f64;
        m2 /= n as f64;
        let slack = 6.0 / (n as f64).sqrt();
        let rel1 = (&m1 - &self.z.second_moment).norm() / (1.0 + self.z.second_moment.norm());
        let rel2 = (&m2 - &self.u.second_moment).norm() / (1.0 + self.u.second_moment.norm());
        if rel1 > slack + tol || rel2 > slack + tol {
            return Err(Error::Configuration(format!(
                "sample second moments disagree with declarations (rel errors {rel1:.4}, {rel2:.4})"
            )));
        }
        Ok(())
    }
}

/// Probability limit of the training fit and whether it is consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePlim {
    pub coefficients: Vec<f64>,
    pub consistent: bool,
}

/// plim beta_hat = (I - (Sigma1 + Sigma2)^-1 Sigma2) beta; consistent iff
/// Sigma2 beta = 0.
pub fn covariate_plim(cont: &CovariateContamination, beta: &[f64]) -> Result<CovariatePlim> {
    let d = cont.dim();
    if beta.len() != d {
        return Err(Error::InvalidArgument("beta dimension mismatch".into()));
    }
    let sigma2 = cont.training_second_moment();
    let total = &cont.z.second_moment + &sigma2;
    let inv = total
        .try_inverse()
        .ok_or_else(|| Error::DegenerateDesign("Sigma1 + Sigma2 is singular".into()))?;
    let beta_v = DVector::from_column_slice(beta);
    let coefficients = (DMatrix::identity(d, d) - inv * &sigma2) * &beta_v;
    let drift = (&sigma2 * &beta_v).norm();
    Ok(CovariatePlim {
        coefficients: coefficients.as_slice().to_vec(),
        consistent: drift <= 1e-9 * (1.0 + sigma2.norm() * beta_v.norm()),
    })
}

/// Training data under covariate contamination: W = Z + U_train observed,
/// X = Z.beta + eps.
pub fn simulate_covariate_contaminated(
    cont: &CovariateContamination,
    beta: &[f64],
    noise_sd: f64,
    n: u64,
    stream: &RngStream,
) -> Result<ResponseDataset> {
    let d = cont.dim();
    if beta.len() != d {
        return Err(Error::InvalidArgument("beta dimension mismatch".into()));
    }
    if n < d as u64 + 1 {
        return Err(Error::InvalidArgument("too few rows for the dimension".into()));
    }
    let mut rng = stream.rng();
    let mut design = Vec::with_capacity(n as usize * d);
    let mut responses = Vec::with_capacity(n as usize);
    let mut n_contaminated = 0u64;
    for _ in 0..n {
        let z = (cont.z.sampler)(&mut rng);
        let u = cont.sample_training_error(&mut rng);
        if u.iter().any(|&v| v != 0.0) {
            n_contaminated += 1;
        }
        let eps: f64 = if noise_sd > 0.0 {
            let g: f64 = StandardNormal.sample(&mut rng);
            noise_sd * g
        } else {
            0.0
        };
        responses.push(dot(&z, beta) + eps);
        design.extend(z.iter().zip(&u).map(|(a, b)| a + b));
    }
    Ok(ResponseDataset { design, responses, d, n_contaminated })
}

/// Guardrail thresholds for prediction-time covariate contamination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateGuardrailReport {
    pub holds: bool,
    pub threshold_lower: f64,
    pub threshold_upper: f64,
    /// Empirical tail frequencies backing the (b, p) certification.
    pub tail_up: f64,
    pub tail_down: f64,
}

/// Check the two-sided bound condition
///   lower <= min_z z.beta + sqrt(p/(1-p)) b,
///   upper >= max_z z.beta - sqrt(p/(1-p)) b,
/// after certifying P(U.beta >= b) >= p and P(U.beta <= -b) >= p against
/// the prediction-error sampler and requiring a consistent training fit
/// (training error second moment annihilating beta).
pub fn covariate_guardrail_condition(
    cont: &CovariateContamination,
    beta: &[f64],
    bounds: (f64, f64),
    b: f64,
    p: f64,
    stream: &RngStream,
) -> Result<CovariateGuardrailReport> {
    let d = cont.dim();
    if beta.len() != d {
        return Err(Error::InvalidArgument("beta dimension mismatch".into()));
    }
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::HypothesisViolated(format!("tail probability p must lie in (0, 0.5), got {p}")));
    }
    if !(b > 0.0) {
        return Err(Error::HypothesisViolated(format!("tail magnitude b must be positive, got {b}")));
    }
    let (lower, upper) = bounds;
    if !(lower <= upper) {
        return Err(Error::InvalidGuardrail { lower, upper });
    }

    // Consistent-training premise: the training error must not load on beta.
    let sigma2_train = cont.training_second_moment();
    let drift = (&sigma2_train * DVector::from_column_slice(beta)).norm();
    if drift > 1e-9 * (1.0 + sigma2_train.norm()) {
        return Err(Error::HypothesisViolated(format!(
            "training error second moment loads on beta (|Sigma2 beta| = {drift:.3e}); the training fit is inconsistent"
        )));
    }

    // Certify (b, p) against the prediction-error tails. The slack is set
    // at a one-in-a-million level so that batches of certifications do not
    // false-alarm, while a genuinely deficient tail still fails fast.
    let n_cert: u64 = 200_000;
    let mut rng = stream.rng();
    let mut up = 0u64;
    let mut down = 0u64;
    for _ in 0..n_cert {
        let u = (cont.u.sampler)(&mut rng);
        let v = dot(&u, beta);
        if v >= b {
            up += 1;
        }
        if v <= -b {
            down += 1;
        }
    }
    let tail_up = up as f64 / n_cert as f64;
    let tail_down = down as f64 / n_cert as f64;
    let slack = z_value(1.0 - 1e-6) * (p * (1.0 - p) / n_cert as f64).sqrt();
    if tail_up < p - slack || tail_down < p - slack {
        return Err(Error::HypothesisViolated(format!(
            "(b, p) = ({b}, {p}) not certified: empirical tails ({tail_up:.4}, {tail_down:.4})"
        )));
    }

    let domain = cont.z.domain.as_ref().ok_or_else(|| {
        Error::Configuration("covariate guardrail condition needs a bounded covariate domain".into())
    })?;
    let (min_v, max_v) = domain.linear_extremes(beta)?;
    let margin = (p / (1.0 - p)).sqrt() * b;
    let threshold_lower = min_v + margin;
    let threshold_upper = max_v - margin;
    Ok(CovariateGuardrailReport {
        holds: lower <= threshold_lower && upper >= threshold_upper,
        threshold_lower,
        threshold_upper,
        tail_up,
        tail_down,
    })
}

/// Paired Monte Carlo comparison of expected losses in the consistent-fit
/// limit: prediction W.beta versus its clipped version, loss against Z.beta.
#[derive(Debug, Clone, Copy)]
pub struct CovariateMseComparison {
    pub loss_algorithmic: EstimateWithCi,
    pub loss_safeguarded: EstimateWithCi,
    /// Paired estimate of loss_algorithmic - loss_safeguarded.
    pub improvement: EstimateWithCi,
}

pub fn covariate_mse_compare(
    cont: &CovariateContamination,
    beta: &[f64],
    bounds: (f64, f64),
    n: u64,
    stream: &RngStream,
    confidence: f64,
) -> Result<CovariateMseComparison> {
    let (lower, upper) = bounds;
    if !(lower <= upper) {
        return Err(Error::InvalidGuardrail { lower, upper });
    }
    if beta.len() != cont.dim() {
        return Err(Error::InvalidArgument("beta dimension mismatch".into()));
    }
    let losses = |rng: &mut ChaCha12Rng| -> (f64, f64) {
        let z = (cont.z.sampler)(rng);
        let u = (cont.u.sampler)(rng);
        let target = dot(&z, beta);
        let x_a = target + dot(&u, beta);
        let x_hat = if x_a < lower {
            lower
        } else if x_a > upper {
            upper
        } else {
            x_a
        };
        ((x_a - target) * (x_a - target), (x_hat - target) * (x_hat - target))
    };
    let loss_algorithmic = estimate_mean(|rng| losses(rng).0, n, stream, confidence)?;
    let loss_safeguarded = estimate_mean(|rng| losses(rng).1, n, stream, confidence)?;
    let improvement = estimate_mean(
        |rng| {
            let (a, s) = losses(rng);
            a - s
        },
        n,
        stream,
        confidence,
    )?;
    Ok(CovariateMseComparison { loss_algorithmic, loss_safeguarded, improvement })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box_model() -> BoundedLinearModel {
        BoundedLinearModel {
            beta: vec![1.0, 2.0],
            domain: Domain::Box { lower: vec![0.0, 0.0], upper: vec![1.0, 1.0] },
            noise_sd: 0.0,
        }
    }

    #[test]
    fn box_extremes_by_coordinate() {
        let model = unit_box_model();
        let (min_v, max_v) = model.domain.linear_extremes(&model.beta).unwrap();
        assert_eq!(min_v, 0.0);
        assert_eq!(max_v, 3.0);
        let neg = Domain::Box { lower: vec![-1.0, 0.0], upper: vec![2.0, 1.0] };
        let (lo, hi) = neg.linear_extremes(&[-2.0, 3.0]).unwrap();
        assert_eq!(lo, -4.0);
        assert_eq!(hi, 5.0);
    }

    #[test]
    fn point_set_extremes_scan() {
        let dom = Domain::Points(vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![1.0, 1.0]]);
        let (lo, hi) = dom.linear_extremes(&[1.0, 1.0]).unwrap();
        assert_eq!(lo, 1.0);
        assert_eq!(hi, 2.0);
    }

    #[test]
    fn uncontaminated_when_propensity_zero() {
        let model = unit_box_model();
        let cont = ResponseContamination::TwoPoint { magnitude: 5.0, propensity: 0.0 };
        let data = simulate_response_contaminated(&model, &cont, 500, &RngStream::new(61)).unwrap();
        assert_eq!(data.n_contaminated, 0);
        for i in 0..data.len() {
            assert_eq!(data.responses[i], dot(data.row(i), &model.beta));
        }
    }

    #[test]
    fn zero_magnitude_is_indistinguishable_from_clean() {
        let model = unit_box_model();
        let cont = ResponseContamination::TwoPoint { magnitude: 0.0, propensity: 0.7 };
        let data = simulate_response_contaminated(&model, &cont, 500, &RngStream::new(62)).unwrap();
        for i in 0..data.len() {
            assert_eq!(data.responses[i], dot(data.row(i), &model.beta));
        }
    }

    #[test]
    fn contaminated_fraction_matches_propensity() {
        let model = unit_box_model();
        let cont = ResponseContamination::TwoPoint { magnitude: 1.0, propensity: 0.3 };
        let n = 100_000;
        let data = simulate_response_contaminated(&model, &cont, n, &RngStream::new(63)).unwrap();
        let frac = data.n_contaminated as f64 / n as f64;
        assert!((frac - 0.3).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn noiseless_clean_fit_is_exact() {
        let model = unit_box_model();
        let cont = ResponseContamination::TwoPoint { magnitude: 0.0, propensity: 0.0 };
        let data = simulate_response_contaminated(&model, &cont, 200, &RngStream::new(64)).unwrap();
        let fit = ols_fit(&data).unwrap();
        assert!((fit.beta_hat[0] - 1.0).abs() < 1e-10);
        assert!((fit.beta_hat[1] - 2.0).abs() < 1e-10);
        assert!((fit.predict(&[0.5, 0.5]) - 1.5).abs() < 1e-10);
    }

    #[test]
    fn singular_design_is_rejected() {
        // Second column identically zero.
        let data = ResponseDataset {
            design: vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0],
            responses: vec![1.0, 2.0, 3.0],
            d: 2,
            n_contaminated: 0,
        };
        assert!(matches!(ols_fit(&data), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn response_contamination_biases_predictions_by_the_mean() {
        // A constant regressor (degenerate box coordinate) carries the bias,
        // which is what makes the prediction shift uniform in w.
        let model = BoundedLinearModel {
            beta: vec![0.5, 1.0, 2.0],
            domain: Domain::Box { lower: vec![1.0, 0.0, 0.0], upper: vec![1.0, 1.0, 1.0] },
            noise_sd: 0.3,
        };
        let cont = ResponseContamination::TwoPoint { magnitude: 1.0, propensity: 0.5 };
        let data = simulate_response_contaminated(&model, &cont, 400_000, &RngStream::new(65)).unwrap();
        let fit = ols_fit(&data).unwrap();
        let grid = model.domain.evaluation_grid(&model.beta, 20, &RngStream::new(66)).unwrap();
        for w in &grid {
            let target = dot(w, &model.beta) + 0.5;
            let se = fit.prediction_se(w).max(1e-6);
            assert!(
                (fit.predict(w) - target).abs() <= 5.0 * se + 0.02,
                "prediction off at {w:?}: {} vs {target}",
                fit.predict(w)
            );
        }
    }

    #[test]
    fn response_plim_examples() {
        let p = response_plim(&ResponseContamination::TwoPoint { magnitude: 1.0, propensity: 0.5 }).unwrap();
        assert_eq!(p.bias, 0.5);
        assert_eq!(p.asymptotic_loss, 0.25);
        let none = response_plim(&ResponseContamination::TwoPoint { magnitude: 3.0, propensity: 0.0 }).unwrap();
        assert_eq!(none.bias, 0.0);
        let neg = ResponseContamination::General {
            sampler: Arc::new(|rng| if rng.random::<f64>() < 0.5 { -2.0 } else { 0.0 }),
            mean: -1.0,
        };
        let plim = response_plim(&neg).unwrap();
        assert_eq!(plim.bias, -1.0);
        assert_eq!(plim.asymptotic_loss, 1.0);
        // Sample-mean cross-check of the declared mean.
        let mut rng = RngStream::new(67).rng();
        let mean: f64 = (0..200_000).map(|_| neg.sample(&mut rng)).sum::<f64>() / 200_000.0;
        assert!((mean + 1.0).abs() < 0.01);
    }

    #[test]
    fn one_sided_condition_threshold() {
        let model = unit_box_model();
        let cont = ResponseContamination::TwoPoint { magnitude: 1.0, propensity: 0.5 };
        let report = response_guardrail_condition(&model, &cont, 2.6, None).unwrap();
        assert_eq!(report.threshold_upper, 2.5);
        assert!(report.holds);
        let tight = response_guardrail_condition(&model, &cont, 2.4, None).unwrap();
        assert!(!tight.holds);
        // An infinite cap holds trivially and the clip is a no-op.
        let infinite = response_guardrail_condition(&model, &cont, f64::INFINITY, None).unwrap();
        assert!(infinite.holds);
    }

    #[test]
    fn two_sided_condition_thresholds() {
        let model = unit_box_model();
        let cont = ResponseContamination::TwoPoint { magnitude: 1.0, propensity: 0.5 };
        let report = response_guardrail_condition(&model, &cont, 2.6, Some(0.4)).unwrap();
        assert_eq!(report.threshold_upper, 2.5);
        assert_eq!(report.threshold_lower, Some(0.5));
        assert!(report.holds);
    }

    #[test]
    fn asymptotic_mse_table_matches_the_case_analysis() {
        let model = unit_box_model();
        let cont = ResponseContamination::TwoPoint { magnitude: 1.0, propensity: 0.5 };
        let grid = model.domain.evaluation_grid(&model.beta, 50, &RngStream::new(68)).unwrap();
        // Condition satisfied: clipping never hurts, anywhere.
        let ok = response_mse_compare(&model, &cont, (f64::NEG_INFINITY, 2.5), &grid).unwrap();
        for row in &ok {
            assert!((row.loss_algorithmic - 0.25).abs() < 1e-12);
            assert!(row.loss_safeguarded <= row.loss_algorithmic + 1e-12);
        }
        // Too-aggressive cap: some grid point gets hurt.
        let aggressive = response_mse_compare(&model, &cont, (f64::NEG_INFINITY, 2.4), &grid).unwrap();
        assert!(aggressive.iter().any(|r| r.loss_safeguarded > 0.25 + 1e-12));
        // Absent bounds: identical losses.
        let noop = response_mse_compare(&model, &cont, (f64::NEG_INFINITY, f64::INFINITY), &grid).unwrap();
        for row in &noop {
            assert_eq!(row.loss_algorithmic, row.loss_safeguarded);
        }
    }

    #[test]
    fn covariate_plim_examples() {
        // Sigma2 = 0: consistent.
        let clean = CovariateContamination::new(CovariateDist::standard_normal(2), ErrorDist::zero(2)).unwrap();
        let plim = covariate_plim(&clean, &[1.0, -2.0]).unwrap();
        assert!(plim.consistent);
        assert_eq!(plim.coefficients, vec![1.0, -2.0]);

        // Sigma2 = diag(1, 0), beta = (0, 3): null-space case, consistent.
        let cont = CovariateContamination::new(
            CovariateDist::standard_normal(2),
            ErrorDist::gaussian(vec![1.0, 0.0]),
        )
        .unwrap();
        let plim = covariate_plim(&cont, &[0.0, 3.0]).unwrap();
        assert!(plim.consistent);
        assert!((plim.coefficients[1] - 3.0).abs() < 1e-12);

        // Scalar attenuation: Sigma1 = Sigma2 = 1, beta = 2 -> limit 1.
        let scalar = CovariateContamination::new(
            CovariateDist::standard_normal(1),
            ErrorDist::gaussian(vec![1.0]),
        )
        .unwrap();
        let plim = covariate_plim(&scalar, &[2.0]).unwrap();
        assert!(!plim.consistent);
        assert!((plim.coefficients[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_attenuation_shows_up_in_large_sample_ols() {
        let cont = CovariateContamination::new(
            CovariateDist::standard_normal(1),
            ErrorDist::gaussian(vec![1.0]),
        )
        .unwrap();
        let data = simulate_covariate_contaminated(&cont, &[2.0], 0.5, 300_000, &RngStream::new(69)).unwrap();
        let fit = ols_fit(&data).unwrap();
        let se = fit.covariance[(0, 0)].sqrt();
        assert!((fit.beta_hat[0] - 1.0).abs() < 4.0 * se + 0.01, "beta_hat {}", fit.beta_hat[0]);
    }

    #[test]
    fn moment_validation_accepts_consistent_declarations() {
        let cont = CovariateContamination::new(
            CovariateDist::standard_normal(2),
            ErrorDist::gaussian(vec![0.5, 0.2]),
        )
        .unwrap();
        cont.validate_moments(50_000, &RngStream::new(70), 1e-6).unwrap();
    }

    #[test]
    fn guardrail_condition_thresholds_and_certification() {
        // Z on a box, beta = (1, 2); prediction error flips +/-1 along beta
        // with probability 0.3 each way; training is clean.
        let z = CovariateDist::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let u = ErrorDist::symmetric_three_point(vec![0.2, 0.4], 0.3).unwrap();
        let cont = CovariateContamination::new(z, u)
            .unwrap()
            .with_training(TrainingContamination::None)
            .unwrap();
        let beta = [1.0, 2.0];
        // U.beta = +/- 1 with probability 0.3 each; (b, p) = (1, 0.3) works.
        let margin = (0.3f64 / 0.7).sqrt();
        let report = covariate_guardrail_condition(
            &cont,
            &beta,
            (margin - 0.01, 3.0 - margin + 0.01),
            1.0,
            0.3,
            &RngStream::new(71),
        )
        .unwrap();
        assert!((report.threshold_lower - margin).abs() < 1e-12);
        assert!((report.threshold_upper - (3.0 - margin)).abs() < 1e-12);
        assert!(report.holds);
        assert!((report.tail_up - 0.3).abs() < 0.01);

        // p = 0.2, b = 1 -> margin exactly 0.5.
        let report = covariate_guardrail_condition(&cont, &beta, (0.5, 2.5), 1.0, 0.2, &RngStream::new(72)).unwrap();
        assert_eq!(report.threshold_lower, 0.5);
        assert_eq!(report.threshold_upper, 2.5);
        assert!(report.holds);
    }

    #[test]
    fn degenerate_or_inconsistent_setups_violate_hypotheses() {
        let z = CovariateDist::uniform_box(vec![0.0], vec![1.0]).unwrap();
        // U identically zero: no (b, p) with p > 0 can certify.
        let silent = CovariateContamination::new(z.clone(), ErrorDist::zero(1))
            .unwrap()
            .with_training(TrainingContamination::None)
            .unwrap();
        let err = covariate_guardrail_condition(&silent, &[1.0], (0.0, 1.0), 0.5, 0.2, &RngStream::new(73))
            .unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(_)));

        // Training error loaded on beta: inconsistent training fit.
        let u = ErrorDist::symmetric_three_point(vec![1.0], 0.3).unwrap();
        let same = CovariateContamination::new(z.clone(), u).unwrap();
        let err = covariate_guardrail_condition(&same, &[1.0], (0.0, 1.0), 1.0, 0.3, &RngStream::new(74))
            .unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(_)));

        // p >= 0.5 is out of range.
        let u = ErrorDist::symmetric_three_point(vec![1.0], 0.5).unwrap();
        let cont = CovariateContamination::new(z, u)
            .unwrap()
            .with_training(TrainingContamination::None)
            .unwrap();
        let err = covariate_guardrail_condition(&cont, &[1.0], (0.0, 1.0), 1.0, 0.5, &RngStream::new(75))
            .unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(_)));
    }

    #[test]
    fn larger_tail_magnitude_only_widens_the_admissible_bounds() {
        let z = CovariateDist::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let p = 0.25;
        let mut prev_lower = f64::NEG_INFINITY;
        let mut prev_upper = f64::INFINITY;
        for scale in [0.2, 0.4, 0.8] {
            let u = ErrorDist::symmetric_three_point(vec![0.2 * scale, 0.4 * scale], p).unwrap();
            let cont = CovariateContamination::new(z.clone(), u)
                .unwrap()
                .with_training(TrainingContamination::None)
                .unwrap();
            let b = scale * (0.2 + 0.8) * (1.0 - 1e-9);
            let report = covariate_guardrail_condition(
                &cont,
                &[1.0, 2.0],
                (1.4, 1.6),
                b,
                p,
                &RngStream::new(77),
            );
            // With fixed p, a larger b moves the thresholds outward, so
            // any bounds admissible at a smaller b stay admissible.
            if let Ok(r) = report {
                assert!(r.threshold_lower >= prev_lower || prev_lower == f64::NEG_INFINITY);
                assert!(r.threshold_upper <= prev_upper || prev_upper == f64::INFINITY);
                prev_lower = r.threshold_lower;
                prev_upper = r.threshold_upper;
            }
        }
        assert!(prev_lower > 0.0, "at least the largest-b report must evaluate");
    }

    #[test]
    fn covariate_loss_comparison_improves_under_the_condition() {
        let z = CovariateDist::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let u = ErrorDist::symmetric_three_point(vec![0.2, 0.4], 0.3).unwrap();
        let cont = CovariateContamination::new(z, u)
            .unwrap()
            .with_training(TrainingContamination::None)
            .unwrap();
        let beta = [1.0, 2.0];
        let margin = (0.3f64 / 0.7).sqrt();
        let bounds = (margin, 3.0 - margin);
        let cmp = covariate_mse_compare(&cont, &beta, bounds, 400_000, &RngStream::new(76), 0.99).unwrap();
        assert!(
            cmp.improvement.lower() >= -1e-12,
            "expected-loss improvement should be nonnegative: {:?}",
            cmp.improvement
        );
        assert!(cmp.loss_algorithmic.mean > cmp.loss_safeguarded.mean);
    }
}
