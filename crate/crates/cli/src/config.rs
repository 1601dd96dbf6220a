//! Scenario configuration: TOML files with a scenario tag, experiment
//! controls, a scenario-specific parameter table, and optional sweeps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use guardrail_core::competition::{DuopolyParams, PriceFamily, PriceHistoryModel};
use guardrail_core::contamination::{BoundedLinearModel, Domain, ResponseContamination};
use guardrail_core::misspec::{DemandOracle, GridExperiment};

/// Errors carrying a field-level diagnostic.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<guardrail_core::Error> for ConfigError {
    fn from(e: guardrail_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

/// One sweep axis: a parameter name from the `[params]` table and the
/// values it takes. Multiple axes combine as a cartesian product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub param: String,
    pub values: Vec<toml::Value>,
}

/// Raw on-disk shape, prior to scenario-specific validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub seed: u64,
    pub replications: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Vec<SweepEntry>,
    pub params: toml::Table,
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    fn validate_shape(&self) -> ConfigResult<()> {
        if self.replications < 1 {
            return Err(ConfigError("replications must be >= 1".into()));
        }
        const KNOWN: [&str; 5] =
            ["framework", "competition", "misspec", "contamination-response", "contamination-covariate"];
        if !KNOWN.contains(&self.scenario.as_str()) {
            return Err(ConfigError(format!(
                "unknown scenario '{}'; expected one of {KNOWN:?}",
                self.scenario
            )));
        }
        for entry in &self.sweep {
            if !self.params.contains_key(&entry.param) {
                return Err(ConfigError(format!(
                    "sweep parameter '{}' is not a key of [params]",
                    entry.param
                )));
            }
            if entry.values.is_empty() {
                return Err(ConfigError(format!("sweep over '{}' has no values", entry.param)));
            }
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes; a single empty point when no
    /// sweep is configured. Each point is the `[params]` table with the
    /// swept keys overridden.
    pub fn sweep_points(&self) -> Vec<(Vec<(String, toml::Value)>, toml::Table)> {
        let mut points: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
        for entry in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * entry.values.len());
            for point in &points {
                for value in &entry.values {
                    let mut extended = point.clone();
                    extended.push((entry.param.clone(), value.clone()));
                    next.push(extended);
                }
            }
            points = next;
        }
        points
            .into_iter()
            .map(|assignments| {
                let mut table = self.params.clone();
                for (key, value) in &assignments {
                    table.insert(key.clone(), value.clone());
                }
                (assignments, table)
            })
            .collect()
    }

    /// Validate every sweep point against the owning module's preconditions
    /// before any computation starts.
    pub fn validate_all_points(&self) -> ConfigResult<()> {
        for (assignments, table) in self.sweep_points() {
            TypedParams::from_table(&self.scenario, &table).map_err(|e| {
                ConfigError(format!("at sweep point {assignments:?}: {}", e.0))
            })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ScenarioConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> ConfigResult<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError(format!("parse failure: {e}")))?;
        config.validate_shape()?;
        Ok(config)
    }
}

fn get_f64(table: &toml::Table, key: &str) -> ConfigResult<f64> {
    match table.get(key) {
        Some(toml::Value::Float(v)) => Ok(*v),
        Some(toml::Value::Integer(v)) => Ok(*v as f64),
        Some(other) => Err(ConfigError(format!("params.{key}: expected a number, got {other}"))),
        None => Err(ConfigError(format!("params.{key}: missing"))),
    }
}

fn get_f64_or(table: &toml::Table, key: &str, default: f64) -> ConfigResult<f64> {
    if table.contains_key(key) { get_f64(table, key) } else { Ok(default) }
}

fn get_opt_f64(table: &toml::Table, key: &str) -> ConfigResult<Option<f64>> {
    if table.contains_key(key) { get_f64(table, key).map(Some) } else { Ok(None) }
}

fn get_u64(table: &toml::Table, key: &str) -> ConfigResult<u64> {
    match table.get(key) {
        Some(toml::Value::Integer(v)) if *v >= 0 => Ok(*v as u64),
        Some(other) => Err(ConfigError(format!("params.{key}: expected a nonnegative integer, got {other}"))),
        None => Err(ConfigError(format!("params.{key}: missing"))),
    }
}

fn get_str<'t>(table: &'t toml::Table, key: &str) -> ConfigResult<&'t str> {
    match table.get(key) {
        Some(toml::Value::String(s)) => Ok(s.as_str()),
        Some(other) => Err(ConfigError(format!("params.{key}: expected a string, got {other}"))),
        None => Err(ConfigError(format!("params.{key}: missing"))),
    }
}

fn get_vec_f64(table: &toml::Table, key: &str) -> ConfigResult<Vec<f64>> {
    match table.get(key) {
        Some(toml::Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                toml::Value::Float(f) => Ok(*f),
                toml::Value::Integer(i) => Ok(*i as f64),
                other => Err(ConfigError(format!("params.{key}: non-numeric entry {other}"))),
            })
            .collect(),
        Some(other) => Err(ConfigError(format!("params.{key}: expected an array, got {other}"))),
        None => Err(ConfigError(format!("params.{key}: missing"))),
    }
}

/// Framework scenario: a Gaussian decision with optional constant or
/// Gaussian-random bounds around a quadratic loss.
#[derive(Debug, Clone)]
pub struct FrameworkParams {
    pub xstar: f64,
    pub xa_mean: f64,
    pub xa_sd: f64,
    pub upper: Option<f64>,
    pub upper_sd: Option<f64>,
    pub lower: Option<f64>,
    pub lower_sd: Option<f64>,
    pub n_draws: u64,
    pub confidence: f64,
}

#[derive(Debug, Clone)]
pub struct CompetitionParams {
    pub duopoly: DuopolyParams,
    pub history: PriceHistoryModel,
    pub n: u64,
    pub competitor_price: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MisspecParams {
    pub oracle_family: String,
    pub a: f64,
    pub b: f64,
    pub experiment: GridExperiment,
}

impl MisspecParams {
    pub fn oracle(&self) -> ConfigResult<DemandOracle> {
        match self.oracle_family.as_str() {
            "isoelastic" => Ok(DemandOracle::isoelastic(self.a, self.b)?),
            "exponential" => Ok(DemandOracle::exponential(self.a, self.b)?),
            other => Err(ConfigError(format!("params.family: unknown demand family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContaminationResponseParams {
    pub model: BoundedLinearModel,
    pub contamination: ResponseContamination,
    pub n: u64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub grid_points: u64,
}

#[derive(Debug, Clone)]
pub struct ContaminationCovariateParams {
    pub beta: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub direction: Vec<f64>,
    pub tail_prob: f64,
    pub b: f64,
    pub p: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub n_draws: u64,
    pub confidence: f64,
}

/// Typed, validated view of one sweep point.
#[derive(Debug, Clone)]
pub enum TypedParams {
    Framework(FrameworkParams),
    Competition(CompetitionParams),
    Misspec(MisspecParams),
    ContaminationResponse(ContaminationResponseParams),
    ContaminationCovariate(ContaminationCovariateParams),
}

impl TypedParams {
    pub fn from_table(scenario: &str, table: &toml::Table) -> ConfigResult<Self> {
        match scenario {
            "framework" => {
                let params = FrameworkParams {
                    xstar: get_f64_or(table, "xstar", 0.0)?,
                    xa_mean: get_f64(table, "xa_mean")?,
                    xa_sd: get_f64(table, "xa_sd")?,
                    upper: get_opt_f64(table, "upper")?,
                    upper_sd: get_opt_f64(table, "upper_sd")?,
                    lower: get_opt_f64(table, "lower")?,
                    lower_sd: get_opt_f64(table, "lower_sd")?,
                    n_draws: get_u64(table, "n_draws")?,
                    confidence: get_f64_or(table, "confidence", 0.99)?,
                };
                if !(params.xa_sd > 0.0) {
                    return Err(ConfigError("params.xa_sd: must be positive".into()));
                }
                if params.n_draws < 2 {
                    return Err(ConfigError("params.n_draws: must be >= 2".into()));
                }
                if params.upper.is_none() && params.lower.is_none() {
                    return Err(ConfigError("framework scenario needs at least one of params.upper / params.lower".into()));
                }
                if let (Some(lo), Some(hi)) = (params.lower, params.upper) {
                    if lo > hi {
                        return Err(ConfigError(format!("params.lower {lo} exceeds params.upper {hi}")));
                    }
                }
                Ok(TypedParams::Framework(params))
            }
            "competition" => {
                let duopoly = DuopolyParams {
                    alpha: get_f64(table, "alpha")?,
                    beta: get_f64(table, "beta")?,
                    gamma: get_f64(table, "gamma")?,
                    noise_sd: get_f64_or(table, "noise_sd", 1.0)?,
                };
                duopoly.validate()?;
                let family = match get_str(table, "family").unwrap_or("gaussian") {
                    "gaussian" => PriceFamily::BivariateGaussian,
                    "lognormal" => PriceFamily::BivariateLognormal,
                    other => {
                        return Err(ConfigError(format!(
                            "params.family: expected 'gaussian' or 'lognormal', got '{other}'"
                        )))
                    }
                };
                let history = PriceHistoryModel {
                    mu: get_f64(table, "mu")?,
                    sigma2: get_f64(table, "sigma2")?,
                    rho: get_f64(table, "rho")?,
                    family,
                };
                history.validate()?;
                let n = get_u64(table, "n")?;
                if n < 3 {
                    return Err(ConfigError("params.n: history length must be >= 3".into()));
                }
                Ok(TypedParams::Competition(CompetitionParams {
                    duopoly,
                    history,
                    n,
                    competitor_price: get_opt_f64(table, "competitor_price")?,
                }))
            }
            "misspec" => {
                let experiment = GridExperiment {
                    c: get_f64(table, "c")?,
                    p_bar: get_f64(table, "p_bar")?,
                    n: get_u64(table, "n")? as u32,
                    k: get_u64(table, "k")? as u32,
                    noise_sd: get_f64_or(table, "noise_sd", 1.0)?,
                };
                experiment.validate()?;
                let params = MisspecParams {
                    oracle_family: get_str(table, "family")?.to_string(),
                    a: get_f64(table, "a")?,
                    b: get_f64(table, "b")?,
                    experiment,
                };
                params.oracle()?;
                Ok(TypedParams::Misspec(params))
            }
            "contamination-response" => {
                let model = BoundedLinearModel {
                    beta: get_vec_f64(table, "beta")?,
                    domain: Domain::Box {
                        lower: get_vec_f64(table, "domain_lower")?,
                        upper: get_vec_f64(table, "domain_upper")?,
                    },
                    noise_sd: get_f64_or(table, "noise_sd", 1.0)?,
                };
                model.validate()?;
                let contamination = ResponseContamination::TwoPoint {
                    magnitude: get_f64(table, "magnitude")?,
                    propensity: get_f64(table, "propensity")?,
                };
                contamination.validate()?;
                let n = get_u64(table, "n")?;
                if n < model.beta.len() as u64 + 1 {
                    return Err(ConfigError("params.n: too few samples for the dimension".into()));
                }
                Ok(TypedParams::ContaminationResponse(ContaminationResponseParams {
                    model,
                    contamination,
                    n,
                    upper_bound: get_f64_or(table, "upper_bound", f64::INFINITY)?,
                    lower_bound: get_f64_or(table, "lower_bound", f64::NEG_INFINITY)?,
                    grid_points: get_u64(table, "grid_points").unwrap_or(100),
                }))
            }
            "contamination-covariate" => {
                let params = ContaminationCovariateParams {
                    beta: get_vec_f64(table, "beta")?,
                    z_lower: get_vec_f64(table, "z_lower")?,
                    z_upper: get_vec_f64(table, "z_upper")?,
                    direction: get_vec_f64(table, "direction")?,
                    tail_prob: get_f64(table, "tail_prob")?,
                    b: get_f64(table, "b")?,
                    p: get_f64(table, "p")?,
                    lower_bound: get_f64(table, "lower_bound")?,
                    upper_bound: get_f64(table, "upper_bound")?,
                    n_draws: get_u64(table, "n_draws")?,
                    confidence: get_f64_or(table, "confidence", 0.99)?,
                };
                if params.beta.len() != params.z_lower.len()
                    || params.beta.len() != params.z_upper.len()
                    || params.beta.len() != params.direction.len()
                {
                    return Err(ConfigError("beta, z_lower, z_upper, direction must share a dimension".into()));
                }
                if !(params.p > 0.0 && params.p < 0.5) {
                    return Err(ConfigError("params.p: must lie in (0, 0.5)".into()));
                }
                if params.n_draws < 2 {
                    return Err(ConfigError("params.n_draws: must be >= 2".into()));
                }
                Ok(TypedParams::ContaminationCovariate(params))
            }
            other => Err(ConfigError(format!("unknown scenario '{other}'"))),
        }
    }
}
