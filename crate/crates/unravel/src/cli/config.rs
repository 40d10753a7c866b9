//! Run-configuration schema: a single TOML document with strict
//! unknown-key rejection, plus resolution of defaults and the named
//! observable catalog.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hilbert::{Operator, StateVector};
use crate::model::{self, OpenSystem};
use crate::C64;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Trajectories,
    Homodyne,
    Master,
    Correlate,
    Counting,
    Waiting,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Trajectories => "trajectories",
            Task::Homodyne => "homodyne",
            Task::Master => "master",
            Task::Correlate => "correlate",
            Task::Counting => "counting",
            Task::Waiting => "waiting",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        match name {
            "trajectories" => Some(Task::Trajectories),
            "homodyne" => Some(Task::Homodyne),
            "master" => Some(Task::Master),
            "correlate" => Some(Task::Correlate),
            "counting" => Some(Task::Counting),
            "waiting" => Some(Task::Waiting),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    /// `basis:<k>`
    Named(String),
    /// Amplitudes as [re, im] pairs; must be normalized to 1e-6.
    Amplitudes(Vec<(f64, f64)>),
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec::Named("basis:0".into())
    }
}

impl StateSpec {
    pub fn resolve(&self, dim: usize) -> ConfigResult<StateVector> {
        match self {
            StateSpec::Named(name) => {
                let Some(idx) = name.strip_prefix("basis:") else {
                    return Err(ConfigError::Invalid(format!(
                        "unknown initial_state `{name}`; use \"basis:<k>\" or amplitude pairs"
                    )));
                };
                let k: usize = idx.parse().map_err(|_| {
                    ConfigError::Invalid(format!("bad basis index in `{name}`"))
                })?;
                if k >= dim {
                    return Err(ConfigError::Invalid(format!(
                        "basis index {k} out of range for dimension {dim}"
                    )));
                }
                Ok(StateVector::basis(dim, k))
            }
            StateSpec::Amplitudes(pairs) => {
                if pairs.len() != dim {
                    return Err(ConfigError::Invalid(format!(
                        "initial_state has {} amplitudes, model dimension is {dim}",
                        pairs.len()
                    )));
                }
                let psi = StateVector::new(
                    pairs.iter().map(|&(re, im)| C64::new(re, im)).collect(),
                );
                if (psi.norm2() - 1.0).abs() > 1e-6 {
                    return Err(ConfigError::Invalid(
                        "initial_state amplitudes are not normalized".into(),
                    ));
                }
                Ok(psi.normalized())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Path prefix for all emitted files (directories are created).
    pub path: String,
    /// "csv" or "json"; each task has a natural default.
    #[serde(default)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateConfig {
    pub op_a: String,
    pub op_b: String,
    /// "regression" (deterministic oracle) or "pair" (trajectory estimate).
    #[serde(default = "default_method")]
    pub method: String,
    pub lag_max: f64,
    #[serde(default = "default_n_lags")]
    pub n_lags: usize,
    /// Pair-estimate parameters.
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default = "default_kicks")]
    pub kicks: usize,
    #[serde(default = "default_pair_traj")]
    pub n_traj: usize,
}

fn default_method() -> String {
    "regression".into()
}
fn default_n_lags() -> usize {
    101
}
fn default_kicks() -> usize {
    4
}
fn default_pair_traj() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingConfig {
    /// Count cutoff; defaults to four times the expected count.
    #[serde(default)]
    pub m_max: Option<usize>,
    /// Channel indices being counted; defaults to all.
    #[serde(default)]
    pub channels: Option<Vec<usize>>,
    /// "oracle" or "histogram".
    #[serde(default = "default_counting_method")]
    pub method: String,
}

fn default_counting_method() -> String {
    "oracle".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomodyneTaskConfig {
    #[serde(default)]
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaitingTaskConfig {
    #[serde(default)]
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub model: ModelConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Homodyne Euler step / jump norm-monitoring step.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_norm_tol")]
    pub norm_tol: f64,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    #[serde(default)]
    pub initial_state: StateSpec,
    pub output: OutputConfig,
    #[serde(default)]
    pub correlate: Option<CorrelateConfig>,
    #[serde(default)]
    pub counting: Option<CountingConfig>,
    #[serde(default)]
    pub homodyne: Option<HomodyneTaskConfig>,
    #[serde(default)]
    pub waiting: Option<WaitingTaskConfig>,
}

fn default_seed() -> u64 {
    1
}
fn default_grid_points() -> usize {
    200
}
fn default_n_traj() -> usize {
    1
}
fn default_norm_tol() -> f64 {
    1e-10
}
fn default_observables() -> Vec<String> {
    vec!["populations".into()]
}

/// Parse and validate a configuration document. Unknown keys are rejected
/// with the offending key named; defaults are applied so the returned value
/// is fully resolved and serializes back to an equivalent document.
pub fn parse_config(text: &str) -> ConfigResult<RunConfig> {
    let mut cfg: RunConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve_and_validate(&mut cfg)?;
    Ok(cfg)
}

/// Validation plus default resolution shared by file parsing and manifests.
pub fn resolve_and_validate(cfg: &mut RunConfig) -> ConfigResult<()> {
    let sys = build_system(cfg)?;
    // Task-specific requirements and dt defaults.
    match cfg.task {
        Task::Correlate => {
            let c = cfg
                .correlate
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid("correlate task needs [correlate]".into()))?;
            if c.lag_max <= 0.0 {
                return Err(ConfigError::Invalid("lag_max must be positive".into()));
            }
            if c.n_lags < 2 {
                return Err(ConfigError::Invalid("n_lags must be at least 2".into()));
            }
            match c.method.as_str() {
                "regression" | "pair" => {}
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "unknown correlate method `{other}`"
                    )))
                }
            }
            resolve_observable(&c.op_a, &sys)?;
            resolve_observable(&c.op_b, &sys)?;
            if cfg.dt.is_none() {
                cfg.dt = Some(default_jump_dt(&sys));
            }
            let burn = cfg.correlate.as_ref().unwrap().burn_in;
            if burn.is_none() {
                let rate = sys.min_positive_rate().unwrap_or(1.0);
                cfg.correlate.as_mut().unwrap().burn_in = Some(20.0 / rate);
            }
        }
        _ => {
            let t_max = cfg
                .t_max
                .ok_or_else(|| ConfigError::Invalid("missing required field `t_max`".into()))?;
            if t_max <= 0.0 {
                return Err(ConfigError::Invalid("t_max must be positive".into()));
            }
            if cfg.dt.is_none() {
                cfg.dt = Some(match cfg.task {
                    Task::Homodyne => default_homodyne_dt(&sys),
                    _ => default_jump_dt(&sys).min(t_max),
                });
            }
        }
    }
    if cfg.grid_points < 2 {
        return Err(ConfigError::Invalid("grid_points must be at least 2".into()));
    }
    if cfg.n_traj < 1 {
        return Err(ConfigError::Invalid("n_traj must be at least 1".into()));
    }
    if !(cfg.norm_tol > 0.0 && cfg.norm_tol <= 1e-6) {
        return Err(ConfigError::Invalid(
            "norm_tol must lie in (0, 1e-6]".into(),
        ));
    }
    // Channel bounds.
    if let Some(h) = &cfg.homodyne {
        if h.channel >= sys.channels().len() {
            return Err(ConfigError::Invalid(format!(
                "homodyne channel {} out of range",
                h.channel
            )));
        }
    }
    if let Some(w) = &cfg.waiting {
        if w.channel >= sys.channels().len() {
            return Err(ConfigError::Invalid(format!(
                "waiting channel {} out of range",
                w.channel
            )));
        }
    }
    if let Some(c) = &cfg.counting {
        if let Some(chs) = &c.channels {
            for &j in chs {
                if j >= sys.channels().len() {
                    return Err(ConfigError::Invalid(format!(
                        "counting channel {j} out of range"
                    )));
                }
            }
        }
        match c.method.as_str() {
            "oracle" | "histogram" => {}
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown counting method `{other}`"
                )))
            }
        }
    }
    // Observables must resolve; the initial state must fit the dimension.
    for name in &cfg.observables {
        resolve_observable(name, &sys)?;
    }
    cfg.initial_state.resolve(sys.dim())?;
    if let Some(fmt) = &cfg.output.format {
        if fmt != "csv" && fmt != "json" {
            return Err(ConfigError::Invalid(format!("unknown format `{fmt}`")));
        }
    }
    Ok(())
}

fn default_jump_dt(sys: &OpenSystem) -> f64 {
    let rate = sys.max_rate().max(1.0);
    1e-2 / rate
}

fn default_homodyne_dt(sys: &OpenSystem) -> f64 {
    let rate = sys.max_rate().max(1.0);
    1e-3 / rate
}

pub fn build_system(cfg: &RunConfig) -> ConfigResult<OpenSystem> {
    model::build_model_by_name(&cfg.model.name, &cfg.model.params)
        .map_err(|e| ConfigError::Invalid(e.to_string()))
}

/// A named observable resolved against a concrete system.
pub struct Observable {
    pub name: String,
    pub op: Operator,
    pub hermitian: bool,
}

/// Expand an observable name into one or more operators.
///
/// Catalog: populations / `pop:<k>` (pop_g, pop_e for two-level systems),
/// sigma_minus, sigma_plus, x (bare quadrature of channel 0), number
/// (motional a^dag a), entropy (handled separately on ensemble means).
pub fn resolve_observable(name: &str, sys: &OpenSystem) -> ConfigResult<Vec<Observable>> {
    let dim = sys.dim();
    let pop = |k: usize| Observable {
        name: format!("pop{k}"),
        op: Operator::ketbra(dim, k, k),
        hermitian: true,
    };
    match name {
        "populations" => Ok((0..dim).map(pop).collect()),
        "entropy" => Ok(vec![]), // computed from the ensemble mean directly
        "pop_g" if dim == 2 => Ok(vec![Observable {
            name: "pop_g".into(),
            op: Operator::ketbra(2, 0, 0),
            hermitian: true,
        }]),
        "pop_e" if dim == 2 => Ok(vec![Observable {
            name: "pop_e".into(),
            op: Operator::ketbra(2, 1, 1),
            hermitian: true,
        }]),
        "sigma_minus" if dim == 2 => Ok(vec![Observable {
            name: "sigma_minus".into(),
            op: model::sigma_minus(),
            hermitian: false,
        }]),
        "sigma_plus" if dim == 2 => Ok(vec![Observable {
            name: "sigma_plus".into(),
            op: model::sigma_plus(),
            hermitian: false,
        }]),
        "x" => {
            let ch = sys.channels().first().ok_or_else(|| {
                ConfigError::Invalid("observable `x` needs at least one channel".into())
            })?;
            Ok(vec![Observable {
                name: "x".into(),
                op: ch.op.add(&ch.op.dagger()),
                hermitian: true,
            }])
        }
        "number" => {
            if !dim.is_multiple_of(2) || dim < 4 {
                return Err(ConfigError::Invalid(
                    "observable `number` expects the trapped-ion model".into(),
                ));
            }
            let dim_f = dim / 2;
            Ok(vec![Observable {
                name: "number".into(),
                op: crate::hilbert::tensor_product(
                    &model::number_operator(dim_f),
                    &Operator::identity(2),
                ),
                hermitian: true,
            }])
        }
        other => {
            if let Some(idx) = other.strip_prefix("pop:") {
                let k: usize = idx
                    .parse()
                    .map_err(|_| ConfigError::Invalid(format!("bad population index `{other}`")))?;
                if k >= dim {
                    return Err(ConfigError::Invalid(format!(
                        "population index {k} out of range for dimension {dim}"
                    )));
                }
                return Ok(vec![pop(k)]);
            }
            Err(ConfigError::Invalid(format!(
                "unknown observable `{other}`"
            )))
        }
    }
}

/// Single operator for correlate op_a/op_b names.
pub fn resolve_single_operator(name: &str, sys: &OpenSystem) -> ConfigResult<Operator> {
    let obs = resolve_observable(name, sys)?;
    match obs.len() {
        1 => Ok(obs.into_iter().next().unwrap().op),
        n => Err(ConfigError::Invalid(format!(
            "`{name}` resolves to {n} operators; need exactly one"
        ))),
    }
}
