//! Scenario configuration: JSON schema, parsing with JSON-pointer errors,
//! and semantic validation.

use std::collections::{BTreeMap, BTreeSet};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use ifd_core::exprfield::{parse_with_params, Expr};
use ifd_core::Grid;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub domain: Domain,
    pub time: Time,
    /// Required by every run kind except `remark_d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentSpec>,
    /// Named scalars usable inside expressions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub strategies: Vec<StrategySpec>,
    pub run: RunSpec,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    #[serde(rename = "L")]
    pub length: f64,
    pub nx: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Time {
    #[serde(rename = "T")]
    pub period: f64,
    pub nt: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub r: String,
    #[serde(rename = "K")]
    pub k: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    /// Diffusion rate; ignored for pursuit strategies, which carry their own.
    #[serde(default = "default_mu")]
    pub mu: String,
    #[serde(rename = "P")]
    pub p: DriftSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn default_mu() -> String {
    "1".into()
}

/// An expression, the literal `"ifd"`, or a pursuit invader.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum DriftSpec {
    Expr(String),
    Pursuit { pursuit: PursuitSpec },
}

impl DriftSpec {
    pub fn is_ifd(&self) -> bool {
        matches!(self, DriftSpec::Expr(s) if s.trim() == "ifd")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PursuitSpec {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunSpec {
    /// Envelope, K̃ and the feasibility margin.
    Feasibility {
        /// Exit 4 when the environment is infeasible.
        #[serde(default)]
        require_feasible: bool,
    },
    /// Single-species periodic orbit.
    Orbit {
        #[serde(default)]
        strategy: usize,
        /// Initial density; defaults to `K(x, 0)`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<String>,
    },
    /// Two (or more) species competing for a fixed number of periods.
    Competition {
        strategies: Vec<usize>,
        periods: usize,
        /// One expression per species; default `K(x, 0)` for each.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        record_every: Option<usize>,
        /// Stop once species `species` falls below `fraction` of its initial mass.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stop_below: Option<StopBelow>,
    },
    /// Resident orbit, invasion path, pursuit invader, eigenvalue verdict.
    Invasion {
        #[serde(default)]
        resident: usize,
        /// Index of a pursuit strategy; a default pursuit invader otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        invader: Option<usize>,
    },
    /// λ₁ of the pursuit invader over a list of drift strengths.
    AlphaSweep {
        #[serde(default)]
        resident: usize,
        alphas: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modes: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_margin: Option<f64>,
    },
    /// Infeasible habitat built from a temporal growth profile `rho(t)`.
    RemarkD {
        rho: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitude: Option<f64>,
    },
}

impl RunSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            RunSpec::Feasibility { .. } => "feasibility",
            RunSpec::Orbit { .. } => "orbit",
            RunSpec::Competition { .. } => "competition",
            RunSpec::Invasion { .. } => "invasion",
            RunSpec::AlphaSweep { .. } => "alpha_sweep",
            RunSpec::RemarkD { .. } => "remark_d",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct StopBelow {
    pub species: usize,
    pub fraction: f64,
}

/// Optional overrides; anything left out takes the library default.
#[derive(Debug, Clone, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub orbit_tol: Option<f64>,
    pub max_periods: Option<usize>,
    pub eig_tol: Option<f64>,
    pub eig_window: Option<usize>,
    pub eig_max_iters: Option<usize>,
    pub eps_feas: Option<f64>,
    pub ifd_tol: Option<f64>,
    pub eps_eig: Option<f64>,
    pub path_modes: Option<usize>,
    pub delta_fraction: Option<f64>,
    pub invader_mu: Option<f64>,
    pub invader_alpha: Option<f64>,
    pub min_substeps: Option<usize>,
}

/// A tolerance value and where it came from.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Setting<T> {
    pub value: T,
    pub source: &'static str,
}

fn pick<T: Copy>(over: Option<T>, default: T) -> Setting<T> {
    match over {
        Some(value) => Setting {
            value,
            source: "config",
        },
        None => Setting {
            value: default,
            source: "default",
        },
    }
}

/// Every tolerance in effect for a run.
#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub orbit_tol: Setting<f64>,
    pub max_periods: Setting<usize>,
    pub eig_tol: Setting<f64>,
    pub eig_window: Setting<usize>,
    pub eig_max_iters: Setting<usize>,
    pub eps_feas: Setting<f64>,
    pub ifd_tol: Setting<f64>,
    pub eps_eig: Setting<f64>,
    pub path_modes: Setting<usize>,
    pub delta_fraction: Setting<f64>,
    pub invader_mu: Setting<f64>,
    pub invader_alpha: Setting<f64>,
    pub min_substeps: Setting<usize>,
    pub poisson_compat_tol: Setting<f64>,
    pub bernoulli_residual_tol: Setting<f64>,
}

pub const DEFAULT_INVADER_MU: f64 = 1.0;
pub const DEFAULT_INVADER_ALPHA: f64 = 16.0;
pub const BERNOULLI_RESIDUAL_TOL: f64 = 1e-8;

impl ToleranceOverrides {
    pub fn resolve(&self) -> Tolerances {
        use ifd_core::{bernoulli, dynamics, fitness, floquet, strategy};
        Tolerances {
            orbit_tol: pick(self.orbit_tol, dynamics::DEFAULT_ORBIT_TOL),
            max_periods: pick(self.max_periods, dynamics::DEFAULT_MAX_PERIODS),
            eig_tol: pick(self.eig_tol, floquet::DEFAULT_EIG_TOL),
            eig_window: pick(self.eig_window, floquet::DEFAULT_EIG_WINDOW),
            eig_max_iters: pick(self.eig_max_iters, floquet::DEFAULT_MAX_ITERS),
            eps_feas: pick(self.eps_feas, bernoulli::DEFAULT_EPS_FEAS),
            ifd_tol: pick(self.ifd_tol, fitness::IFD_TOL_SIMULATED),
            eps_eig: pick(self.eps_eig, floquet::EPS_EIG),
            path_modes: pick(self.path_modes, strategy::DEFAULT_MODES),
            delta_fraction: pick(self.delta_fraction, strategy::DEFAULT_DELTA_FRACTION),
            invader_mu: pick(self.invader_mu, DEFAULT_INVADER_MU),
            invader_alpha: pick(self.invader_alpha, DEFAULT_INVADER_ALPHA),
            min_substeps: pick(self.min_substeps, 0),
            poisson_compat_tol: pick(None, strategy::POISSON_COMPAT_TOL),
            bernoulli_residual_tol: pick(None, BERNOULLI_RESIDUAL_TOL),
        }
    }
}

/// The JSON schema of [`ScenarioConfig`].
pub fn schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(ScenarioConfig)).expect("schema serialises")
}

/// Parses JSON text, reporting type errors with their JSON pointer.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        CliError::validation(pointer, e.into_inner().to_string())
    })
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

/// Parsed expressions of a validated config.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub grid: Grid,
    pub r: Option<Expr>,
    pub k: Option<Expr>,
    pub strategies: Vec<CompiledStrategy>,
}

#[derive(Debug, Clone)]
pub struct CompiledStrategy {
    pub mu: Expr,
    pub drift: CompiledDrift,
    pub label: String,
}

#[derive(Debug, Clone)]
pub enum CompiledDrift {
    Expr(Expr),
    Ifd,
    Pursuit(PursuitSpec),
}

impl ScenarioConfig {
    /// Overrides the grid resolution (`--seed-grid`).
    pub fn with_resolution(mut self, nx: usize, nt: usize) -> Self {
        self.domain.nx = nx;
        self.time.nt = nt;
        self
    }

    /// Semantic checks that serde cannot express.
    pub fn validate(&self) -> Result<Compiled, CliError> {
        let grid = Grid::new(self.domain.length, self.domain.nx, self.time.period, self.time.nt).map_err(|e| {
            let pointer = if !(self.domain.length > 0.0) {
                "/domain/L"
            } else if self.domain.nx < 4 {
                "/domain/nx"
            } else if !(self.time.period > 0.0) {
                "/time/T"
            } else {
                "/time/nt"
            };
            CliError::validation(pointer, e.to_string())
        })?;
        for (name, v) in &self.params {
            if !v.is_finite() {
                return Err(CliError::validation(
                    format!("/params/{name}"),
                    "parameter must be finite",
                ));
            }
        }
        let names: BTreeSet<String> = self.params.keys().cloned().collect();
        let expr = |src: &str, pointer: String| {
            parse_with_params(src, &names).map_err(|e| CliError::validation(pointer, e.to_string()))
        };

        let needs_env = !matches!(self.run, RunSpec::RemarkD { .. });
        let (r, k) = match (&self.environment, needs_env) {
            (Some(env), _) => (
                Some(expr(&env.r, "/environment/r".into())?),
                Some(expr(&env.k, "/environment/K".into())?),
            ),
            (None, true) => {
                return Err(CliError::validation(
                    "/environment",
                    format!("run kind `{}` needs an environment", self.run.kind()),
                ))
            }
            (None, false) => (None, None),
        };

        let mut strategies = Vec::with_capacity(self.strategies.len());
        for (idx, s) in self.strategies.iter().enumerate() {
            let mu = expr(&s.mu, format!("/strategies/{idx}/mu"))?;
            let drift = match &s.p {
                d if d.is_ifd() => CompiledDrift::Ifd,
                DriftSpec::Expr(src) => CompiledDrift::Expr(expr(src, format!("/strategies/{idx}/P"))?),
                DriftSpec::Pursuit { pursuit } => {
                    let base = format!("/strategies/{idx}/P/pursuit");
                    if !(pursuit.alpha >= 0.0 && pursuit.alpha.is_finite()) {
                        return Err(CliError::validation(
                            format!("{base}/alpha"),
                            "alpha must be finite and >= 0",
                        ));
                    }
                    if let Some(m) = pursuit.mu {
                        if !(m > 0.0 && m.is_finite()) {
                            return Err(CliError::validation(format!("{base}/mu"), "mu must be positive"));
                        }
                    }
                    if let Some(d) = pursuit.delta_margin {
                        if !(d >= 0.0 && d < 0.5 * self.domain.length) {
                            return Err(CliError::validation(
                                format!("{base}/delta_margin"),
                                "delta_margin must lie in [0, L/2)",
                            ));
                        }
                    }
                    CompiledDrift::Pursuit(pursuit.clone())
                }
            };
            let label = s.label.clone().unwrap_or_else(|| match &drift {
                CompiledDrift::Ifd => "ifd".into(),
                CompiledDrift::Pursuit(_) => "pursuit".into(),
                CompiledDrift::Expr(_) => format!("strategy{idx}"),
            });
            strategies.push(CompiledStrategy { mu, drift, label });
        }

        let n = strategies.len();
        let index = |i: usize, pointer: &str| {
            if i < n {
                Ok(())
            } else {
                Err(CliError::validation(
                    pointer,
                    format!("strategy index {i} out of range ({n} strategies defined)"),
                ))
            }
        };
        let not_pursuit = |i: usize, pointer: &str| match &strategies[i].drift {
            CompiledDrift::Pursuit(_) => Err(CliError::validation(
                pointer,
                "a pursuit strategy needs a resident fitness and cannot be simulated directly",
            )),
            _ => Ok(()),
        };
        match &self.run {
            RunSpec::Feasibility { .. } => {}
            RunSpec::Orbit { strategy, initial } => {
                index(*strategy, "/run/strategy")?;
                not_pursuit(*strategy, "/run/strategy")?;
                if let Some(src) = initial {
                    expr(src, "/run/initial".into())?;
                }
            }
            RunSpec::Competition {
                strategies: list,
                periods,
                initial,
                record_every,
                stop_below,
            } => {
                if list.is_empty() {
                    return Err(CliError::validation(
                        "/run/strategies",
                        "at least one species is required",
                    ));
                }
                for (k, &i) in list.iter().enumerate() {
                    index(i, &format!("/run/strategies/{k}"))?;
                    not_pursuit(i, &format!("/run/strategies/{k}"))?;
                }
                if *periods == 0 {
                    return Err(CliError::validation("/run/periods", "periods must be positive"));
                }
                if let Some(init) = initial {
                    if init.len() != list.len() {
                        return Err(CliError::validation(
                            "/run/initial",
                            format!("expected {} initial expressions, got {}", list.len(), init.len()),
                        ));
                    }
                    for (k, src) in init.iter().enumerate() {
                        expr(src, format!("/run/initial/{k}"))?;
                    }
                }
                if *record_every == Some(0) {
                    return Err(CliError::validation(
                        "/run/record_every",
                        "record_every must be positive",
                    ));
                }
                if let Some(s) = stop_below {
                    if s.species >= list.len() {
                        return Err(CliError::validation(
                            "/run/stop_below/species",
                            "species index out of range",
                        ));
                    }
                    if !(s.fraction > 0.0 && s.fraction < 1.0) {
                        return Err(CliError::validation(
                            "/run/stop_below/fraction",
                            "fraction must lie in (0, 1)",
                        ));
                    }
                }
            }
            RunSpec::Invasion { resident, invader } => {
                index(*resident, "/run/resident")?;
                not_pursuit(*resident, "/run/resident")?;
                if let Some(i) = invader {
                    index(*i, "/run/invader")?;
                    if !matches!(strategies[*i].drift, CompiledDrift::Pursuit(_)) {
                        return Err(CliError::validation(
                            "/run/invader",
                            "invader must be a pursuit strategy",
                        ));
                    }
                }
            }
            RunSpec::AlphaSweep {
                resident,
                alphas,
                mu,
                delta_margin,
                ..
            } => {
                index(*resident, "/run/resident")?;
                not_pursuit(*resident, "/run/resident")?;
                if alphas.is_empty() {
                    return Err(CliError::validation("/run/alphas", "at least one alpha is required"));
                }
                for (k, a) in alphas.iter().enumerate() {
                    if !(*a >= 0.0 && a.is_finite()) {
                        return Err(CliError::validation(
                            format!("/run/alphas/{k}"),
                            "alpha must be finite and >= 0",
                        ));
                    }
                }
                if let Some(m) = mu {
                    if !(*m > 0.0 && m.is_finite()) {
                        return Err(CliError::validation("/run/mu", "mu must be positive"));
                    }
                }
                if let Some(d) = delta_margin {
                    if !(*d >= 0.0 && *d < 0.5 * self.domain.length) {
                        return Err(CliError::validation(
                            "/run/delta_margin",
                            "delta_margin must lie in [0, L/2)",
                        ));
                    }
                }
            }
            RunSpec::RemarkD { rho, amplitude } => {
                let e = expr(rho, "/run/rho".into())?;
                if mentions_x(&e) {
                    return Err(CliError::validation("/run/rho", "rho must depend on t only"));
                }
                if let Some(a) = amplitude {
                    if !(*a > 0.0 && a.is_finite()) {
                        return Err(CliError::validation("/run/amplitude", "amplitude must be positive"));
                    }
                }
                for (idx, s) in strategies.iter().enumerate() {
                    if !matches!(s.drift, CompiledDrift::Expr(_)) {
                        return Err(CliError::validation(
                            format!("/strategies/{idx}/P"),
                            "remark_d runs take explicit strategies only",
                        ));
                    }
                }
            }
        }
        self.tolerances.check()?;
        Ok(Compiled { grid, r, k, strategies })
    }
}

fn mentions_x(e: &Expr) -> bool {
    use ifd_core::exprfield::Var;
    match e {
        Expr::Var(Var::X) => true,
        Expr::Neg(a) => mentions_x(a),
        Expr::Bin(_, a, b) => mentions_x(a) || mentions_x(b),
        Expr::Call(_, args) => args.iter().any(mentions_x),
        _ => false,
    }
}

impl ToleranceOverrides {
    fn check(&self) -> Result<(), CliError> {
        let positive = [
            ("orbit_tol", self.orbit_tol),
            ("eig_tol", self.eig_tol),
            ("eps_feas", self.eps_feas),
            ("ifd_tol", self.ifd_tol),
            ("eps_eig", self.eps_eig),
            ("invader_mu", self.invader_mu),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::validation(
                        format!("/tolerances/{name}"),
                        "must be positive and finite",
                    ));
                }
            }
        }
        for (name, v) in [
            ("max_periods", self.max_periods),
            ("eig_window", self.eig_window),
            ("eig_max_iters", self.eig_max_iters),
        ] {
            if v == Some(0) {
                return Err(CliError::validation(format!("/tolerances/{name}"), "must be positive"));
            }
        }
        if let Some(a) = self.invader_alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(CliError::validation(
                    "/tolerances/invader_alpha",
                    "must be finite and >= 0",
                ));
            }
        }
        if let Some(d) = self.delta_fraction {
            if !(0.0..0.5).contains(&d) {
                return Err(CliError::validation(
                    "/tolerances/delta_fraction",
                    "must lie in [0, 0.5)",
                ));
            }
        }
        Ok(())
    }
}
