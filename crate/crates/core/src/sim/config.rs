//! JSON run configuration.
//!
//! [`ConfigFile`] mirrors the document on disk; [`SimConfig`] is the
//! validated, ready-to-run form. Every validation failure names the offending
//! field with a JSON-style path.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::ControllerParams;
use crate::error::{ConfigError, Error, Result};
use crate::expr::{Monomial, Polynomial, Var};
use crate::graph::{Digraph, GraphFamily, SwitchingSchedule};
use crate::leader::{companion, Exosystem, DEFAULT_SPECTRUM_TOL};
use crate::observer::ObserverParams;
use crate::observer::ObserverState;
use crate::plant::{AgentModel, Disturbance, NoDisturbance, PolynomialRegressor, Regressor, VanDerPol};
use crate::sim::closed_loop::ControlLaw;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub exosystem: ExosystemSpec,
    pub agents: Vec<AgentSpec>,
    pub graphs: Vec<GraphSpec>,
    pub schedule: ScheduleSpec,
    pub observer: ObserverSpec,
    pub controller: ControllerSpecs,
    pub init: InitSpec,
    #[serde(default)]
    pub sim: SimSpec,
}

/// Either a companion bottom row `alpha` with a disturbance block `Sb`, or a
/// list of rotation `frequencies`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExosystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(rename = "Sb", default, skip_serializing_if = "Option::is_none")]
    pub sb: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<FrequencySpec>,
    pub v0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySpec {
    pub reference: f64,
    #[serde(default)]
    pub disturbance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    pub theta: Vec<f64>,
    pub regressor: RegressorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<ExprSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorSpec {
    VanDerPol,
    Polynomial { components: Vec<ExprSpec> },
}

/// A polynomial written as an expression string (`"w1^2*w2"`) or as a
/// coefficient table of `{coeff, powers}` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprSpec {
    Expr(String),
    Table(Vec<TermSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coeff: f64,
    /// Exponent of each indexed variable, in order.
    pub powers: Vec<u32>,
    /// Exponent of `t` (regressors only).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub t: u32,
}

fn is_zero(x: &u32) -> bool {
    *x == 0
}

/// A digraph as a full adjacency matrix (`adjacency[i][j] = ā_ij`) or as an
/// edge list of `[from, to]` / `[from, to, weight]` entries.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// The cycle's graphs each held for `period / cycle.len()`.
    Periodic { period: f64, cycle: Vec<usize> },
    Explicit {
        switch_times: Vec<f64>,
        indices: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dwell: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    /// Static-observer gain; defaults to `mu2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    pub mu1: f64,
    pub mu2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControllerSpecs {
    Shared(ControllerSpec),
    PerAgent(Vec<ControllerSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub beta: Vec<f64>,
    pub k: f64,
    /// Adaptation gain; identity when absent.
    #[serde(rename = "Lambda", default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_small_k: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub x: Vec<Vec<f64>>,
    pub vhat: Vec<Vec<f64>>,
    /// Per-agent `Ŝᵢ(0)`. Defaults to the companion scaffold with zero bottom
    /// row and a zero disturbance block.
    #[serde(rename = "Shat", default, skip_serializing_if = "Option::is_none")]
    pub s_hat: Option<Vec<Vec<Vec<f64>>>>,
    /// Per-agent `θ̂ᵢ(0)`; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub law: ControlLaw,
    /// Skip the spectrum and joint-connectivity checks.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub waive_assumptions: bool,
    /// Joint-connectivity window; defaults to twice the period of a periodic
    /// schedule, or the horizon plus one dwell for an explicit one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_tol: Option<f64>,
    /// Output directory used when the command line gives none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            law: ControlLaw::Distributed,
            waive_assumptions: false,
            epsilon: None,
            spectrum_tol: None,
            out_dir: None,
        }
    }
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(ConfigError::new(
                if path == "." { "<root>".into() } else { path },
                e.into_inner().to_string(),
            ))
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Initial values of everything the loop integrates.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    pub v: DVector<f64>,
    pub x: Vec<DVector<f64>>,
    pub observers: Vec<ObserverState>,
    pub theta_hat: Vec<DVector<f64>>,
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub exosystem: Exosystem,
    pub agents: Vec<AgentModel>,
    pub controllers: Vec<ControllerParams>,
    pub family: GraphFamily,
    pub schedule: ScheduleSpec,
    pub observer: ObserverParams,
    pub init: InitialConditions,
    pub dt: f64,
    pub horizon: f64,
    pub law: ControlLaw,
    pub waive_assumptions: bool,
    pub epsilon: Option<f64>,
    pub spectrum_tol: f64,
}

type CResult<T> = std::result::Result<T, ConfigError>;

fn at(path: impl Into<String>) -> impl FnOnce(Error) -> ConfigError {
    let path = path.into();
    move |e| ConfigError::new(path, e.to_string())
}

fn matrix(path: &str, rows: &[Vec<f64>], n: usize) -> CResult<DMatrix<f64>> {
    if rows.len() != n {
        return Err(ConfigError::new(
            path,
            format!("expected {n} rows, found {}", rows.len()),
        ));
    }
    for (k, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(ConfigError::new(
                format!("{path}[{k}]"),
                format!("expected {n} columns, found {}", row.len()),
            ));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn vector(path: &str, values: &[f64], n: usize) -> CResult<DVector<f64>> {
    if values.len() != n {
        return Err(ConfigError::new(
            path,
            format!("expected length {n}, found {}", values.len()),
        ));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError::new(path, "values must be finite"));
    }
    Ok(DVector::from_column_slice(values))
}

fn polynomial(path: &str, spec: &ExprSpec, prefix: char, arity: usize, allow_time: bool) -> CResult<Polynomial> {
    let poly = match spec {
        ExprSpec::Expr(src) => Polynomial::parse(src, prefix, allow_time).map_err(at(path))?,
        ExprSpec::Table(rows) => {
            let mut terms = Vec::with_capacity(rows.len());
            for (k, row) in rows.iter().enumerate() {
                if row.t > 0 && !allow_time {
                    return Err(ConfigError::new(
                        format!("{path}[{k}].t"),
                        "time is not a variable here",
                    ));
                }
                if row.powers.len() > arity {
                    return Err(ConfigError::new(
                        format!("{path}[{k}].powers"),
                        format!("at most {arity} exponents expected, found {}", row.powers.len()),
                    ));
                }
                let mut factors: Vec<(Var, u32)> = row
                    .powers
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0)
                    .map(|(i, &p)| (Var::Indexed(i), p))
                    .collect();
                if row.t > 0 {
                    factors.push((Var::Time, row.t));
                }
                terms.push(Monomial {
                    coeff: row.coeff,
                    factors,
                });
            }
            Polynomial::new(prefix, terms)
        }
    };
    if poly.arity() > arity {
        return Err(ConfigError::new(
            path,
            format!("references {prefix}{} but only {arity} variables exist", poly.arity()),
        ));
    }
    Ok(poly)
}

fn exosystem(spec: &ExosystemSpec) -> CResult<Exosystem> {
    let exo = match (&spec.alpha, &spec.frequencies) {
        (Some(alpha), None) => {
            if let Some(r) = spec.r {
                if r != alpha.len() {
                    return Err(ConfigError::new(
                        "exosystem.alpha",
                        format!("expected r = {r} coefficients, found {}", alpha.len()),
                    ));
                }
            }
            let sb_rows = spec.sb.clone().unwrap_or_default();
            let sb = matrix("exosystem.Sb", &sb_rows, sb_rows.len())?;
            Exosystem::new(alpha.clone(), sb).map_err(at("exosystem"))?
        }
        (None, Some(f)) => {
            if spec.r.is_some_and(|r| r != 2) {
                return Err(ConfigError::new("exosystem.r", "frequency form has r = 2"));
            }
            Exosystem::from_frequencies(f.reference, &f.disturbance).map_err(at("exosystem.frequencies"))?
        }
        (Some(_), Some(_)) => {
            return Err(ConfigError::new(
                "exosystem",
                "give either alpha/Sb or frequencies, not both",
            ))
        }
        (None, None) => return Err(ConfigError::new("exosystem", "missing alpha (with Sb) or frequencies")),
    };
    Ok(exo)
}

fn graph(path: &str, spec: &GraphSpec) -> CResult<Digraph> {
    let g = match (&spec.adjacency, &spec.edges) {
        (Some(rows), None) => {
            if spec.nodes.is_some_and(|n| n != rows.len()) {
                return Err(ConfigError::new(
                    format!("{path}.nodes"),
                    "disagrees with the adjacency size",
                ));
            }
            let a = matrix(&format!("{path}.adjacency"), rows, rows.len())?;
            Digraph::from_adjacency(a).map_err(at(format!("{path}.adjacency")))?
        }
        (None, Some(edges)) => {
            let n = spec
                .nodes
                .ok_or_else(|| ConfigError::new(format!("{path}.nodes"), "required with an edge list"))?;
            let mut triples = Vec::with_capacity(edges.len());
            for (k, e) in edges.iter().enumerate() {
                let epath = format!("{path}.edges[{k}]");
                let node = |x: f64| -> CResult<usize> {
                    if x >= 0.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(ConfigError::new(epath.clone(), format!("`{x}` is not a node index")))
                    }
                };
                match e[..] {
                    [from, to] => triples.push((node(from)?, node(to)?, 1.0)),
                    [from, to, w] => triples.push((node(from)?, node(to)?, w)),
                    _ => return Err(ConfigError::new(epath, "expected [from, to] or [from, to, weight]")),
                }
            }
            Digraph::from_edges(n, &triples).map_err(at(format!("{path}.edges")))?
        }
        _ => {
            return Err(ConfigError::new(path, "give exactly one of adjacency or edges"));
        }
    };
    let violations = g.validate();
    if !violations.is_empty() {
        return Err(ConfigError::new(path, Error::InvalidGraph(violations).to_string()));
    }
    Ok(g)
}

impl ScheduleSpec {
    /// Shortest interval the schedule may produce.
    pub fn dwell(&self) -> f64 {
        match self {
            ScheduleSpec::Periodic { period, cycle } => period / cycle.len() as f64,
            ScheduleSpec::Explicit {
                switch_times, dwell, ..
            } => dwell.unwrap_or_else(|| {
                switch_times
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(f64::INFINITY, f64::min)
            }),
        }
    }

    /// The concrete switching signal on `[0, end)`.
    pub fn materialize(&self, end: f64) -> Result<SwitchingSchedule> {
        match self {
            ScheduleSpec::Periodic { period, cycle } => periodic_schedule(*period, cycle, end),
            ScheduleSpec::Explicit {
                switch_times, indices, ..
            } => {
                let mut dwell = self.dwell();
                if !dwell.is_finite() {
                    dwell = end.max(1.0);
                }
                let keep = switch_times
                    .iter()
                    .enumerate()
                    .take_while(|&(k, &s)| k == 0 || s < end)
                    .count();
                SwitchingSchedule::new(
                    switch_times[..keep].to_vec(),
                    indices[..keep].to_vec(),
                    dwell,
                    end.max(switch_times[0]),
                )
            }
        }
    }

    fn default_epsilon(&self, horizon: f64) -> f64 {
        match self {
            ScheduleSpec::Periodic { period, .. } => 2.0 * period,
            ScheduleSpec::Explicit { .. } => horizon + self.dwell().min(horizon.max(1.0)),
        }
    }
}

/// `σ(t) = cycle[k]` on `[sT₀ + kT₀/n, sT₀ + (k+1)T₀/n)` for `s = 0, 1, ...`,
/// truncated at `horizon`.
pub fn periodic_schedule(period: f64, cycle: &[usize], horizon: f64) -> Result<SwitchingSchedule> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::param("period", "must be positive"));
    }
    if cycle.is_empty() {
        return Err(Error::param("cycle", "must not be empty"));
    }
    let n = cycle.len();
    let dwell = period / n as f64;
    let mut times = Vec::new();
    let mut indices = Vec::new();
    let mut k = 0usize;
    loop {
        let t = (k / n) as f64 * period + (k % n) as f64 * dwell;
        if k > 0 && t >= horizon {
            break;
        }
        times.push(t);
        indices.push(cycle[k % n]);
        k += 1;
    }
    SwitchingSchedule::new(times, indices, dwell, horizon.max(0.0))
}

impl SimConfig {
    pub fn from_file(file: &ConfigFile) -> std::result::Result<Self, ConfigError> {
        let exosystem = exosystem(&file.exosystem)?;
        let (r, n_w, q) = (exosystem.r(), exosystem.n_w(), exosystem.q());
        let v0 = vector("exosystem.v0", &file.exosystem.v0, q)?;

        if file.agents.is_empty() {
            return Err(ConfigError::new("agents", "at least one follower is required"));
        }
        let n = file.agents.len();
        let mut agents = Vec::with_capacity(n);
        for (i, spec) in file.agents.iter().enumerate() {
            let path = format!("agents[{i}]");
            if spec.r.is_some_and(|ar| ar != r) {
                return Err(ConfigError::new(
                    format!("{path}.r"),
                    format!("agent order must match the reference order {r}"),
                ));
            }
            let regressor: Arc<dyn Regressor> = match &spec.regressor {
                RegressorSpec::VanDerPol => {
                    if r != 2 {
                        return Err(ConfigError::new(format!("{path}.regressor"), "van_der_pol needs r = 2"));
                    }
                    Arc::new(VanDerPol)
                }
                RegressorSpec::Polynomial { components } => {
                    let polys = components
                        .iter()
                        .enumerate()
                        .map(|(k, c)| polynomial(&format!("{path}.regressor.components[{k}]"), c, 'x', r, true))
                        .collect::<CResult<Vec<_>>>()?;
                    Arc::new(PolynomialRegressor::new(polys))
                }
            };
            let disturbance: Arc<dyn Disturbance> = match &spec.disturbance {
                Some(d) => Arc::new(polynomial(&format!("{path}.disturbance"), d, 'w', n_w, false)?),
                None => Arc::new(NoDisturbance),
            };
            let theta = vector(&format!("{path}.theta"), &spec.theta, regressor.dim())?;
            agents.push(AgentModel::new(r, regressor, theta, disturbance).map_err(at(path))?);
        }

        let graphs = file
            .graphs
            .iter()
            .enumerate()
            .map(|(k, g)| graph(&format!("graphs[{k}]"), g))
            .collect::<CResult<Vec<_>>>()?;
        if graphs.is_empty() {
            return Err(ConfigError::new("graphs", "at least one graph is required"));
        }
        let family = GraphFamily::new(graphs).map_err(at("graphs"))?;
        if family.node_count() != n + 1 {
            return Err(ConfigError::new(
                "graphs",
                format!(
                    "graphs have {} nodes but there are {n} agents plus the leader",
                    family.node_count()
                ),
            ));
        }

        match &file.schedule {
            ScheduleSpec::Periodic { period, cycle } => {
                if !(*period > 0.0 && period.is_finite()) {
                    return Err(ConfigError::new("schedule.period", "must be positive"));
                }
                if cycle.is_empty() {
                    return Err(ConfigError::new("schedule.cycle", "must not be empty"));
                }
                if let Some(k) = cycle.iter().position(|&c| c == 0 || c > family.len()) {
                    return Err(ConfigError::new(
                        format!("schedule.cycle[{k}]"),
                        format!("index must lie in 1..={}", family.len()),
                    ));
                }
            }
            ScheduleSpec::Explicit { indices, .. } => {
                if let Some(k) = indices.iter().position(|&c| c == 0 || c > family.len()) {
                    return Err(ConfigError::new(
                        format!("schedule.indices[{k}]"),
                        format!("index must lie in 1..={}", family.len()),
                    ));
                }
                file.schedule.materialize(f64::INFINITY).map_err(at("schedule"))?;
            }
        }

        let mu0 = file.observer.mu0.unwrap_or(file.observer.mu2);
        let observer = ObserverParams::new(mu0, file.observer.mu1, file.observer.mu2).map_err(at("observer"))?;

        let controller_specs: Vec<(String, &ControllerSpec)> = match &file.controller {
            ControllerSpecs::Shared(c) => (0..n).map(|_| ("controller".to_string(), c)).collect(),
            ControllerSpecs::PerAgent(list) => {
                if list.len() != n {
                    return Err(ConfigError::new(
                        "controller",
                        format!("expected {n} per-agent entries, found {}", list.len()),
                    ));
                }
                list.iter()
                    .enumerate()
                    .map(|(i, c)| (format!("controller[{i}]"), c))
                    .collect()
            }
        };
        let mut controllers = Vec::with_capacity(n);
        for (i, (path, spec)) in controller_specs.into_iter().enumerate() {
            let m = agents[i].m();
            if spec.beta.len() + 1 != r {
                return Err(ConfigError::new(
                    format!("{path}.beta"),
                    format!("expected r - 1 = {} coefficients, found {}", r - 1, spec.beta.len()),
                ));
            }
            let lambda = match &spec.lambda {
                Some(rows) => matrix(&format!("{path}.Lambda"), rows, m)?,
                None => DMatrix::identity(m, m),
            };
            controllers
                .push(ControllerParams::new(spec.beta.clone(), spec.k, lambda, spec.allow_small_k).map_err(at(path))?);
        }

        let per_agent = |name: &str, rows: &Vec<Vec<f64>>| -> CResult<()> {
            if rows.len() != n {
                return Err(ConfigError::new(
                    format!("init.{name}"),
                    format!("expected {n} entries, found {}", rows.len()),
                ));
            }
            Ok(())
        };
        per_agent("x", &file.init.x)?;
        per_agent("vhat", &file.init.vhat)?;
        let x = (0..n)
            .map(|i| vector(&format!("init.x[{i}]"), &file.init.x[i], r))
            .collect::<CResult<Vec<_>>>()?;
        let v_hats = (0..n)
            .map(|i| vector(&format!("init.vhat[{i}]"), &file.init.vhat[i], q))
            .collect::<CResult<Vec<_>>>()?;
        let s_hats = match &file.init.s_hat {
            Some(list) => {
                if list.len() != n {
                    return Err(ConfigError::new(
                        "init.Shat",
                        format!("expected {n} entries, found {}", list.len()),
                    ));
                }
                list.iter()
                    .enumerate()
                    .map(|(i, m)| matrix(&format!("init.Shat[{i}]"), m, q))
                    .collect::<CResult<Vec<_>>>()?
            }
            None => vec![default_s_hat(r, n_w); n],
        };
        let theta_hat = match &file.init.theta_hat {
            Some(list) => {
                per_agent("theta_hat", list)?;
                list.iter()
                    .enumerate()
                    .map(|(i, th)| vector(&format!("init.theta_hat[{i}]"), th, agents[i].m()))
                    .collect::<CResult<Vec<_>>>()?
            }
            None => agents.iter().map(|a| DVector::zeros(a.m())).collect(),
        };
        let observers = s_hats
            .into_iter()
            .zip(v_hats)
            .map(|(s, v)| ObserverState::new(s, v))
            .collect();

        let cfg = SimConfig {
            exosystem,
            agents,
            controllers,
            family,
            schedule: file.schedule.clone(),
            observer,
            init: InitialConditions {
                v: v0,
                x,
                observers,
                theta_hat,
            },
            dt: file.sim.dt,
            horizon: file.sim.horizon,
            law: file.sim.law,
            waive_assumptions: file.sim.waive_assumptions,
            epsilon: file.sim.epsilon,
            spectrum_tol: file.sim.spectrum_tol.unwrap_or(DEFAULT_SPECTRUM_TOL),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Self::from_file(&ConfigFile::from_json(text)?)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_file(&ConfigFile::from_path(path)?)?)
    }

    /// Checks the run-time invariants that can change when fields are edited
    /// after construction.
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::new("sim.dt", "must be positive"));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::new("sim.horizon", "must be non-negative"));
        }
        let dwell = self.schedule.dwell();
        if self.dt > dwell {
            return Err(ConfigError::new(
                "sim.dt",
                format!("step {} exceeds the dwell time {dwell}", self.dt),
            ));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > dwell) {
                return Err(ConfigError::new(
                    "sim.epsilon",
                    format!("must exceed the dwell time {dwell}"),
                ));
            }
        }
        Ok(())
    }

    pub fn s(&self) -> DMatrix<f64> {
        self.exosystem.build_s()
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// The switching signal over the configured horizon.
    pub fn switching_schedule(&self) -> Result<SwitchingSchedule> {
        self.schedule.materialize(self.horizon)
    }

    pub fn connectivity_window(&self) -> f64 {
        self.epsilon
            .unwrap_or_else(|| self.schedule.default_epsilon(self.horizon))
    }
}

/// `Ŝ_a` scaffold (superdiagonal ones, zero bottom row) and a zero `Ŝ_b`.
pub fn default_s_hat(r: usize, n_w: usize) -> DMatrix<f64> {
    let q = r + n_w;
    let mut s = DMatrix::zeros(q, q);
    s.view_mut((0, 0), (r, r)).copy_from(&companion(&vec![0.0; r]));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::example_config;

    #[test]
    fn example_config_round_trips_through_json() {
        let file = example_config();
        let again = ConfigFile::from_json(&file.to_json()).unwrap();
        assert_eq!(file, again);
        let cfg = SimConfig::from_file(&again).unwrap();
        assert_eq!(cfg.agent_count(), 4);
        assert_eq!(cfg.exosystem.q(), 4);
    }

    #[test]
    fn malformed_json_reports_field_path() {
        let mut value: serde_json::Value = serde_json::from_str(&example_config().to_json()).unwrap();
        value["agents"][2]["theta"] = serde_json::json!("oops");
        let err = ConfigFile::from_json(&value.to_string()).unwrap_err();
        match err {
            Error::Config(c) => assert_eq!(c.path, "agents[2].theta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_errors_report_field_path() {
        let mut file = example_config();
        file.agents[1].theta = vec![1.0];
        assert_eq!(SimConfig::from_file(&file).unwrap_err().path, "agents[1].theta");

        let mut file = example_config();
        file.init.vhat[3] = vec![0.0; 3];
        assert_eq!(SimConfig::from_file(&file).unwrap_err().path, "init.vhat[3]");

        let mut file = example_config();
        if let ControllerSpecs::Shared(c) = &mut file.controller {
            c.k = 1.0;
        }
        let err = SimConfig::from_file(&file).unwrap_err();
        assert_eq!(err.path, "controller");
        assert!(err.message.contains("allow_small_k"));

        let mut file = example_config();
        file.graphs[0].edges = Some(vec![vec![1.0, 0.0]]);
        assert_eq!(SimConfig::from_file(&file).unwrap_err().path, "graphs[0]");

        let mut file = example_config();
        file.sim.dt = 0.5;
        assert_eq!(SimConfig::from_file(&file).unwrap_err().path, "sim.dt");

        let mut file = example_config();
        file.schedule = ScheduleSpec::Periodic {
            period: 1.0,
            cycle: vec![1, 5],
        };
        assert_eq!(SimConfig::from_file(&file).unwrap_err().path, "schedule.cycle[1]");

        let mut file = example_config();
        file.agents[0].disturbance = Some(ExprSpec::Expr("w3".into()));
        assert_eq!(SimConfig::from_file(&file).unwrap_err().path, "agents[0].disturbance");
    }

    #[test]
    fn alternative_forms() {
        let mut file = example_config();
        file.exosystem = ExosystemSpec {
            frequencies: Some(FrequencySpec {
                reference: 1.0,
                disturbance: vec![0.5],
            }),
            v0: file.exosystem.v0.clone(),
            ..Default::default()
        };
        file.graphs[0] = GraphSpec {
            adjacency: Some(vec![
                vec![0.0; 5],
                vec![1.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0; 5],
                vec![0.0; 5],
                vec![0.0; 5],
            ]),
            ..Default::default()
        };
        file.agents[0].regressor = RegressorSpec::Polynomial {
            components: vec![
                ExprSpec::Expr("-x1".into()),
                ExprSpec::Table(vec![
                    TermSpec {
                        coeff: 1.0,
                        powers: vec![0, 1],
                        t: 0,
                    },
                    TermSpec {
                        coeff: -1.0,
                        powers: vec![2, 1],
                        t: 0,
                    },
                ]),
            ],
        };
        file.agents[0].disturbance = Some(ExprSpec::Table(vec![TermSpec {
            coeff: 1.0,
            powers: vec![2, 2],
            t: 0,
        }]));
        let cfg = SimConfig::from_file(&file).unwrap();
        let reference = SimConfig::from_file(&example_config()).unwrap();
        assert_eq!(cfg.exosystem, reference.exosystem);
        assert_eq!(cfg.family.graphs()[0], reference.family.graphs()[0]);
        let x = [0.7, -1.2];
        let a = cfg.agents[0].regressor().eval(&x, 0.0);
        let b = reference.agents[0].regressor().eval(&x, 0.0);
        assert!((a - b).amax() < 1e-12);
        assert_eq!(cfg.agents[0].disturbance().eval(&[2.0, 3.0]), 36.0);
    }

    #[test]
    fn periodic_schedule_phases() {
        let s = periodic_schedule(1.0, &[1, 2, 3, 4], 3.0).unwrap();
        assert_eq!(s.index_at(0.3), 2);
        for k in 0..3 {
            assert_eq!(s.index_at(k as f64), 1);
        }
        assert_eq!(s.dwell(), 0.25);
        assert_eq!(s.interval_count(), 12);
        assert_eq!(s.index_at(0.8), 4);
        assert_eq!(periodic_schedule(1.0, &[1, 2], 0.0).unwrap().interval_count(), 1);
    }

    #[test]
    fn explicit_schedule_is_truncated_at_horizon() {
        let spec = ScheduleSpec::Explicit {
            switch_times: vec![0.0, 1.0, 2.5, 4.0],
            indices: vec![1, 2, 1, 2],
            dwell: None,
        };
        assert_eq!(spec.dwell(), 1.0);
        let s = spec.materialize(3.0).unwrap();
        assert_eq!(s.switch_times(), &[0.0, 1.0, 2.5]);
        assert_eq!(s.end(), 3.0);
    }
}
