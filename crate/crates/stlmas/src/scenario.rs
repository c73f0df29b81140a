//! Scenario documents: schema, loading, and validation.
//!
//! A scenario is a JSON document. Times are in seconds, states in the
//! plant's own units; see the README for the field-by-field schema.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{reader_sets, ControlMode, ControllerError, TaskBinding};
use crate::dynamics::{AgentDynamics, DisturbanceSpec, DynamicsError, Drift, InputMatrix};
use crate::funnels::{check_spec, rho_opt, tune_gamma, FunnelError, FunnelSpec, Margin, Ppf, TuningOptions};
use crate::observer::{init_observer, Estimates, ObserverError, ObserverFunnels, ObserverNetwork, Pair};
use crate::stl::{parse_formula, Literal, Predicate, StlError};
use crate::topology::{
    cluster_induced_dag, compute_clusters, required_k, validate_assumptions, AssumptionReport, ClusterDag,
    Clustering, Graph, TopologyError,
};
use crate::{AgentId, StateMap};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("schema error at `{path}`: {msg}")]
    Schema { path: String, msg: String },
    #[error("communication graph is not connected: {0}")]
    CommunicationDisconnected(String),
    #[error("task graph is not acyclic: {0}")]
    TaskGraphCyclic(String),
    #[error("task neighbour inside a cluster is not a communication neighbour: {0}")]
    ClusterContainment(String),
    #[error("task `{task}`: adjusted funnel Gamma is not positive: {source}")]
    GammaNonPositive { task: String, source: FunnelError },
    #[error("task `{task}` is infeasible: {source}")]
    Infeasible { task: String, source: FunnelError },
    #[error("task `{task}`: initial robustness is outside its funnel: {source}")]
    TaskInitialization { task: String, source: FunnelError },
    #[error("observer initialization failed: {0}")]
    ObserverInitialization(ObserverError),
    #[error("task `{task}`: rho_max {rho_max} must lie in (0, rho_opt = {rho_opt})")]
    RhoOpt { task: String, rho_max: f64, rho_opt: f64 },
    #[error("task `{0}` negates a non-linear predicate, so its robustness is not concave")]
    NotConcave(String),
    #[error("task `{task}`: {source}")]
    Tuning { task: String, source: FunnelError },
    #[error("task `{task}`: {source}")]
    Formula { task: String, source: StlError },
    #[error("task `{task}`: {source}")]
    Binding { task: String, source: ControllerError },
    #[error("observer funnels: {0}")]
    ObserverFunnels(ObserverError),
    #[error("sign control mode needs a constant symmetric positive definite input matrix; agent {0} has none")]
    SignMode(AgentId),
    #[error("agent {agent}: {source}")]
    Dynamics { agent: AgentId, source: DynamicsError },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

fn schema(path: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema { path: path.into(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    /// Simulated time span, seconds.
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub agents: Vec<AgentFile>,
    /// Undirected communication edges.
    pub communication: Vec<(usize, usize)>,
    pub predicates: BTreeMap<String, PredicateFile>,
    pub tasks: Vec<TaskFile>,
    pub observer: ObserverFile,
    #[serde(default)]
    pub disturbance: DisturbanceFile,
    #[serde(default)]
    pub control: ControlMode,
    #[serde(default)]
    pub tuning: TuningFile,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_eta() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub id: usize,
    pub initial: Vec<f64>,
    pub drift: Drift,
    pub input: InputMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeff {
    /// Multiple of the identity.
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixTerm {
    pub agent: usize,
    pub coeff: Coeff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorTerm {
    pub agent: usize,
    pub coeff: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredicateFile {
    Norm2Le {
        terms: Vec<MatrixTerm>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
        radius_sq: f64,
    },
    Linear {
        terms: Vec<VectorTerm>,
        #[serde(default)]
        bias: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpfFile {
    pub v0: f64,
    pub v_inf: f64,
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub name: String,
    pub owner: usize,
    pub formula: String,
    pub rho_max: f64,
    #[serde(default)]
    pub r_target: Option<f64>,
    #[serde(default)]
    pub band: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub min_decay: Option<f64>,
    /// Explicit `γ`, checked instead of tuned.
    #[serde(default)]
    pub gamma: Option<PpfFile>,
    /// Adds the conjunct `‖x_read‖² ≤ bound²` over the stacked read states.
    #[serde(default)]
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningFile {
    pub r_target: f64,
    pub band: f64,
    pub theta: f64,
    pub min_decay: f64,
}

impl Default for TuningFile {
    fn default() -> Self {
        TuningFile { r_target: 1.0, band: 1.0, theta: 0.6, min_decay: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceFile {
    pub bound: f64,
    #[serde(default = "one")]
    pub hold: usize,
}

fn one() -> usize {
    1
}

impl Default for DisturbanceFile {
    fn default() -> Self {
        DisturbanceFile { bound: 0.0, hold: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaFile {
    Uniform(f64),
    PerTarget(BTreeMap<String, f64>),
}

impl Default for AlphaFile {
    fn default() -> Self {
        AlphaFile::Uniform(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetFile {
    pub observer: usize,
    pub target: usize,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverFile {
    /// Decay rate shared by every `δ` and `ρ` funnel.
    pub decay: f64,
    #[serde(default)]
    pub alpha: AlphaFile,
    /// `[v0, v_inf]` of `δ` for any pair whose target is not listed in `delta_targets`.
    pub delta: (f64, f64),
    #[serde(default)]
    pub delta_targets: BTreeMap<String, (f64, f64)>,
    /// Explicit `[v0, v_inf]` of `ρ` per target; derived from `δ` when absent.
    #[serde(default)]
    pub rho_targets: BTreeMap<String, (f64, f64)>,
    #[serde(default)]
    pub offsets: Vec<OffsetFile>,
}

/// A validated scenario ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub steps: usize,
    pub dynamics: BTreeMap<AgentId, AgentDynamics>,
    pub initial: StateMap,
    pub gc: Graph,
    pub gt: Graph,
    pub clustering: Clustering,
    pub dag: ClusterDag,
    pub assumptions: AssumptionReport,
    pub k: usize,
    pub network: ObserverNetwork,
    pub observer: ObserverFunnels,
    pub initial_estimates: Estimates,
    pub tasks: Vec<TaskBinding>,
    pub disturbance: DisturbanceSpec,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.file.name
    }
    pub fn horizon(&self) -> f64 {
        self.file.horizon
    }
    pub fn dt(&self) -> f64 {
        self.file.dt
    }
    pub fn seed(&self) -> u64 {
        self.file.seed
    }
    pub fn eta(&self) -> f64 {
        self.file.eta
    }
    pub fn control(&self) -> ControlMode {
        self.file.control
    }

    pub fn dims(&self) -> BTreeMap<AgentId, usize> {
        self.dynamics.iter().map(|(a, d)| (*a, d.dim())).collect()
    }

    /// Re-validate with overrides applied.
    pub fn with_overrides(&self, over: &Overrides) -> Result<Scenario, ScenarioError> {
        let mut f = self.file.clone();
        over.apply(&mut f);
        compile(f)
    }
}

/// Command-line overrides of scenario fields.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub eta: Option<f64>,
    pub disturbance_bound: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, f: &mut ScenarioFile) {
        if let Some(s) = self.seed {
            f.seed = s;
        }
        if let Some(d) = self.dt {
            f.dt = d;
        }
        if let Some(e) = self.eta {
            f.eta = e;
        }
        if let Some(b) = self.disturbance_bound {
            f.disturbance.bound = b;
        }
    }
}

/// Parse a scenario document without validating it.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            ScenarioError::Parse { line: inner.line(), column: inner.column(), msg: inner.to_string() }
        } else {
            schema(path, inner.to_string())
        }
    })
}

/// Read, parse, and validate a scenario. A directory is accepted and
/// resolved to `<dir>/scenario.json`; a path without extension falls back
/// to `<path>.json`.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let resolved = resolve_path(path);
    let text = std::fs::read_to_string(&resolved).map_err(|source| ScenarioError::Io { path: resolved.clone(), source })?;
    compile(parse_scenario(&text)?)
}

pub fn resolve_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        return path.join("scenario.json");
    }
    if !path.exists() && path.extension().is_none() {
        return path.with_extension("json");
    }
    path.to_path_buf()
}

fn agent_id(n: usize, raw: usize, at: &str) -> Result<AgentId, ScenarioError> {
    if raw == 0 || raw > n {
        return Err(schema(at, format!("agent {raw} is outside 1..={n}")));
    }
    Ok(AgentId(raw))
}

fn key_agent(n: usize, key: &str, at: &str) -> Result<AgentId, ScenarioError> {
    let raw: usize = key.parse().map_err(|_| schema(at, format!("`{key}` is not an agent id")))?;
    agent_id(n, raw, at)
}

fn dense(rows: &[Vec<f64>], at: &str) -> Result<DMatrix<f64>, ScenarioError> {
    let nc = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(schema(at, "matrix must be nonempty and rectangular"));
    }
    Ok(DMatrix::from_fn(rows.len(), nc, |i, j| rows[i][j]))
}

fn build_predicate(
    name: &str,
    p: &PredicateFile,
    dims: &BTreeMap<AgentId, usize>,
) -> Result<Predicate, ScenarioError> {
    let n = dims.len();
    let at = format!("predicates.{name}");
    let invalid = |e: StlError| schema(at.clone(), e.to_string());
    match p {
        PredicateFile::Norm2Le { terms, offset, radius_sq } => {
            let mut built = Vec::new();
            for (k, t) in terms.iter().enumerate() {
                let a = agent_id(n, t.agent, &format!("{at}.terms[{k}]"))?;
                let c = match &t.coeff {
                    Coeff::Scalar(s) => DMatrix::identity(dims[&a], dims[&a]) * *s,
                    Coeff::Matrix(m) => dense(m, &format!("{at}.terms[{k}].coeff"))?,
                };
                if c.ncols() != dims[&a] {
                    return Err(schema(format!("{at}.terms[{k}].coeff"), format!("needs {} columns", dims[&a])));
                }
                built.push((a, c));
            }
            let rows = built.first().map_or(0, |(_, c)| c.nrows());
            let offset = match offset {
                Some(v) => DVector::from_column_slice(v),
                None => DVector::zeros(rows),
            };
            Predicate::norm2_le(built, offset, *radius_sq).map_err(invalid)
        }
        PredicateFile::Linear { terms, bias } => {
            let mut built = Vec::new();
            for (k, t) in terms.iter().enumerate() {
                let a = agent_id(n, t.agent, &format!("{at}.terms[{k}]"))?;
                if t.coeff.len() != dims[&a] {
                    return Err(schema(format!("{at}.terms[{k}].coeff"), format!("needs {} entries", dims[&a])));
                }
                built.push((a, DVector::from_column_slice(&t.coeff)));
            }
            Predicate::linear(built, *bias).map_err(invalid)
        }
    }
}

/// `‖[x_j]_j‖² ≤ bound²` over the stacked states of `agents`.
fn bound_predicate(agents: &BTreeSet<AgentId>, dims: &BTreeMap<AgentId, usize>, bound: f64) -> Result<Predicate, StlError> {
    let total: usize = agents.iter().map(|a| dims[a]).sum();
    let mut row = 0;
    let mut terms = Vec::new();
    for a in agents {
        let mut c = DMatrix::zeros(total, dims[a]);
        for k in 0..dims[a] {
            c[(row + k, k)] = 1.0;
        }
        row += dims[a];
        terms.push((*a, c));
    }
    Predicate::norm2_le(terms, DVector::zeros(total), bound * bound)
}

fn classify(task: &str, e: FunnelError) -> ScenarioError {
    let task = task.to_string();
    match e {
        FunnelError::NonPositiveGamma { .. } => ScenarioError::GammaNonPositive { task, source: e },
        FunnelError::Feasibility { .. } | FunnelError::MarginInfeasible { .. } => ScenarioError::Infeasible { task, source: e },
        FunnelError::Initialization { .. } => ScenarioError::TaskInitialization { task, source: e },
        other => ScenarioError::Tuning { task, source: other },
    }
}

/// Validate a parsed scenario.
pub fn compile(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    if !(file.horizon > 0.0 && file.horizon.is_finite()) {
        return Err(schema("horizon", "must be positive"));
    }
    if !(file.dt > 0.0) {
        return Err(schema("dt", "must be positive"));
    }
    let steps = (file.horizon / file.dt).round();
    if (steps * file.dt - file.horizon).abs() > 1e-9 * file.horizon || steps < 1.0 {
        return Err(schema("dt", format!("{} does not divide the horizon {}", file.dt, file.horizon)));
    }
    if !(file.eta > 0.0) {
        return Err(schema("eta", "must be positive"));
    }
    let n = file.agents.len();
    let mut dynamics = BTreeMap::new();
    let mut initial = StateMap::new();
    for (k, a) in file.agents.iter().enumerate() {
        if a.id != k + 1 {
            return Err(schema(format!("agents[{k}].id"), "agents must be listed as 1, 2, ..., N"));
        }
        let id = AgentId(a.id);
        let d = AgentDynamics::new(&a.drift, a.input.clone()).map_err(|source| ScenarioError::Dynamics { agent: id, source })?;
        if a.initial.len() != d.dim() {
            return Err(schema(format!("agents[{k}].initial"), format!("needs {} entries", d.dim())));
        }
        initial.insert(id, DVector::from_column_slice(&a.initial));
        dynamics.insert(id, d);
    }
    let dims: BTreeMap<AgentId, usize> = dynamics.iter().map(|(a, d)| (*a, d.dim())).collect();
    if let ControlMode::Sign { gain } = file.control {
        if !(gain > 0.0) {
            return Err(schema("control.gain", "must be positive"));
        }
        for (a, d) in &dynamics {
            let g = d.input_matrix(&initial[a]);
            let constant = matches!(file.agents[a.0 - 1].input, InputMatrix::Identity | InputMatrix::Constant { .. });
            let symmetric = g.is_square() && (&g - g.transpose()).amax() < 1e-12;
            if !constant || !symmetric || g.clone().cholesky().is_none() {
                return Err(ScenarioError::SignMode(*a));
            }
        }
    }

    let gc = Graph::undirected(n, file.communication.iter().cloned())?;

    let mut table = BTreeMap::new();
    for (name, p) in &file.predicates {
        table.insert(name.clone(), build_predicate(name, p, &dims)?);
    }

    let tuning = file.tuning;
    let mut parsed = Vec::new();
    let mut names = BTreeSet::new();
    for (k, t) in file.tasks.iter().enumerate() {
        if !names.insert(t.name.clone()) {
            return Err(schema(format!("tasks[{k}].name"), format!("duplicate task `{}`", t.name)));
        }
        let owner = agent_id(n, t.owner, &format!("tasks[{k}].owner"))?;
        let mut formula =
            parse_formula(&t.formula, &table).map_err(|source| ScenarioError::Formula { task: t.name.clone(), source })?;
        if formula.body.atoms().next().is_none() {
            return Err(ScenarioError::Binding { task: t.name.clone(), source: ControllerError::NoAtoms(t.name.clone()) });
        }
        if formula.temporal.horizon() > file.horizon + 1e-12 {
            return Err(ScenarioError::Formula {
                task: t.name.clone(),
                source: StlError::WindowExceedsHorizon { needed: formula.temporal.horizon(), horizon: file.horizon },
            });
        }
        if !formula.body.is_concave() {
            return Err(ScenarioError::NotConcave(t.name.clone()));
        }
        if let Some(b) = t.bound {
            let mut read = formula.body.agents();
            read.insert(owner);
            let predicate = bound_predicate(&read, &dims, b).map_err(|source| ScenarioError::Formula { task: t.name.clone(), source })?;
            formula.body.literals.push(Literal::Atom { name: "bound".into(), predicate, negated: false });
        }
        parsed.push((t, owner, formula));
    }

    let mut task_edges = Vec::new();
    for (_, owner, formula) in &parsed {
        for a in formula.body.agents() {
            task_edges.push((owner.0, a.0));
        }
    }
    let gt = Graph::directed(n, task_edges)?;
    let clustering = compute_clusters(&gc, &gt)?;
    let assumptions = validate_assumptions(&gc, &gt, &clustering);
    if let Some(w) = failing(&assumptions.connected) {
        return Err(ScenarioError::CommunicationDisconnected(w));
    }
    if let Some(w) = failing(&assumptions.acyclic) {
        return Err(ScenarioError::TaskGraphCyclic(w));
    }
    if let Some(w) = failing(&assumptions.containment) {
        return Err(ScenarioError::ClusterContainment(w));
    }
    let dag = cluster_induced_dag(&clustering, &gt)?;
    let k = required_k(&gc, &gt)?;
    let network = ObserverNetwork::new(&gc, k).map_err(ScenarioError::ObserverFunnels)?;

    let obs = &file.observer;
    let mut delta = BTreeMap::new();
    let mut target_delta = BTreeMap::new();
    for (key, v) in &obs.delta_targets {
        target_delta.insert(key_agent(n, key, "observer.delta_targets")?, *v);
    }
    let ppf = |v: (f64, f64), at: &str| Ppf::new(v.0, v.1, obs.decay).map_err(|e| schema(at, e.to_string()));
    for p in network.pairs() {
        let v = target_delta.get(&p.target).copied().unwrap_or(obs.delta);
        delta.insert(p, ppf(v, "observer.delta")?);
    }
    let alpha: BTreeMap<AgentId, f64> = match &obs.alpha {
        AlphaFile::Uniform(a) => network.targets().into_iter().map(|r| (r, *a)).collect(),
        AlphaFile::PerTarget(m) => {
            let mut out = BTreeMap::new();
            for (key, a) in m {
                out.insert(key_agent(n, key, "observer.alpha")?, *a);
            }
            out
        }
    };
    if alpha.values().any(|a| !(*a > 0.0)) {
        return Err(schema("observer.alpha", "must be positive"));
    }
    let mut observer = ObserverFunnels::derived(&network, delta, alpha, &dims).map_err(ScenarioError::ObserverFunnels)?;
    for (key, v) in &obs.rho_targets {
        let r = key_agent(n, key, "observer.rho_targets")?;
        let f = ppf(*v, "observer.rho_targets")?;
        for i in network.observers_of(r) {
            observer.rho.insert(Pair { observer: i, target: r }, f);
        }
    }
    observer.validate(&network, &dims).map_err(ScenarioError::ObserverFunnels)?;

    let mut offsets = BTreeMap::new();
    for (k, o) in obs.offsets.iter().enumerate() {
        let at = format!("observer.offsets[{k}]");
        let pair = Pair { observer: agent_id(n, o.observer, &at)?, target: agent_id(n, o.target, &at)? };
        if !network.links.contains_key(&pair) {
            return Err(schema(at, format!("{pair} is not an observer pair")));
        }
        if o.value.len() != dims[&pair.target] {
            return Err(schema(at, "offset dimension mismatch"));
        }
        offsets.insert(pair, DVector::from_column_slice(&o.value));
    }
    let initial_estimates =
        init_observer(&network, &observer, &initial, &offsets).map_err(ScenarioError::ObserverInitialization)?;

    let mut tasks = Vec::new();
    for (t, owner, formula) in parsed {
        let name = t.name.clone();
        let (communicated, estimated) = reader_sets(&name, owner, &formula.body.agents(), &gc, k)
            .map_err(|source| ScenarioError::Binding { task: name.clone(), source })?;
        let est_funnels: BTreeMap<AgentId, Ppf> =
            estimated.iter().map(|a| (*a, observer.delta[&Pair { observer: owner, target: *a }])).collect();
        let margin = Margin::for_body(&formula.body, &est_funnels);
        let opt = rho_opt(&formula.body, file.eta, &dims).map_err(|e| classify(&name, e))?;
        if !(t.rho_max > 0.0 && t.rho_max < opt) {
            return Err(ScenarioError::RhoOpt { task: name, rho_max: t.rho_max, rho_opt: opt });
        }
        let mut binding = TaskBinding {
            name: name.clone(),
            owner,
            formula,
            spec: FunnelSpec { gamma: Ppf::constant(1.0).expect("valid"), rho_max: t.rho_max, margin: margin.clone(), eta: file.eta },
            communicated,
            estimated,
        };
        let view = binding
            .view(&initial, &initial_estimates)
            .map_err(|source| ScenarioError::Binding { task: name.clone(), source })?;
        let rho_hat_0 = binding
            .formula
            .body
            .eval_smooth(&view, file.eta)
            .map_err(|source| ScenarioError::Formula { task: name.clone(), source })?;
        let spec = match t.gamma {
            Some(g) => {
                let gamma = Ppf::new(g.v0, g.v_inf, g.decay).map_err(|e| classify(&name, e))?;
                let spec = FunnelSpec { gamma, rho_max: t.rho_max, margin, eta: file.eta };
                check_spec(&spec, rho_hat_0, file.horizon).map_err(|e| classify(&name, e))?;
                spec
            }
            None => {
                let opts = TuningOptions {
                    band: t.band.unwrap_or(tuning.band),
                    theta: t.theta.unwrap_or(tuning.theta),
                    min_decay: t.min_decay.unwrap_or(tuning.min_decay),
                    horizon: file.horizon,
                    eta: file.eta,
                };
                let r_target = t.r_target.unwrap_or(tuning.r_target);
                tune_gamma(&binding.formula.temporal, t.rho_max, rho_hat_0, r_target, &margin, &opts)
                    .map_err(|e| classify(&name, e))?
            }
        };
        binding.spec = spec;
        tasks.push(binding);
    }

    let disturbance = DisturbanceSpec { bound: file.disturbance.bound, hold: file.disturbance.hold };
    if !(disturbance.bound >= 0.0) || disturbance.hold == 0 {
        return Err(schema("disturbance", "bound must be nonnegative and hold at least 1"));
    }
    Ok(Scenario {
        steps: steps as usize,
        file,
        dynamics,
        initial,
        gc,
        gt,
        clustering,
        dag,
        assumptions,
        k,
        network,
        observer,
        initial_estimates,
        tasks,
        disturbance,
    })
}

fn failing(c: &crate::topology::Check) -> Option<String> {
    (!c.passed).then(|| c.witness.clone().unwrap_or_default())
}
