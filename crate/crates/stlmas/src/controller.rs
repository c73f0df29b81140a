//! Decentralized prescribed-performance control law.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::funnels::{FunnelError, FunnelSpec};
use crate::observer::{Estimates, Pair};
use crate::stl::{Formula, StlError};
use crate::topology::{k_hop_neighbors, Graph, TopologyError};
use crate::{AgentId, StateMap};

/// Clamp applied to the normalized task error.
pub const E_CLAMP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("Gamma is not positive ({0})")]
    NonPositiveGamma(f64),
    #[error("normalized error {0} is outside (-1, 0)")]
    OutOfRange(f64),
    #[error("agent {observer} has no estimate of agent {target}")]
    MissingEstimate { observer: AgentId, target: AgentId },
    #[error("agent {0} has no state")]
    MissingState(AgentId),
    #[error("task `{task}` reads agent {agent}, which is neither a neighbour nor within k = {k} hops of {owner}")]
    Unobservable { task: String, owner: AgentId, agent: AgentId, k: usize },
    #[error("task `{0}` has no predicates to steer")]
    NoAtoms(String),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Funnel(#[from] FunnelError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// `(ρ̂ − ρ_max)/Γ`, clamped into `(−1, 0)`. The flag reports a clamp.
pub fn normalized_error(rho_hat: f64, rho_max: f64, gamma: f64) -> Result<(f64, bool), ControllerError> {
    if !(gamma > 0.0) {
        return Err(ControllerError::NonPositiveGamma(gamma));
    }
    let e = (rho_hat - rho_max) / gamma;
    let (lo, hi) = (-1.0 + E_CLAMP, -E_CLAMP);
    if e.is_nan() {
        return Ok((-0.5, true));
    }
    if e < lo || e > hi {
        return Ok((e.clamp(lo, hi), true));
    }
    Ok((e, false))
}

/// Transformed error and the Jacobian of the transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedError {
    pub e: f64,
    pub eps: f64,
    pub jac: f64,
}

pub fn transform(e: f64) -> Result<TransformedError, ControllerError> {
    if !(e > -1.0 && e < 0.0) {
        return Err(ControllerError::OutOfRange(e));
    }
    Ok(TransformedError { e, eps: (-(e + 1.0) / e).ln(), jac: -1.0 / (e * (e + 1.0)) })
}

/// A task attached to its owner with the owner's view of the agents it reads.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBinding {
    pub name: String,
    pub owner: AgentId,
    pub formula: Formula,
    pub spec: FunnelSpec,
    /// Read agents the owner talks to directly (including itself).
    pub communicated: BTreeSet<AgentId>,
    /// Read agents only known through the owner's observer.
    pub estimated: BTreeSet<AgentId>,
}

impl TaskBinding {
    pub fn new(
        name: impl Into<String>,
        owner: AgentId,
        formula: Formula,
        spec: FunnelSpec,
        gc: &Graph,
        k: usize,
    ) -> Result<Self, ControllerError> {
        let name = name.into();
        if formula.body.atoms().next().is_none() {
            return Err(ControllerError::NoAtoms(name));
        }
        let (communicated, estimated) = reader_sets(&name, owner, &formula.body.agents(), gc, k)?;
        Ok(TaskBinding { name, owner, formula, spec, communicated, estimated })
    }

    /// States the owner uses: true states for communicated agents,
    /// its own estimates for the rest.
    pub fn view(&self, states: &StateMap, estimates: &Estimates) -> Result<StateMap, ControllerError> {
        let mut xs = StateMap::new();
        for a in &self.communicated {
            xs.insert(*a, states.get(a).ok_or(ControllerError::MissingState(*a))?.clone());
        }
        for a in &self.estimated {
            let pair = Pair { observer: self.owner, target: *a };
            let est = estimates
                .get(&pair)
                .ok_or(ControllerError::MissingEstimate { observer: self.owner, target: *a })?;
            xs.insert(*a, est.clone());
        }
        Ok(xs)
    }
}

/// Split the agents a task reads into communicated and estimated sets.
pub fn reader_sets(
    task: &str,
    owner: AgentId,
    agents: &BTreeSet<AgentId>,
    gc: &Graph,
    k: usize,
) -> Result<(BTreeSet<AgentId>, BTreeSet<AgentId>), ControllerError> {
    let near = gc.closed_neighborhood(owner);
    let far = if k >= 2 { k_hop_neighbors(gc, owner, k)? } else { BTreeSet::new() };
    let mut communicated = BTreeSet::new();
    let mut estimated = BTreeSet::new();
    for a in agents {
        if near.contains(a) {
            communicated.insert(*a);
        } else if far.contains(a) {
            estimated.insert(*a);
        } else {
            return Err(ControllerError::Unobservable { task: task.to_string(), owner, agent: *a, k });
        }
    }
    Ok((communicated, estimated))
}

/// Everything the control law and the trace need from one task at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEval {
    pub rho_hat: f64,
    pub rho_true: f64,
    pub gamma: f64,
    pub err: TransformedError,
    /// Normalized error before clamping.
    pub raw_e: f64,
    pub clamped: bool,
    pub view: StateMap,
}

pub fn evaluate_task(
    binding: &TaskBinding,
    states: &StateMap,
    estimates: &Estimates,
    t: f64,
) -> Result<TaskEval, ControllerError> {
    let view = binding.view(states, estimates)?;
    let rho_hat = binding.formula.body.eval_smooth(&view, binding.spec.eta)?;
    let truth: StateMap = binding
        .formula
        .body
        .agents()
        .into_iter()
        .map(|a| states.get(&a).map(|x| (a, x.clone())).ok_or(ControllerError::MissingState(a)))
        .collect::<Result<_, _>>()?;
    let rho_true = binding.formula.body.eval_exact(&truth)?;
    let gamma = binding.spec.capital_gamma(t)?;
    let raw_e = (rho_hat - binding.spec.rho_max) / gamma;
    let (e, clamped) = normalized_error(rho_hat, binding.spec.rho_max, gamma)?;
    Ok(TaskEval { rho_hat, rho_true, gamma, err: transform(e)?, raw_e, clamped, view })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ControlMode {
    /// `u = −gᵀ Σ ...`
    #[default]
    Transpose,
    /// `u = −s Σ ...` for a symmetric input matrix of known sign.
    Sign { gain: f64 },
    /// No feedback; used for open-loop integration checks.
    Off,
}

/// Input of `agent` from the evaluated tasks of its own cluster.
pub fn control_input(
    agent: AgentId,
    cluster_tasks: &[(&TaskBinding, &TaskEval)],
    g: &DMatrix<f64>,
    mode: ControlMode,
) -> Result<DVector<f64>, ControllerError> {
    let mut acc = DVector::zeros(g.nrows());
    if mode == ControlMode::Off {
        return Ok(DVector::zeros(g.ncols()));
    }
    for (binding, ev) in cluster_tasks {
        if !binding.communicated.contains(&agent) {
            continue;
        }
        let grad = binding.formula.body.grad_smooth(&ev.view, agent, binding.spec.eta)?;
        acc += grad * (ev.err.jac * ev.err.eps / ev.gamma);
    }
    Ok(match mode {
        ControlMode::Transpose => -(g.transpose() * acc),
        ControlMode::Sign { gain } => -acc * gain,
        ControlMode::Off => unreachable!(),
    })
}

/// Inputs for every agent, each from the tasks of its own cluster.
pub fn all_inputs(
    bindings: &[TaskBinding],
    evals: &[TaskEval],
    cluster_of: &BTreeMap<AgentId, usize>,
    input_matrices: &BTreeMap<AgentId, DMatrix<f64>>,
    mode: ControlMode,
) -> Result<BTreeMap<AgentId, DVector<f64>>, ControllerError> {
    input_matrices
        .iter()
        .map(|(a, g)| {
            let mine: Vec<(&TaskBinding, &TaskEval)> = bindings
                .iter()
                .zip(evals)
                .filter(|(b, _)| cluster_of.get(&b.owner) == cluster_of.get(a))
                .collect();
            control_input(*a, &mine, g, mode).map(|u| (*a, u))
        })
        .collect()
}
