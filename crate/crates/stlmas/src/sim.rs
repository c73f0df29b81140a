//! Closed-loop fixed-step simulation of plant, observer, and controller.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::controller::{all_inputs, evaluate_task, ControllerError, TaskEval};
use crate::dynamics::sample_disturbance;
use crate::observer::{check_observer_bounds, observer_rhs, pair_xi, Estimates, ObserverError, Pair};
use crate::scenario::Scenario;
use crate::trace::{Fault, FaultKind, Trace};
use crate::{AgentId, StateMap};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct World {
    pub step: usize,
    pub states: StateMap,
    pub estimates: Estimates,
    pub disturbance: BTreeMap<AgentId, DVector<f64>>,
    pub faults: Vec<Fault>,
    pub halted: bool,
    rng: ChaCha8Rng,
}

/// Everything computed from the start-of-step snapshot.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub evals: Vec<TaskEval>,
    pub inputs: BTreeMap<AgentId, DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub faults: Vec<Fault>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.faults.is_empty()
    }
}

/// Trace header for a scenario.
pub fn trace_columns(scn: &Scenario) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for (a, d) in &scn.dynamics {
        cols.extend((1..=d.dim()).map(|c| format!("x_{a}_{c}")));
    }
    for (a, d) in &scn.dynamics {
        cols.extend((1..=d.input_dim()).map(|c| format!("u_{a}_{c}")));
    }
    for p in scn.network.pairs() {
        cols.extend((1..=scn.dynamics[&p.target].dim()).map(|c| format!("xhat_{}_{}_{c}", p.observer, p.target)));
    }
    for p in scn.network.pairs() {
        cols.push(format!("err_{}_{}", p.observer, p.target));
    }
    for p in scn.network.pairs() {
        cols.push(format!("delta_{}_{}", p.observer, p.target));
    }
    for prefix in ["rhohat", "rho", "e", "Gamma"] {
        cols.extend(scn.tasks.iter().map(|t| format!("{prefix}_{}", t.name)));
    }
    cols
}

fn axpy<K: Ord + Copy>(base: &BTreeMap<K, DVector<f64>>, k: &BTreeMap<K, DVector<f64>>, h: f64) -> BTreeMap<K, DVector<f64>> {
    base.iter().map(|(a, v)| (*a, v + &k[a] * h)).collect()
}

fn combine<K: Ord + Copy>(base: &BTreeMap<K, DVector<f64>>, k: [&BTreeMap<K, DVector<f64>>; 4], dt: f64) -> BTreeMap<K, DVector<f64>> {
    base.iter()
        .map(|(a, v)| (*a, v + (&k[0][a] + &k[1][a] * 2.0 + &k[2][a] * 2.0 + &k[3][a]) * (dt / 6.0)))
        .collect()
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl World {
    pub fn new(scn: &Scenario) -> Self {
        World {
            step: 0,
            states: scn.initial.clone(),
            estimates: scn.initial_estimates.clone(),
            disturbance: BTreeMap::new(),
            faults: Vec::new(),
            halted: false,
            rng: ChaCha8Rng::seed_from_u64(scn.seed()),
        }
    }

    pub fn time(&self, scn: &Scenario) -> f64 {
        self.step as f64 * scn.dt()
    }

    fn fault(&mut self, t: f64, kind: FaultKind) {
        self.faults.push(Fault { step: self.step, t, kind });
    }

    /// Task evaluations and inputs from the current snapshot. Returns `None`
    /// (and halts) when a task funnel cannot be evaluated.
    pub fn snapshot(&mut self, scn: &Scenario) -> Result<Option<Snapshot>, SimError> {
        let t = self.time(scn);
        let mut evals = Vec::with_capacity(scn.tasks.len());
        for b in &scn.tasks {
            match evaluate_task(b, &self.states, &self.estimates, t) {
                Ok(ev) => {
                    if ev.clamped {
                        self.fault(t, FaultKind::TaskFunnel { task: b.name.clone(), e: ev.raw_e });
                    }
                    evals.push(ev);
                }
                Err(e @ (ControllerError::NonPositiveGamma(_) | ControllerError::Funnel(_))) => {
                    self.fault(t, FaultKind::Gamma { task: b.name.clone(), detail: e.to_string() });
                    self.halted = true;
                    return Ok(None);
                }
                Err(e) => return Err(e.into()),
            }
        }
        let cluster_of: BTreeMap<AgentId, usize> =
            scn.dynamics.keys().map(|a| (*a, scn.clustering.cluster_of(*a).0)).collect();
        let gs: BTreeMap<AgentId, DMatrix<f64>> =
            scn.dynamics.iter().map(|(a, d)| (*a, d.input_matrix(&self.states[a]))).collect();
        let inputs = all_inputs(&scn.tasks, &evals, &cluster_of, &gs, scn.control())?;
        for check in check_observer_bounds(&self.estimates, &self.states, &scn.observer, t) {
            if !check.ok {
                self.fault(
                    t,
                    FaultKind::ObserverBound {
                        observer: check.pair.observer,
                        target: check.pair.target,
                        error: check.error,
                        delta: check.delta,
                    },
                );
            }
        }
        Ok(Some(Snapshot { t, evals, inputs }))
    }

    /// Trace row for the current snapshot.
    pub fn row(&self, scn: &Scenario, snap: &Snapshot) -> Vec<f64> {
        let mut row = vec![snap.t];
        for x in self.states.values() {
            row.extend(x.iter());
        }
        for u in snap.inputs.values() {
            row.extend(u.iter());
        }
        for x in self.estimates.values() {
            row.extend(x.iter());
        }
        for (p, x) in &self.estimates {
            row.push((x - &self.states[&p.target]).norm());
        }
        for p in self.estimates.keys() {
            row.push(scn.observer.delta[p].at(snap.t));
        }
        row.extend(snap.evals.iter().map(|e| e.rho_hat));
        row.extend(snap.evals.iter().map(|e| e.rho_true));
        row.extend(snap.evals.iter().map(|e| e.raw_e));
        row.extend(snap.evals.iter().map(|e| e.gamma));
        row
    }

    fn plant_rate(
        scn: &Scenario,
        xs: &StateMap,
        inputs: &BTreeMap<AgentId, DVector<f64>>,
        w: &BTreeMap<AgentId, DVector<f64>>,
    ) -> StateMap {
        xs.iter()
            .map(|(a, x)| {
                let d = &scn.dynamics[a];
                let mut rate = d.drift(x) + d.input_matrix(x) * &inputs[a];
                if let Some(w) = w.get(a) {
                    rate += w;
                }
                (*a, rate)
            })
            .collect()
    }

    /// Estimate rates with the pair's own estimate `own` and neighbour
    /// messages taken from the snapshot.
    fn observer_rate(
        scn: &Scenario,
        own: &Estimates,
        held: &Estimates,
        states: &StateMap,
        t: f64,
        clamps: &mut BTreeMap<Pair, f64>,
    ) -> Result<Estimates, ObserverError> {
        let mut out = Estimates::new();
        for (p, x) in own {
            let xi = pair_xi(&scn.network, *p, x, held, states)?;
            let rho = scn.observer.rho[p].at(t);
            let (rate, clamped) = observer_rhs(&xi, rho);
            if clamped {
                clamps.entry(*p).or_insert_with(|| xi.amax() / rho);
            }
            out.insert(*p, rate);
        }
        Ok(out)
    }

    /// One joint RK4 step with inputs, disturbances, and messages held.
    pub fn advance(&mut self, scn: &Scenario, inputs: &BTreeMap<AgentId, DVector<f64>>) -> Result<(), SimError> {
        let dt = scn.dt();
        let t = self.time(scn);
        if self.step % scn.disturbance.hold == 0 {
            self.disturbance = self
                .states
                .iter()
                .map(|(a, x)| (*a, sample_disturbance(&scn.disturbance, x.len(), &mut self.rng)))
                .collect();
        }
        let x0 = &self.states;
        let h0 = &self.estimates;
        let mut clamps = BTreeMap::new();
        let w = &self.disturbance;
        let k1x = Self::plant_rate(scn, x0, inputs, w);
        let k1h = Self::observer_rate(scn, h0, h0, x0, t, &mut clamps)?;
        let (x2, h2) = (axpy(x0, &k1x, dt / 2.0), axpy(h0, &k1h, dt / 2.0));
        let k2x = Self::plant_rate(scn, &x2, inputs, w);
        let k2h = Self::observer_rate(scn, &h2, h0, x0, t + dt / 2.0, &mut clamps)?;
        let (x3, h3) = (axpy(x0, &k2x, dt / 2.0), axpy(h0, &k2h, dt / 2.0));
        let k3x = Self::plant_rate(scn, &x3, inputs, w);
        let k3h = Self::observer_rate(scn, &h3, h0, x0, t + dt / 2.0, &mut clamps)?;
        let (x4, h4) = (axpy(x0, &k3x, dt), axpy(h0, &k3h, dt));
        let k4x = Self::plant_rate(scn, &x4, inputs, w);
        let k4h = Self::observer_rate(scn, &h4, h0, x0, t + dt, &mut clamps)?;
        let states = combine(x0, [&k1x, &k2x, &k3x, &k4x], dt);
        let estimates = combine(h0, [&k1h, &k2h, &k3h, &k4h], dt);
        for (p, e) in clamps {
            self.fault(t, FaultKind::ObserverClamp { observer: p.observer, target: p.target, e });
        }
        self.states = states;
        self.estimates = estimates;
        self.step += 1;
        let bad = self
            .states
            .iter()
            .find(|(_, x)| !finite(x))
            .map(|(a, _)| format!("state of agent {a}"))
            .or_else(|| self.estimates.iter().find(|(_, x)| !finite(x)).map(|(p, _)| format!("estimate {p}")));
        if let Some(detail) = bad {
            let t = self.time(scn);
            self.fault(t, FaultKind::NonFinite { detail });
            self.halted = true;
        }
        Ok(())
    }
}

/// Simulate the full horizon. Faults do not abort the run unless the state
/// becomes non-finite or a funnel cannot be evaluated.
pub fn run(scn: &Scenario) -> Result<RunOutput, SimError> {
    let mut world = World::new(scn);
    let mut trace = Trace::new(trace_columns(scn));
    loop {
        let Some(snap) = world.snapshot(scn)? else { break };
        trace.push(world.row(scn, &snap));
        if world.step == scn.steps {
            break;
        }
        world.advance(scn, &snap.inputs)?;
        if world.halted {
            break;
        }
    }
    Ok(RunOutput { trace, faults: world.faults })
}

/// Final true states after the full horizon (no trace kept).
pub fn terminal_states(scn: &Scenario) -> Result<StateMap, SimError> {
    let mut world = World::new(scn);
    while world.step < scn.steps && !world.halted {
        let Some(snap) = world.snapshot(scn)? else { break };
        world.advance(scn, &snap.inputs)?;
    }
    Ok(world.states)
}
