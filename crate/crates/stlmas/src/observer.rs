//! Decentralized k-hop prescribed-performance state observer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::funnels::{FunnelError, Ppf};
use crate::topology::{k_hop_neighbors, Graph, TopologyError};
use crate::{AgentId, StateMap};

/// Clamp applied to the normalized consensus error before the logarithms.
pub const E_CLAMP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("observer {0} has no estimate of agent {1} from neighbour {2}")]
    MissingNeighbor(AgentId, AgentId, AgentId),
    #[error("no graph constant alpha for target {0}")]
    MissingAlpha(AgentId),
    #[error("observer {0} needs a relayed state of agent {1}")]
    MissingRelay(AgentId, AgentId),
    #[error("no funnel for pair {0}")]
    MissingFunnel(Pair),
    #[error("target {target}: stacked observer funnel {rho_norm} exceeds alpha*min delta = {limit} at {when}")]
    FunnelNorm { target: AgentId, rho_norm: f64, limit: f64, when: &'static str },
    #[error("pair {pair}: initial consensus error {xi} is not inside {rho}")]
    Initialization { pair: Pair, xi: f64, rho: f64 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Funnel(#[from] FunnelError),
}

/// Observer `observer` estimating agent `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub observer: AgentId,
    pub target: AgentId,
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.observer, self.target)
    }
}

/// Who talks to whom for one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairLinks {
    /// Communication neighbours that also estimate the target.
    pub peers: Vec<AgentId>,
    /// Number of common neighbours that relay the target's true state.
    pub anchors: usize,
}

/// Observer pairs and their communication structure for a given `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverNetwork {
    pub k: usize,
    pub links: BTreeMap<Pair, PairLinks>,
}

impl ObserverNetwork {
    pub fn new(gc: &Graph, k: usize) -> Result<Self, ObserverError> {
        let mut links = BTreeMap::new();
        if k < 2 {
            return Ok(ObserverNetwork { k, links });
        }
        let hops: BTreeMap<AgentId, BTreeSet<AgentId>> =
            gc.agents().map(|a| k_hop_neighbors(gc, a, k).map(|s| (a, s))).collect::<Result<_, _>>()?;
        for i in gc.agents() {
            let ni = gc.closed_neighborhood(i);
            for &r in &hops[&i] {
                let peers = ni.iter().filter(|l| **l != i && hops[&r].contains(l)).cloned().collect();
                let anchors = ni.intersection(&gc.closed_neighborhood(r)).count();
                links.insert(Pair { observer: i, target: r }, PairLinks { peers, anchors });
            }
        }
        Ok(ObserverNetwork { k, links })
    }

    pub fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        self.links.keys().cloned()
    }

    pub fn observers_of(&self, target: AgentId) -> Vec<AgentId> {
        self.links.keys().filter(|p| p.target == target).map(|p| p.observer).collect()
    }

    pub fn targets(&self) -> BTreeSet<AgentId> {
        self.links.keys().map(|p| p.target).collect()
    }

    /// The matrix mapping stacked estimation errors of `target` to stacked
    /// consensus errors (one scalar coordinate), in observer order.
    pub fn consensus_matrix(&self, target: AgentId) -> DMatrix<f64> {
        let obs = self.observers_of(target);
        let idx: BTreeMap<AgentId, usize> = obs.iter().enumerate().map(|(k, a)| (*a, k)).collect();
        let mut m = DMatrix::zeros(obs.len(), obs.len());
        for (row, i) in obs.iter().enumerate() {
            let l = &self.links[&Pair { observer: *i, target }];
            m[(row, row)] += l.anchors as f64;
            for p in &l.peers {
                m[(row, row)] += 1.0;
                m[(row, idx[p])] -= 1.0;
            }
        }
        m
    }

    /// Smallest singular value of the consensus matrix; the stacked error
    /// satisfies `‖x̃‖ ≤ ‖ξ‖ / σ_min`.
    pub fn sigma_min(&self, target: AgentId) -> f64 {
        let m = self.consensus_matrix(target);
        if m.is_empty() {
            return f64::INFINITY;
        }
        m.svd(false, false).singular_values.min()
    }
}

/// Error funnels `δ` and consensus funnels `ρ` per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverFunnels {
    pub delta: BTreeMap<Pair, Ppf>,
    pub rho: BTreeMap<Pair, Ppf>,
    /// Graph constant per target.
    pub alpha: BTreeMap<AgentId, f64>,
}

impl ObserverFunnels {
    /// Consensus funnels that meet the norm constraint with equality:
    /// `ρ_r^i = α · min_i δ_r^i / √(n_r · dim)`.
    pub fn derived(
        net: &ObserverNetwork,
        delta: BTreeMap<Pair, Ppf>,
        alpha: BTreeMap<AgentId, f64>,
        dims: &BTreeMap<AgentId, usize>,
    ) -> Result<Self, ObserverError> {
        let mut rho = BTreeMap::new();
        for r in net.targets() {
            let obs = net.observers_of(r);
            let mut tightest: Option<Ppf> = None;
            for i in &obs {
                let pair = Pair { observer: *i, target: r };
                let d = *delta.get(&pair).ok_or(ObserverError::MissingFunnel(pair))?;
                tightest = Some(match tightest {
                    Some(t) if t.v0() <= d.v0() && t.v_inf() <= d.v_inf() => t,
                    Some(t) if d.v0() <= t.v0() && d.v_inf() <= t.v_inf() => d,
                    Some(t) => Ppf::new(t.v0().min(d.v0()), t.v_inf().min(d.v_inf()), t.decay())?,
                    None => d,
                });
            }
            let a = *alpha.get(&r).ok_or(ObserverError::MissingAlpha(r))?;
            let scale = a / ((obs.len() * dims.get(&r).copied().unwrap_or(1)) as f64).sqrt();
            let r_ppf = tightest.expect("target has observers").scaled(scale)?;
            for i in obs {
                rho.insert(Pair { observer: i, target: r }, r_ppf);
            }
        }
        Ok(ObserverFunnels { delta, rho, alpha })
    }

    /// Check `‖ρ_r‖ ≤ α min_i δ_r^i` at `t = 0` and `t → ∞` for every target.
    pub fn validate(&self, net: &ObserverNetwork, dims: &BTreeMap<AgentId, usize>) -> Result<(), ObserverError> {
        for r in net.targets() {
            let dim = dims.get(&r).copied().unwrap_or(1);
            let obs = net.observers_of(r);
            let mut funnels = Vec::new();
            for i in &obs {
                let pair = Pair { observer: *i, target: r };
                let d = *self.delta.get(&pair).ok_or(ObserverError::MissingFunnel(pair))?;
                let p = *self.rho.get(&pair).ok_or(ObserverError::MissingFunnel(pair))?;
                funnels.push((d, p));
            }
            for (when, pick) in [("t=0", Ppf::v0 as fn(&Ppf) -> f64), ("t=inf", Ppf::v_inf)] {
                let rho_norm = funnels.iter().map(|(_, p)| dim as f64 * pick(p).powi(2)).sum::<f64>().sqrt();
                let a = *self.alpha.get(&r).ok_or(ObserverError::MissingAlpha(r))?;
                let limit = a * funnels.iter().map(|(d, _)| pick(d)).fold(f64::INFINITY, f64::min);
                if rho_norm > limit * (1.0 + 1e-12) {
                    return Err(ObserverError::FunnelNorm { target: r, rho_norm, limit, when });
                }
            }
        }
        Ok(())
    }
}

/// Consensus-plus-anchor residual of one pair.
pub fn observer_xi(
    own: &DVector<f64>,
    links: &PairLinks,
    peer_estimates: &BTreeMap<AgentId, DVector<f64>>,
    relayed_true: Option<&DVector<f64>>,
    pair: Pair,
) -> Result<DVector<f64>, ObserverError> {
    let mut xi = DVector::zeros(own.len());
    for l in &links.peers {
        let other = peer_estimates
            .get(l)
            .ok_or(ObserverError::MissingNeighbor(pair.observer, pair.target, *l))?;
        xi += own - other;
    }
    if links.anchors > 0 {
        let truth = relayed_true.ok_or(ObserverError::MissingRelay(pair.observer, pair.target))?;
        xi += (own - truth) * links.anchors as f64;
    }
    Ok(xi)
}

/// Estimate update `−ρ⁻¹ J(e) ε(e)` with `e = ξ/ρ`, componentwise. The flag
/// reports whether any component had to be clamped.
pub fn observer_rhs(xi: &DVector<f64>, rho: f64) -> (DVector<f64>, bool) {
    let mut clamped = false;
    let out = xi.map(|v| {
        let mut e = v / rho;
        let lim = 1.0 - E_CLAMP;
        if !(e.abs() < lim) {
            clamped = true;
            e = if e.is_nan() { 0.0 } else { e.clamp(-lim, lim) };
        }
        let jac = (2.0 / (1.0 - e * e)).ln();
        let eps = ((1.0 + e) / (1.0 - e)).ln();
        -jac * eps / rho
    });
    (out, clamped)
}

/// Estimates for every pair, keyed by pair.
pub type Estimates = BTreeMap<Pair, DVector<f64>>;

/// Residual of `pair` given all current estimates and true states.
pub fn pair_xi(
    net: &ObserverNetwork,
    pair: Pair,
    own: &DVector<f64>,
    estimates: &Estimates,
    states: &StateMap,
) -> Result<DVector<f64>, ObserverError> {
    let links = &net.links[&pair];
    let peers: BTreeMap<AgentId, DVector<f64>> = links
        .peers
        .iter()
        .filter_map(|l| estimates.get(&Pair { observer: *l, target: pair.target }).map(|e| (*l, e.clone())))
        .collect();
    observer_xi(own, links, &peers, states.get(&pair.target), pair)
}

/// Initial estimates: truth plus the optional offsets, checked against the
/// consensus funnels at `t = 0`.
pub fn init_observer(
    net: &ObserverNetwork,
    funnels: &ObserverFunnels,
    states: &StateMap,
    offsets: &BTreeMap<Pair, DVector<f64>>,
) -> Result<Estimates, ObserverError> {
    let est: Estimates = net
        .pairs()
        .map(|p| {
            let mut x = states[&p.target].clone();
            if let Some(o) = offsets.get(&p) {
                x += o;
            }
            (p, x)
        })
        .collect();
    for p in net.pairs() {
        let xi = pair_xi(net, p, &est[&p], &est, states)?;
        let rho = funnels.rho.get(&p).ok_or(ObserverError::MissingFunnel(p))?.v0();
        let worst = xi.amax();
        if !(worst < rho) {
            return Err(ObserverError::Initialization { pair: p, xi: worst, rho });
        }
    }
    Ok(est)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub pair: Pair,
    pub error: f64,
    pub delta: f64,
    pub ok: bool,
}

/// `‖x̂_r^i − x_r‖ < δ_r^i(t)` for every pair (the norm bound implies the
/// componentwise one).
pub fn check_observer_bounds(estimates: &Estimates, states: &StateMap, funnels: &ObserverFunnels, t: f64) -> Vec<BoundCheck> {
    estimates
        .iter()
        .map(|(p, x)| {
            let error = (x - &states[&p.target]).norm();
            let delta = funnels.delta[p].at(t.max(0.0));
            BoundCheck { pair: *p, error, delta, ok: error < delta }
        })
        .collect()
}
