//! Decentralized satisfaction of signal temporal logic tasks for multi-agent
//! systems: robustness semantics, graph clustering, k-hop state observers,
//! prescribed-performance funnels, and a closed-loop simulator.

pub mod controller;
pub mod dynamics;
pub mod funnels;
pub mod observer;
pub mod plot;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod stl;
pub mod topology;
pub mod trace;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// One-based agent identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Agent states (or estimates) keyed by agent.
pub type StateMap = BTreeMap<AgentId, DVector<f64>>;
