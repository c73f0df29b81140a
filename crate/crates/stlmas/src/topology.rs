//! Communication and task graphs, their intersection, clusters, and the
//! cluster-induced dependency graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::AgentId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("agent {0} is outside 1..={1}")]
    OutOfRange(AgentId, usize),
    #[error("self-loop on agent {0} in an undirected graph")]
    SelfLoop(AgentId),
    #[error("graphs have {0} and {1} vertices")]
    VertexMismatch(usize, usize),
    #[error("k must be at least 2, got {0}")]
    SmallK(usize),
    #[error("agents {0} and {1} share a task but are not connected")]
    Unreachable(AgentId, AgentId),
    #[error("cluster dependency cycle through {0:?}")]
    ClusterCycle(Vec<ClusterId>),
}

/// Zero-based cluster index; displayed one-based as `C1`, `C2`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(pub usize);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(AgentId, AgentId)>,
    directed: bool,
}

impl Graph {
    pub fn undirected(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, TopologyError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            let (a, b) = (AgentId(a), AgentId(b));
            Self::check(n, a)?;
            Self::check(n, b)?;
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Graph { n, edges: set, directed: false })
    }

    pub fn directed(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, TopologyError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            let (a, b) = (AgentId(a), AgentId(b));
            Self::check(n, a)?;
            Self::check(n, b)?;
            set.insert((a, b));
        }
        Ok(Graph { n, edges: set, directed: true })
    }

    fn check(n: usize, a: AgentId) -> Result<(), TopologyError> {
        if a.0 == 0 || a.0 > n {
            Err(TopologyError::OutOfRange(a, n))
        } else {
            Ok(())
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &BTreeSet<(AgentId, AgentId)> {
        &self.edges
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        (1..=self.n).map(AgentId)
    }

    pub fn has_edge(&self, a: AgentId, b: AgentId) -> bool {
        if self.directed {
            self.edges.contains(&(a, b))
        } else {
            self.edges.contains(&(a.min(b), a.max(b)))
        }
    }

    /// Neighbours of `i` (out-neighbours when directed), excluding `i`.
    pub fn neighbors(&self, i: AgentId) -> BTreeSet<AgentId> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i && b != i {
                    Some(b)
                } else if !self.directed && b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Closed neighbourhood: `i` together with its neighbours.
    pub fn closed_neighborhood(&self, i: AgentId) -> BTreeSet<AgentId> {
        let mut s = self.neighbors(i);
        s.insert(i);
        s
    }
}

/// Hop distances from `source`; unreachable agents are absent.
pub fn bfs_distances(g: &Graph, source: AgentId) -> Result<BTreeMap<AgentId, usize>, TopologyError> {
    Graph::check(g.n, source)?;
    let adj: BTreeMap<AgentId, BTreeSet<AgentId>> = g.agents().map(|a| (a, g.neighbors(a))).collect();
    let mut dist = BTreeMap::from([(source, 0)]);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        for &v in &adj[&u] {
            if !dist.contains_key(&v) {
                dist.insert(v, d + 1);
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// Agents whose shortest-path distance from `i` lies in `[2, k]`.
pub fn k_hop_neighbors(g: &Graph, i: AgentId, k: usize) -> Result<BTreeSet<AgentId>, TopologyError> {
    if k < 2 {
        return Err(TopologyError::SmallK(k));
    }
    Ok(bfs_distances(g, i)?
        .into_iter()
        .filter(|&(_, d)| (2..=k).contains(&d))
        .map(|(a, _)| a)
        .collect())
}

/// Undirected graph of communication edges that also carry a task edge in
/// either direction.
pub fn intersect_graphs(gc: &Graph, gt: &Graph) -> Result<Graph, TopologyError> {
    if gc.n != gt.n {
        return Err(TopologyError::VertexMismatch(gc.n, gt.n));
    }
    let edges = gc
        .edges
        .iter()
        .filter(|&&(a, b)| a != b && (gt.has_edge(a, b) || gt.has_edge(b, a)))
        .map(|&(a, b)| (a.0, b.0));
    Graph::undirected(gc.n, edges)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub agents: BTreeSet<AgentId>,
    pub edges: BTreeSet<(AgentId, AgentId)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub clusters: Vec<Cluster>,
    pub membership: BTreeMap<AgentId, ClusterId>,
}

impl Clustering {
    pub fn cluster_of(&self, a: AgentId) -> ClusterId {
        self.membership[&a]
    }
}

/// Connected components of the intersection graph, ordered by smallest member.
pub fn compute_clusters(gc: &Graph, gt: &Graph) -> Result<Clustering, TopologyError> {
    let inter = intersect_graphs(gc, gt)?;
    let mut membership = BTreeMap::new();
    let mut clusters = Vec::new();
    for a in inter.agents() {
        if membership.contains_key(&a) {
            continue;
        }
        let id = ClusterId(clusters.len());
        let agents: BTreeSet<AgentId> = bfs_distances(&inter, a)?.into_keys().collect();
        for &m in &agents {
            membership.insert(m, id);
        }
        let edges = inter
            .edges
            .iter()
            .filter(|(x, _)| agents.contains(x))
            .cloned()
            .collect();
        clusters.push(Cluster { agents, edges });
    }
    let c = Clustering { clusters, membership };
    debug_assert_eq!(c.membership.len(), gc.n);
    debug_assert_eq!(c.clusters.iter().map(|k| k.agents.len()).sum::<usize>(), gc.n);
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDag {
    pub nodes: usize,
    pub edges: BTreeSet<(ClusterId, ClusterId)>,
}

/// Edge `C_l → C_j` whenever a task owned in `C_l` reads an agent in `C_j`.
pub fn cluster_induced_dag(clustering: &Clustering, gt: &Graph) -> Result<ClusterDag, TopologyError> {
    let edges = gt
        .edges
        .iter()
        .filter_map(|&(a, b)| {
            let (ca, cb) = (clustering.cluster_of(a), clustering.cluster_of(b));
            (ca != cb).then_some((ca, cb))
        })
        .collect();
    let dag = ClusterDag { nodes: clustering.clusters.len(), edges };
    topological_order(&dag)?;
    Ok(dag)
}

/// Leaves first; every edge points from a later entry to an earlier one.
/// Ties are broken by cluster index.
pub fn topological_order(dag: &ClusterDag) -> Result<Vec<ClusterId>, TopologyError> {
    let mut out_deg = vec![0usize; dag.nodes];
    for &(a, _) in &dag.edges {
        out_deg[a.0] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..dag.nodes).filter(|&c| out_deg[c] == 0).collect();
    let mut order = Vec::with_capacity(dag.nodes);
    while let Some(c) = ready.pop_first() {
        order.push(ClusterId(c));
        for &(a, b) in &dag.edges {
            if b.0 == c {
                out_deg[a.0] -= 1;
                if out_deg[a.0] == 0 {
                    ready.insert(a.0);
                }
            }
        }
    }
    if order.len() < dag.nodes {
        let stuck: BTreeSet<usize> = (0..dag.nodes).filter(|&c| out_deg[c] > 0).collect();
        return Err(TopologyError::ClusterCycle(find_cycle(dag, &stuck)));
    }
    Ok(order)
}

fn find_cycle(dag: &ClusterDag, stuck: &BTreeSet<usize>) -> Vec<ClusterId> {
    // every stuck node has a stuck successor; walk until a repeat
    let mut path = vec![*stuck.first().expect("nonempty")];
    loop {
        let cur = *path.last().expect("nonempty");
        let next = dag
            .edges
            .iter()
            .find(|(a, b)| a.0 == cur && stuck.contains(&b.0))
            .map(|(_, b)| b.0)
            .expect("stuck node has a stuck successor");
        if let Some(pos) = path.iter().position(|&p| p == next) {
            return path[pos..].iter().map(|&c| ClusterId(c)).collect();
        }
        path.push(next);
    }
}

/// Largest communication distance between an agent and any agent its task
/// reads without a direct link; zero when every such pair is linked.
pub fn required_k(gc: &Graph, gt: &Graph) -> Result<usize, TopologyError> {
    if gc.n != gt.n {
        return Err(TopologyError::VertexMismatch(gc.n, gt.n));
    }
    let mut k = 0;
    for i in gc.agents() {
        let missing: Vec<AgentId> = gt
            .neighbors(i)
            .into_iter()
            .filter(|j| !gc.has_edge(i, *j))
            .collect();
        if missing.is_empty() {
            continue;
        }
        let dist = bfs_distances(gc, i)?;
        for j in missing {
            let d = *dist.get(&j).ok_or(TopologyError::Unreachable(i, j))?;
            k = k.max(d);
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub passed: bool,
    pub witness: Option<String>,
}

impl Check {
    fn pass() -> Self {
        Check { passed: true, witness: None }
    }
    fn fail(w: String) -> Self {
        Check { passed: false, witness: Some(w) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssumptionReport {
    /// Communication graph connected.
    pub connected: Check,
    /// Task graph acyclic, self-loops ignored.
    pub acyclic: Check,
    /// Within a cluster, every task neighbour is a communication neighbour.
    pub containment: Check,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.connected.passed && self.acyclic.passed && self.containment.passed
    }
}

/// Directed cycle in `g` ignoring self-loops, if any.
pub fn directed_cycle(g: &Graph) -> Option<Vec<AgentId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; g.n + 1];
    let mut stack: Vec<AgentId> = Vec::new();
    fn visit(g: &Graph, u: AgentId, mark: &mut [Mark], stack: &mut Vec<AgentId>) -> Option<Vec<AgentId>> {
        mark[u.0] = Mark::Active;
        stack.push(u);
        for v in g.neighbors(u) {
            match mark[v.0] {
                Mark::Active => {
                    let pos = stack.iter().position(|&s| s == v).expect("on stack");
                    return Some(stack[pos..].to_vec());
                }
                Mark::New => {
                    if let Some(c) = visit(g, v, mark, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        mark[u.0] = Mark::Done;
        None
    }
    for a in g.agents() {
        if mark[a.0] == Mark::New {
            if let Some(c) = visit(g, a, &mut mark, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

pub fn validate_assumptions(gc: &Graph, gt: &Graph, clustering: &Clustering) -> AssumptionReport {
    let connected = match gc.agents().next() {
        None => Check::pass(),
        Some(first) => {
            let reach = bfs_distances(gc, first).map(|d| d.len()).unwrap_or(0);
            if reach == gc.n {
                Check::pass()
            } else {
                let dist = bfs_distances(gc, first).unwrap_or_default();
                let lost = gc.agents().find(|a| !dist.contains_key(a)).expect("some agent unreachable");
                Check::fail(format!("agent {lost} unreachable from agent {first}"))
            }
        }
    };
    let acyclic = match directed_cycle(gt) {
        None => Check::pass(),
        Some(c) => Check::fail(format!(
            "cycle {}",
            c.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" -> ")
        )),
    };
    let mut containment = Check::pass();
    'outer: for i in gt.agents() {
        let cl = clustering.cluster_of(i);
        for j in gt.neighbors(i) {
            if clustering.cluster_of(j) == cl && !gc.has_edge(i, j) {
                containment = Check::fail(format!("({i},{j})"));
                break 'outer;
            }
        }
    }
    AssumptionReport { connected, acyclic, containment }
}
