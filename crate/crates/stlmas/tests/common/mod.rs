//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stlmas::scenario::{compile, parse_scenario, Scenario, ScenarioFile};
use stlmas::stl::{Body, Literal, Predicate, Temporal};
use stlmas::topology::{
    bfs_distances, cluster_induced_dag, compute_clusters, k_hop_neighbors, required_k, topological_order, ClusterId,
    Graph, TopologyError,
};
use stlmas::{AgentId, StateMap};

pub fn case_study_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/case_study.json")
}

pub fn case_study_file() -> ScenarioFile {
    let text = std::fs::read_to_string(case_study_path()).expect("shipped scenario is readable");
    parse_scenario(&text).expect("shipped scenario parses")
}

pub fn case_study_scenario() -> Scenario {
    compile(case_study_file()).expect("shipped scenario validates")
}

/// Single scalar agent `ẋ = rate · x` with identity input, no tasks, no observers.
pub fn scalar_file(rate: f64, x0: f64, horizon: f64, dt: f64) -> ScenarioFile {
    let text = format!(
        r#"{{
  "name": "scalar",
  "horizon": {horizon},
  "dt": {dt},
  "agents": [{{"id": 1, "initial": [{x0}], "drift": {{"matrix": [[{rate}]]}}, "input": {{"form": "identity"}}}}],
  "communication": [],
  "predicates": {{}},
  "tasks": [],
  "observer": {{"decay": 1.0, "delta": [1.0, 1.0]}},
  "control": {{"mode": "off"}}
}}"#
    );
    parse_scenario(&text).expect("scalar fixture parses")
}

pub fn state(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn states(pairs: &[(usize, &[f64])]) -> StateMap {
    pairs.iter().map(|(a, v)| (AgentId(*a), state(v))).collect()
}

// ---------------------------------------------------------------- random data

pub fn random_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.gen_range(-scale..scale))
}

/// Random predicate over a nonempty subset of `agents` (each of dimension `dim`).
pub fn random_predicate(rng: &mut ChaCha8Rng, agents: usize, dim: usize) -> Predicate {
    let mut chosen: Vec<usize> = (1..=agents).filter(|_| rng.gen_bool(0.5)).collect();
    if chosen.is_empty() {
        chosen.push(rng.gen_range(1..=agents));
    }
    if rng.gen_bool(0.5) {
        let rows = rng.gen_range(1..=dim + 1);
        let terms = chosen
            .iter()
            .map(|a| (AgentId(*a), DMatrix::from_fn(rows, dim, |_, _| rng.gen_range(-2.0..2.0))))
            .collect();
        let offset = random_vec(rng, rows, 3.0);
        Predicate::norm2_le(terms, offset, rng.gen_range(0.5..30.0)).expect("valid random ball")
    } else {
        let terms = chosen.iter().map(|a| (AgentId(*a), random_vec(rng, dim, 2.0))).collect();
        Predicate::linear(terms, rng.gen_range(-5.0..5.0)).expect("valid random halfspace")
    }
}

/// Random concave body: balls may not be negated, halfspaces may.
pub fn random_body(rng: &mut ChaCha8Rng, agents: usize, dim: usize) -> Body {
    let count = rng.gen_range(1..=4);
    let literals = (0..count)
        .map(|k| {
            let predicate = random_predicate(rng, agents, dim);
            let negated = predicate.is_linear() && rng.gen_bool(0.3);
            Literal::Atom { name: format!("p{k}"), predicate, negated }
        })
        .collect();
    Body { literals }
}

pub fn random_states(rng: &mut ChaCha8Rng, agents: usize, dim: usize) -> StateMap {
    (1..=agents).map(|a| (AgentId(a), random_vec(rng, dim, 3.0))).collect()
}

/// Connected undirected graph on `n` vertices: a random tree plus extra edges.
pub fn random_connected(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> Vec<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for v in 2..=n {
        let u = rng.gen_range(1..v);
        edges.insert((u, v));
    }
    for a in 1..=n {
        for b in a + 1..=n {
            if rng.gen_bool(extra) {
                edges.insert((a, b));
            }
        }
    }
    edges.into_iter().collect()
}

/// Random DAG edges (owner, read) oriented from higher to lower index after
/// a random relabelling.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<(usize, usize)> {
    let mut perm: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..a {
            if rng.gen_bool(density) {
                edges.push((perm[a], perm[b]));
            }
        }
    }
    edges
}

// ---------------------------------------------------------------- oracles

/// Central finite-difference gradient of `f` with respect to agent `agent`.
pub fn fd_grad(f: impl Fn(&StateMap) -> f64, xs: &StateMap, agent: AgentId, h: f64) -> DVector<f64> {
    let x = &xs[&agent];
    DVector::from_fn(x.len(), |k, _| {
        let mut plus = xs.clone();
        let mut minus = xs.clone();
        plus.get_mut(&agent).unwrap()[k] += h;
        minus.get_mut(&agent).unwrap()[k] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

/// Brute-force temporal robustness at time zero over samples `k·step`.
pub fn monitor_oracle(temporal: &Temporal, values: &[f64], step: f64) -> f64 {
    let tol = 1e-7 * step;
    let in_window = |t: f64, a: f64, b: f64| t >= a - tol && t <= b + tol;
    let times: Vec<f64> = (0..values.len()).map(|k| k as f64 * step).collect();
    let min_over = |a: f64, b: f64| {
        times
            .iter()
            .zip(values)
            .filter(|(t, _)| in_window(**t, a, b))
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min)
    };
    match temporal {
        Temporal::Always(i) => min_over(i.a, i.b),
        Temporal::Eventually(i) => times
            .iter()
            .zip(values)
            .filter(|(t, _)| in_window(**t, i.a, i.b))
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max),
        Temporal::EventuallyAlways { outer, inner } => times
            .iter()
            .filter(|t| in_window(**t, outer.a, outer.b))
            .map(|t| min_over(t + inner.a, t + inner.b))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// All-pairs hop distances (Floyd–Warshall); `None` when unreachable.
pub fn floyd_warshall(n: usize, undirected: &[(usize, usize)]) -> Vec<Vec<Option<usize>>> {
    let mut d = vec![vec![None; n + 1]; n + 1];
    for (v, row) in d.iter_mut().enumerate().skip(1) {
        row[v] = Some(0);
    }
    for &(a, b) in undirected {
        if a != b {
            d[a][b] = Some(1);
            d[b][a] = Some(1);
        }
    }
    for m in 1..=n {
        for i in 1..=n {
            for j in 1..=n {
                if let (Some(x), Some(y)) = (d[i][m], d[m][j]) {
                    if d[i][j].is_none_or(|c| x + y < c) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

fn find(parent: &mut [usize], v: usize) -> usize {
    let mut r = v;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = v;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

/// Clusters by union-find over communication edges that carry a task edge,
/// returned as sorted member lists ordered by smallest member.
pub fn cluster_oracle(n: usize, gc: &[(usize, usize)], gt: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let linked: BTreeSet<(usize, usize)> = gc.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    let mut parent: Vec<usize> = (0..=n).collect();
    for &(a, b) in gt {
        if a != b && linked.contains(&(a, b)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 1..=n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Cluster DAG edges as (owner cluster index, read cluster index).
pub fn dag_oracle(clusters: &[Vec<usize>], gt: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    let of = |v: usize| clusters.iter().position(|c| c.contains(&v)).expect("every agent clustered");
    gt.iter()
        .filter(|(a, b)| a != b)
        .map(|&(a, b)| (of(a), of(b)))
        .filter(|(x, y)| x != y)
        .collect()
}

/// Largest hop distance over task edges without a communication edge.
pub fn required_k_oracle(n: usize, gc: &[(usize, usize)], gt: &[(usize, usize)]) -> Option<usize> {
    let d = floyd_warshall(n, gc);
    let mut k = 0;
    for &(a, b) in gt {
        if a == b || d[a][b] == Some(1) {
            continue;
        }
        k = k.max(d[a][b]?);
    }
    Some(k)
}

/// Distance between the analytic smooth-body gradient and its central
/// finite-difference estimate, both stacked over every agent in `xs`,
/// together with the norm of the numeric gradient.
pub fn stacked_gradient_error(body: &Body, xs: &StateMap, eta: f64) -> (f64, f64) {
    let f = |s: &StateMap| body.eval_smooth(s, eta).expect("body evaluates");
    let (mut err2, mut norm2) = (0.0, 0.0);
    for agent in xs.keys() {
        let g = body.grad_smooth(xs, *agent, eta).expect("gradient evaluates");
        let fd = fd_grad(f, xs, *agent, 1e-5);
        err2 += (&g - &fd).norm_squared();
        norm2 += fd.norm_squared();
    }
    (err2.sqrt(), norm2.sqrt())
}

/// Acyclicity by repeatedly deleting nodes without outgoing edges.
pub fn is_acyclic_oracle(nodes: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut alive: BTreeSet<usize> = (0..nodes).collect();
    loop {
        let sink = alive.iter().copied().find(|v| !edges.iter().any(|(a, b)| a == v && alive.contains(b)));
        match sink {
            Some(v) => {
                alive.remove(&v);
            }
            None => return alive.is_empty(),
        }
    }
}

// ---------------------------------------------------------------- topology check

pub fn clusters_as_lists(gc: &Graph, gt: &Graph) -> Vec<Vec<usize>> {
    compute_clusters(gc, gt)
        .unwrap()
        .clusters
        .iter()
        .map(|c| c.agents.iter().map(|a| a.0).collect())
        .collect()
}

/// Checks every topology operation on one random instance against the
/// oracles. Returns false when the cluster graph has a cycle, in which case
/// only the clusters and the cycle verdict are compared.
pub fn check_instance(n: usize, gc_edges: &[(usize, usize)], gt_edges: &[(usize, usize)]) -> bool {
    let gc = Graph::undirected(n, gc_edges.iter().cloned()).unwrap();
    let gt = Graph::directed(n, gt_edges.iter().cloned()).unwrap();
    let want = cluster_oracle(n, gc_edges, gt_edges);
    assert_eq!(clusters_as_lists(&gc, &gt), want);

    let clustering = compute_clusters(&gc, &gt).unwrap();
    let want_edges = dag_oracle(&want, gt_edges);
    let dag = match cluster_induced_dag(&clustering, &gt) {
        Ok(dag) => dag,
        Err(TopologyError::ClusterCycle(_)) => {
            assert!(!is_acyclic_oracle(want.len(), &want_edges), "cycle reported on an acyclic cluster graph");
            return false;
        }
        Err(e) => panic!("{e}"),
    };
    assert!(is_acyclic_oracle(want.len(), &want_edges));
    let got: BTreeSet<(usize, usize)> = dag.edges.iter().map(|(a, b)| (a.0, b.0)).collect();
    assert_eq!(got, want_edges);

    let order = topological_order(&dag).unwrap();
    let pos = |c: ClusterId| order.iter().position(|x| *x == c).unwrap();
    for (a, b) in &dag.edges {
        assert!(pos(*b) < pos(*a), "read cluster must come first");
    }

    assert_eq!(Some(required_k(&gc, &gt).unwrap()), required_k_oracle(n, gc_edges, gt_edges));

    let d = floyd_warshall(n, gc_edges);
    for i in 1..=n {
        let bfs = bfs_distances(&gc, AgentId(i)).unwrap();
        for j in 1..=n {
            assert_eq!(bfs.get(&AgentId(j)).copied(), d[i][j]);
        }
        for k in 2..5 {
            let want: BTreeSet<AgentId> =
                (1..=n).filter(|&j| d[i][j].is_some_and(|x| (2..=k).contains(&x))).map(AgentId).collect();
            assert_eq!(k_hop_neighbors(&gc, AgentId(i), k).unwrap(), want);
        }
    }
    true
}

// ---------------------------------------------------------------- broken scenarios

pub fn case_study_json() -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(case_study_path()).unwrap()).unwrap()
}

fn set_task(v: &mut serde_json::Value, name: &str, field: &str, value: serde_json::Value) {
    let t = v["tasks"].as_array_mut().unwrap().iter_mut().find(|t| t["name"] == name).unwrap();
    t[field] = value;
}

fn add_link_predicate(v: &mut serde_json::Value, name: &str, a: usize, b: usize) {
    v["predicates"][name] = serde_json::json!({
        "kind": "norm2_le",
        "terms": [{"agent": a, "coeff": 1.0}, {"agent": b, "coeff": -1.0}],
        "radius_sq": 70.05
    });
}

/// One constructed violation per validator: (label, scenario, expected error variant).
pub fn broken_scenarios() -> Vec<(&'static str, serde_json::Value, &'static str)> {
    use serde_json::json;
    let mut out = Vec::new();

    let mut v = case_study_json();
    v["communication"] = json!([[1, 2], [1, 3], [2, 3], [4, 5]]);
    out.push(("disconnected communication", v, "CommunicationDisconnected"));

    let mut v = case_study_json();
    add_link_predicate(&mut v, "near21", 2, 1);
    set_task(&mut v, "phi2", "formula", json!("G[1,2](near23 && near21)"));
    out.push(("mutually dependent tasks", v, "TaskGraphCyclic"));

    let mut v = case_study_json();
    add_link_predicate(&mut v, "near43", 4, 3);
    set_task(&mut v, "phi4", "formula", json!("G[1,2](near45 && near43)"));
    out.push(("unlinked task neighbour in a cluster", v, "ClusterContainment"));

    let mut v = case_study_json();
    set_task(&mut v, "phi2", "gamma", json!({"v0": 30.0, "v_inf": 0.01, "decay": 3.0}));
    out.push(("funnel below the estimation margin", v, "GammaNonPositive"));

    let mut v = case_study_json();
    set_task(&mut v, "phi3", "rho_max", json!(7.5));
    out.push(("rho_max above the optimum", v, "RhoOpt"));

    let mut v = case_study_json();
    v["observer"]["delta_targets"]["5"] = json!([1.8, 1.8]);
    out.push(("loose observer funnels", v, "Infeasible"));

    let mut v = case_study_json();
    v["agents"][2]["initial"] = json!([-1.175, -1.618]);
    out.push(("start above rho_max", v, "TaskInitialization"));

    let mut v = case_study_json();
    set_task(&mut v, "phi3", "gamma", json!({"v0": 0.5, "v_inf": 0.4, "decay": 1.0}));
    out.push(("mis-tuned funnel at t = 0", v, "TaskInitialization"));

    out
}

/// Debug name of the error variant a broken scenario produces, or `None` if it compiles.
pub fn rejection(v: &serde_json::Value) -> Option<String> {
    let err = parse_scenario(&v.to_string()).and_then(compile).err()?;
    let dbg = format!("{err:?}");
    Some(dbg.split([' ', '(', '{']).next().unwrap_or("").to_string())
}
