//! `stlmas` command-line interface.
//!
//! Exit codes: 0 pass, 1 task or assumption failure, 2 usage or I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stlmas::observer::ObserverNetwork;
use stlmas::report::{verify, Report};
use stlmas::scenario::{load_scenario, Overrides, Scenario, ScenarioError};
use stlmas::sim::run;
use stlmas::topology::topological_order;
use stlmas::trace::{faults_from_jsonl, faults_to_jsonl, Trace};

#[derive(Parser)]
#[command(name = "stlmas", version, about = "Simulate and verify STL tasks on multi-agent systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct OverrideArgs {
    /// Disturbance seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Integration step, seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Smooth-min sharpness.
    #[arg(long)]
    eta: Option<f64>,
    /// Disturbance bound (componentwise).
    #[arg(long)]
    disturbance: Option<f64>,
}

impl OverrideArgs {
    fn overrides(self) -> Overrides {
        Overrides { seed: self.seed, dt: self.dt, eta: self.eta, disturbance_bound: self.disturbance }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace.csv, faults.jsonl, and report.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        over: OverrideArgs,
    },
    /// Re-derive the verdicts of a trace from its columns.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Fault sidecar to fold into the verdict.
        #[arg(long)]
        faults: Option<PathBuf>,
        #[command(flatten)]
        over: OverrideArgs,
    },
    /// Print clusters, the cluster DAG, and the observer range.
    Topology {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Draw the four trace figures as SVG.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several seeds in parallel and summarize.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Number of seeds, starting at --seed (default 1).
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        over: OverrideArgs,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

fn io_err(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, msg: e.to_string() }
}

fn scenario_err(e: ScenarioError) -> Failure {
    let code = match e {
        ScenarioError::Io { .. } | ScenarioError::Parse { .. } | ScenarioError::Schema { .. } => 2,
        _ => 1,
    };
    Failure { code, msg: e.to_string() }
}

fn load(path: &Path, over: Overrides) -> Result<Scenario, Failure> {
    let scn = load_scenario(path).map_err(scenario_err)?;
    if over == Overrides::default() {
        return Ok(scn);
    }
    scn.with_overrides(&over).map_err(scenario_err)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_err(format!("{}: {e}", path.display())))
}

fn cmd_run(scenario: &Path, out: &Path, over: Overrides) -> Result<bool, Failure> {
    let scn = load(scenario, over)?;
    let output = run(&scn).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
    std::fs::create_dir_all(out).map_err(io_err)?;
    write(&out.join("trace.csv"), &output.trace.to_csv())?;
    write(&out.join("faults.jsonl"), &faults_to_jsonl(&output.faults))?;
    let report = verify(&output.trace, &scn, &output.faults).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
    write(&out.join("report.json"), &serde_json::to_string_pretty(&report).map_err(io_err)?)?;
    print!("{}", report.summary());
    Ok(report.passed)
}

fn cmd_verify(trace: &Path, scenario: &Path, faults: Option<&Path>, over: Overrides) -> Result<bool, Failure> {
    let scn = load(scenario, over)?;
    let text = std::fs::read_to_string(trace).map_err(|e| io_err(format!("{}: {e}", trace.display())))?;
    let tr = Trace::from_csv(&text).map_err(|e| io_err(format!("{}: {e}", trace.display())))?;
    let fault_log = match faults {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(format!("{}: {e}", p.display())))?;
            faults_from_jsonl(&text).map_err(|e| io_err(format!("{}: {e}", p.display())))?
        }
        None => Vec::new(),
    };
    let report = verify(&tr, &scn, &fault_log).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
    print!("{}", report.summary());
    println!("{}", serde_json::to_string(&report).map_err(io_err)?);
    Ok(report.passed)
}

fn cmd_topology(scenario: &Path) -> Result<bool, Failure> {
    let scn = load(scenario, Overrides::default())?;
    let set = |s: &std::collections::BTreeSet<stlmas::AgentId>| {
        format!("{{{}}}", s.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","))
    };
    println!("agents: {}", scn.gc.n());
    for (k, c) in scn.clustering.clusters.iter().enumerate() {
        println!("cluster C{}: {}", k + 1, set(&c.agents));
    }
    let edges: Vec<String> = scn.dag.edges.iter().map(|(a, b)| format!("{a}->{b}")).collect();
    println!("cluster DAG edges: {}", if edges.is_empty() { "none".into() } else { edges.join(", ") });
    let order = topological_order(&scn.dag).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
    println!("leaf-first order: {}", order.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "));
    println!("required k: {}", scn.k);
    let net: &ObserverNetwork = &scn.network;
    println!("observer pairs: {}", net.links.len());
    let mut sigma = serde_json::Map::new();
    for r in net.targets() {
        let s = net.sigma_min(r);
        println!("  target {r}: observers {:?}, sigma_min = {s:.6}", net.observers_of(r).iter().map(|a| a.0).collect::<Vec<_>>());
        sigma.insert(r.to_string(), serde_json::json!(s));
    }
    let json = serde_json::json!({
        "agents": scn.gc.n(),
        "clusters": scn.clustering.clusters.iter().map(|c| c.agents.iter().map(|a| a.0).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "dag_edges": scn.dag.edges.iter().map(|(a, b)| [a.0 + 1, b.0 + 1]).collect::<Vec<_>>(),
        "leaf_first_order": order.iter().map(|c| c.0 + 1).collect::<Vec<_>>(),
        "required_k": scn.k,
        "observer_pairs": net.pairs().map(|p| [p.observer.0, p.target.0]).collect::<Vec<_>>(),
        "sigma_min": sigma,
        "assumptions": {
            "communication_connected": scn.assumptions.connected.passed,
            "task_graph_acyclic": scn.assumptions.acyclic.passed,
            "cluster_containment": scn.assumptions.containment.passed,
        }
    });
    println!("{json}");
    Ok(scn.assumptions.all_pass())
}

fn cmd_plot(trace: &Path, out: &Path) -> Result<bool, Failure> {
    let text = std::fs::read_to_string(trace).map_err(|e| io_err(format!("{}: {e}", trace.display())))?;
    let tr = Trace::from_csv(&text).map_err(|e| io_err(format!("{}: {e}", trace.display())))?;
    let res = stlmas::plot::plot_trace(&tr, out).map_err(io_err)?;
    for f in &res.files {
        println!("wrote {}", f.display());
    }
    for n in &res.notes {
        println!("note: {n}");
    }
    Ok(true)
}

fn cmd_sweep(scenario: &Path, seeds: u64, out: Option<&Path>, over: Overrides) -> Result<bool, Failure> {
    let base = load(scenario, Overrides::default())?;
    let first = over.seed.unwrap_or(1);
    let list: Vec<u64> = (first..first + seeds).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(list.len().max(1));
    let results: Vec<(u64, Result<Report, String>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let list = &list;
                let base = &base;
                s.spawn(move || {
                    list.iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|seed| {
                            let res = (|| {
                                let scn = base.with_overrides(&Overrides { seed: Some(*seed), ..over }).map_err(|e| e.to_string())?;
                                let output = run(&scn).map_err(|e| e.to_string())?;
                                if let Some(dir) = out {
                                    let d = dir.join(format!("seed_{seed}"));
                                    std::fs::create_dir_all(&d).map_err(|e| e.to_string())?;
                                    std::fs::write(d.join("trace.csv"), output.trace.to_csv()).map_err(|e| e.to_string())?;
                                    std::fs::write(d.join("faults.jsonl"), faults_to_jsonl(&output.faults)).map_err(|e| e.to_string())?;
                                }
                                verify(&output.trace, &scn, &output.faults).map_err(|e| e.to_string())
                            })();
                            (*seed, res)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all: Vec<_> = handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect();
        all.sort_by_key(|(s, _)| *s);
        all
    });
    let mut passed = 0;
    for (seed, r) in &results {
        match r {
            Ok(rep) => {
                let worst = rep.tasks.iter().map(|t| t.robustness).fold(f64::INFINITY, f64::min);
                println!(
                    "seed {seed:>4}: {}  min task robustness {worst:.4}  faults {}{}",
                    if rep.passed { "pass" } else { "FAIL" },
                    rep.faults,
                    rep.first_fault.as_ref().map(|f| format!("  first: {f}")).unwrap_or_default()
                );
                passed += usize::from(rep.passed);
            }
            Err(e) => println!("seed {seed:>4}: ERROR {e}"),
        }
    }
    println!("{passed}/{} seeds pass", results.len());
    Ok(passed == results.len())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, out, over } => cmd_run(scenario, out, over.overrides()),
        Command::Verify { trace, scenario, faults, over } => cmd_verify(trace, scenario, faults.as_deref(), over.overrides()),
        Command::Topology { scenario } => cmd_topology(scenario),
        Command::Plot { trace, out } => cmd_plot(trace, out),
        Command::Sweep { scenario, seeds, out, over } => cmd_sweep(scenario, *seeds, out.as_deref(), over.overrides()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
