//! Independent re-verification of a trace against its scenario.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observer::Pair;
use crate::scenario::Scenario;
use crate::sim::trace_columns;
use crate::stl::{monitor_temporal, StlError};
use crate::topology::Check;
use crate::trace::{Fault, FaultKind, Trace, TraceError};
use crate::{AgentId, StateMap};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("trace columns do not match the scenario: {0}")]
    ColumnMismatch(String),
    #[error("trace has fewer than two samples")]
    TooShort,
    #[error("task `{task}`: {source}")]
    Monitor { task: String, source: StlError },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskVerdict {
    pub task: String,
    pub formula: String,
    /// Temporal robustness from the true-state columns.
    pub robustness: f64,
    pub passed: bool,
    /// Why the task could not be judged, e.g. a run that halted early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub observer: AgentId,
    pub target: AgentId,
    /// Largest `‖x̃‖/δ` over the trace.
    pub worst_ratio: f64,
    pub first_violation: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelVerdict {
    pub task: String,
    pub e_min: f64,
    pub e_max: f64,
    pub first_violation: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub assumptions: Vec<CheckResult>,
    pub tasks: Vec<TaskVerdict>,
    pub observers: Vec<PairVerdict>,
    pub funnels: Vec<FunnelVerdict>,
    pub faults: usize,
    pub first_fault: Option<String>,
    pub passed: bool,
}

impl Report {
    pub fn summary(&self) -> String {
        let mut out = format!("scenario {}: {}\n", self.scenario, if self.passed { "PASS" } else { "FAIL" });
        for c in &self.assumptions {
            out += &format!("  {:<28} {}\n", c.name, verdict(c.passed, c.witness.as_deref()));
        }
        for t in &self.tasks {
            out += &format!("  task {:<10} robustness {:>12.6}  {}\n", t.task, t.robustness, verdict(t.passed, t.note.as_deref()));
        }
        for f in &self.funnels {
            let at = f.first_violation.map(|t| format!("first violation t={t:.4}"));
            out += &format!(
                "  funnel {:<8} e in [{:.4}, {:.4}]  {}\n",
                f.task,
                f.e_min,
                f.e_max,
                verdict(f.passed, at.as_deref())
            );
        }
        for p in &self.observers {
            let at = p.first_violation.map(|t| format!("first violation t={t:.4}"));
            out += &format!(
                "  observer ({},{}) max err/delta {:.4}  {}\n",
                p.observer,
                p.target,
                p.worst_ratio,
                verdict(p.passed, at.as_deref())
            );
        }
        out += &format!("  faults: {}", self.faults);
        if let Some(f) = &self.first_fault {
            out += &format!(" (first: {f})");
        }
        out.push('\n');
        out
    }
}

fn verdict(ok: bool, why: Option<&str>) -> String {
    match (ok, why) {
        (true, _) => "pass".into(),
        (false, Some(w)) => format!("FAIL ({w})"),
        (false, None) => "FAIL".into(),
    }
}

fn check(name: &str, c: &Check) -> CheckResult {
    CheckResult { name: name.into(), passed: c.passed, witness: c.witness.clone() }
}

fn states_at(trace: &Trace, row: usize, cols: &[(AgentId, Vec<usize>)]) -> StateMap {
    cols.iter()
        .map(|(a, idx)| (*a, DVector::from_iterator(idx.len(), idx.iter().map(|k| trace.rows[row][*k]))))
        .collect()
}

/// Re-derive every verdict from the trace columns alone. `faults` is the
/// run's fault log when available; it only feeds the summary and the
/// overall verdict.
pub fn verify(trace: &Trace, scn: &Scenario, faults: &[Fault]) -> Result<Report, ReportError> {
    let expected = trace_columns(scn);
    if trace.columns != expected {
        let at = expected
            .iter()
            .zip(&trace.columns)
            .position(|(a, b)| a != b)
            .map(|k| format!("column {} is `{}`, expected `{}`", k + 1, trace.columns[k], expected[k]))
            .unwrap_or_else(|| format!("{} columns, expected {}", trace.columns.len(), expected.len()));
        return Err(ReportError::ColumnMismatch(at));
    }
    let step = trace.step().ok_or(ReportError::TooShort)?;
    let times = trace.times();

    let mut state_cols = Vec::new();
    for (a, d) in &scn.dynamics {
        let idx = (1..=d.dim()).map(|c| trace.index(&format!("x_{a}_{c}"))).collect::<Result<Vec<_>, _>>()?;
        state_cols.push((*a, idx));
    }
    let mut est_cols = Vec::new();
    for p in scn.network.pairs() {
        let idx = (1..=scn.dynamics[&p.target].dim())
            .map(|c| trace.index(&format!("xhat_{}_{}_{c}", p.observer, p.target)))
            .collect::<Result<Vec<_>, _>>()?;
        est_cols.push((p, idx));
    }
    let rows: Vec<StateMap> = (0..trace.rows.len()).map(|r| states_at(trace, r, &state_cols)).collect();
    let estimates: Vec<crate::observer::Estimates> = (0..trace.rows.len())
        .map(|r| {
            est_cols
                .iter()
                .map(|(p, idx)| (*p, DVector::from_iterator(idx.len(), idx.iter().map(|k| trace.rows[r][*k]))))
                .collect()
        })
        .collect();

    let halted = faults.iter().any(|f| matches!(f.kind, FaultKind::NonFinite { .. } | FaultKind::Gamma { .. }));
    let mut tasks = Vec::new();
    let mut funnels = Vec::new();
    for b in &scn.tasks {
        let values = rows
            .iter()
            .map(|xs| b.formula.body.eval_exact(xs))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| ReportError::Monitor { task: b.name.clone(), source })?;
        // A run that halted leaves the window uncovered: the task fails. A
        // trace that is merely short is an input error.
        let (robustness, note) = match monitor_temporal(&b.formula, &values, step) {
            Ok(r) => (r, None),
            Err(e @ StlError::WindowExceedsHorizon { .. }) if halted => (f64::NEG_INFINITY, Some(e.to_string())),
            Err(source) => return Err(ReportError::Monitor { task: b.name.clone(), source }),
        };
        tasks.push(TaskVerdict {
            task: b.name.clone(),
            formula: b.formula.to_string(),
            robustness,
            passed: robustness > 0.0,
            note,
        });

        let mut fv = FunnelVerdict { task: b.name.clone(), e_min: f64::INFINITY, e_max: f64::NEG_INFINITY, first_violation: None, passed: true };
        for (r, t) in times.iter().enumerate() {
            let e = b
                .view(&rows[r], &estimates[r])
                .ok()
                .and_then(|view| b.formula.body.eval_smooth(&view, b.spec.eta).ok())
                .zip(b.spec.capital_gamma(t.max(0.0)).ok())
                .map(|(rho_hat, gamma)| (rho_hat - b.spec.rho_max) / gamma)
                .unwrap_or(f64::NAN);
            fv.e_min = fv.e_min.min(e);
            fv.e_max = fv.e_max.max(e);
            if !(e > -1.0 && e < 0.0) && fv.first_violation.is_none() {
                fv.first_violation = Some(*t);
                fv.passed = false;
            }
        }
        funnels.push(fv);
    }

    let mut observers = Vec::new();
    for (p, _) in &est_cols {
        let Pair { observer, target } = *p;
        let mut pv = PairVerdict { observer, target, worst_ratio: 0.0, first_violation: None, passed: true };
        for (r, t) in times.iter().enumerate() {
            let err = (&estimates[r][p] - &rows[r][&target]).norm();
            let delta = scn.observer.delta[p].at(t.max(0.0));
            pv.worst_ratio = pv.worst_ratio.max(err / delta);
            if !(err < delta) && pv.first_violation.is_none() {
                pv.first_violation = Some(*t);
                pv.passed = false;
            }
        }
        observers.push(pv);
    }

    let assumptions = vec![
        check("communication connected", &scn.assumptions.connected),
        check("task graph acyclic", &scn.assumptions.acyclic),
        check("cluster containment", &scn.assumptions.containment),
    ];
    let passed = assumptions.iter().all(|c| c.passed)
        && tasks.iter().all(|t| t.passed)
        && funnels.iter().all(|f| f.passed)
        && observers.iter().all(|o| o.passed)
        && faults.is_empty();
    Ok(Report {
        scenario: scn.name().to_string(),
        assumptions,
        tasks,
        observers,
        funnels,
        faults: faults.len(),
        first_fault: faults.first().map(|f| f.to_string()),
        passed,
    })
}
