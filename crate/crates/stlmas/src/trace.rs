//! Time-indexed simulation record, its CSV form, and the fault sidecar.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::AgentId;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace has no column `{0}`")]
    MissingColumn(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("fault log line {line}: {source}")]
    Fault { line: usize, source: serde_json::Error },
}

/// Round to the nine significant digits the CSV carries, so that a trace
/// and its parsed CSV are equal.
pub fn round_sig9(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.8e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(columns: Vec<String>) -> Self {
        Trace { columns, rows: Vec::new() }
    }

    /// Append a row; values are rounded to the CSV precision.
    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row.into_iter().map(round_sig9).collect());
    }

    pub fn index(&self, name: &str) -> Result<usize, TraceError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| TraceError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, TraceError> {
        let k = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    /// Uniform sample spacing (taken from the first two rows).
    pub fn step(&self) -> Option<f64> {
        (self.rows.len() >= 2).then(|| self.rows[1][0] - self.rows[0][0])
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| fmt_value(*v)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn from_csv(text: &str) -> Result<Trace, TraceError> {
        Self::read_csv(text.as_bytes())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Trace, TraceError> {
        let mut lines = r.lines();
        let header = match lines.next() {
            Some(h) => h?,
            None => return Err(TraceError::Parse { line: 1, msg: "empty file".into() }),
        };
        let columns: Vec<String> = header.trim_end().split(',').map(str::to_string).collect();
        if columns.first().map(String::as_str) != Some("t") {
            return Err(TraceError::Parse { line: 1, msg: "first column must be `t`".into() });
        }
        let mut trace = Trace::new(columns);
        for (k, line) in lines.enumerate() {
            let line = line?;
            let lineno = k + 2;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .trim_end()
                .split(',')
                .map(|f| f.parse::<f64>().map_err(|_| TraceError::Parse { line: lineno, msg: format!("`{f}` is not a number") }))
                .collect::<Result<Vec<f64>, _>>()?;
            if row.len() != trace.columns.len() {
                return Err(TraceError::Parse {
                    line: lineno,
                    msg: format!("{} fields, header has {}", row.len(), trace.columns.len()),
                });
            }
            trace.rows.push(row);
        }
        Ok(trace)
    }
}

/// Something that went wrong during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// Normalized task error left (−1, 0) and was clamped.
    TaskFunnel { task: String, e: f64 },
    /// `Γ` could not be evaluated or was not positive.
    Gamma { task: String, detail: String },
    /// Normalized consensus error reached ±1 and was clamped.
    ObserverClamp { observer: AgentId, target: AgentId, e: f64 },
    /// Estimation error left its `δ` funnel.
    ObserverBound { observer: AgentId, target: AgentId, error: f64, delta: f64 },
    /// A state or estimate stopped being finite; the run halts.
    NonFinite { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub step: usize,
    pub t: f64,
    #[serde(flatten)]
    pub kind: FaultKind,
}

impl std::fmt::Display for Fault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t={:.6} (step {}): ", self.t, self.step)?;
        match &self.kind {
            FaultKind::TaskFunnel { task, e } => write!(f, "task `{task}` error {e:.6} left (-1, 0)"),
            FaultKind::Gamma { task, detail } => write!(f, "task `{task}`: {detail}"),
            FaultKind::ObserverClamp { observer, target, e } => {
                write!(f, "observer ({observer},{target}) consensus error {e:.6} reached the funnel")
            }
            FaultKind::ObserverBound { observer, target, error, delta } => {
                write!(f, "observer ({observer},{target}) error {error:.6} >= delta {delta:.6}")
            }
            FaultKind::NonFinite { detail } => write!(f, "non-finite value: {detail}"),
        }
    }
}

/// One JSON object per line.
pub fn faults_to_jsonl(faults: &[Fault]) -> String {
    faults.iter().map(|f| serde_json::to_string(f).expect("fault serializes") + "\n").collect()
}

pub fn faults_from_jsonl(text: &str) -> Result<Vec<Fault>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| serde_json::from_str(l).map_err(|source| TraceError::Fault { line: k + 1, source }))
        .collect()
}
