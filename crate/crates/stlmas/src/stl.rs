//! Robust semantics for the STL fragment: predicates, conjunctive bodies with
//! optional negation, and a single temporal wrapper (`G`, `F`, or `F..G..`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::{AgentId, StateMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("malformed interval [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
    #[error("state of agent {0} is missing")]
    MissingAgent(AgentId),
    #[error("dimension mismatch for agent {agent}: expected {expected}, got {got}")]
    Dimension { agent: AgentId, expected: usize, got: usize },
    #[error("invalid predicate: {0}")]
    InvalidPredicate(String),
    #[error("smooth min of an empty sequence")]
    Empty,
    #[error("smoothing parameter must be positive, got {0}")]
    BadEta(f64),
    #[error("window ends at {needed} but the trace stops at {horizon}")]
    WindowExceedsHorizon { needed: f64, horizon: f64 },
    #[error("trace sampling step must be positive")]
    BadStep,
}

/// Atomic predicate with a concave robustness function.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// `r² − ‖Σ c_j x_j − d‖²`
    Norm2Le {
        terms: Vec<(AgentId, DMatrix<f64>)>,
        offset: DVector<f64>,
        radius_sq: f64,
    },
    /// `Σ a_jᵀ x_j + b`
    Linear {
        terms: Vec<(AgentId, DVector<f64>)>,
        bias: f64,
    },
}

fn check_agents<T>(terms: &[(AgentId, T)]) -> Result<(), StlError> {
    if terms.is_empty() {
        return Err(StlError::InvalidPredicate("no agents".into()));
    }
    if terms.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(StlError::InvalidPredicate(
            "agent list must be sorted and duplicate-free".into(),
        ));
    }
    Ok(())
}

impl Predicate {
    pub fn norm2_le(
        mut terms: Vec<(AgentId, DMatrix<f64>)>,
        offset: DVector<f64>,
        radius_sq: f64,
    ) -> Result<Self, StlError> {
        terms.sort_by_key(|t| t.0);
        check_agents(&terms)?;
        if !(radius_sq > 0.0) || !radius_sq.is_finite() {
            return Err(StlError::InvalidPredicate(format!(
                "radius_sq must be positive, got {radius_sq}"
            )));
        }
        for (agent, c) in &terms {
            if c.nrows() != offset.len() {
                return Err(StlError::InvalidPredicate(format!(
                    "coefficient of agent {agent} has {} rows, offset has {}",
                    c.nrows(),
                    offset.len()
                )));
            }
        }
        Ok(Predicate::Norm2Le { terms, offset, radius_sq })
    }

    pub fn linear(mut terms: Vec<(AgentId, DVector<f64>)>, bias: f64) -> Result<Self, StlError> {
        terms.sort_by_key(|t| t.0);
        check_agents(&terms)?;
        if terms.iter().all(|(_, a)| a.iter().all(|v| *v == 0.0)) {
            return Err(StlError::InvalidPredicate(
                "linear predicate needs a nonzero coefficient".into(),
            ));
        }
        Ok(Predicate::Linear { terms, bias })
    }

    pub fn agents(&self) -> Vec<AgentId> {
        match self {
            Predicate::Norm2Le { terms, .. } => terms.iter().map(|t| t.0).collect(),
            Predicate::Linear { terms, .. } => terms.iter().map(|t| t.0).collect(),
        }
    }

    fn state<'a>(xs: &'a StateMap, agent: AgentId, dim: usize) -> Result<&'a DVector<f64>, StlError> {
        let x = xs.get(&agent).ok_or(StlError::MissingAgent(agent))?;
        if x.len() != dim {
            return Err(StlError::Dimension { agent, expected: dim, got: x.len() });
        }
        Ok(x)
    }

    /// `Σ c_j x_j − d` for norm predicates.
    fn residual(
        terms: &[(AgentId, DMatrix<f64>)],
        offset: &DVector<f64>,
        xs: &StateMap,
    ) -> Result<DVector<f64>, StlError> {
        let mut y = -offset.clone();
        for (agent, c) in terms {
            let x = Self::state(xs, *agent, c.ncols())?;
            y += c * x;
        }
        Ok(y)
    }

    pub fn eval(&self, xs: &StateMap) -> Result<f64, StlError> {
        match self {
            Predicate::Norm2Le { terms, offset, radius_sq } => {
                let y = Self::residual(terms, offset, xs)?;
                Ok(radius_sq - y.norm_squared())
            }
            Predicate::Linear { terms, bias } => {
                let mut v = *bias;
                for (agent, a) in terms {
                    v += a.dot(Self::state(xs, *agent, a.len())?);
                }
                Ok(v)
            }
        }
    }

    /// Gradient with respect to one agent's state. Agents the predicate does
    /// not read get a zero vector sized from `xs`.
    pub fn grad(&self, xs: &StateMap, agent: AgentId) -> Result<DVector<f64>, StlError> {
        match self {
            Predicate::Norm2Le { terms, offset, .. } => {
                let Some((_, c)) = terms.iter().find(|t| t.0 == agent) else {
                    return zero_like(xs, agent);
                };
                let y = Self::residual(terms, offset, xs)?;
                Ok(c.transpose() * y * -2.0)
            }
            Predicate::Linear { terms, .. } => match terms.iter().find(|t| t.0 == agent) {
                Some((_, a)) => {
                    Self::state(xs, agent, a.len())?;
                    Ok(a.clone())
                }
                None => zero_like(xs, agent),
            },
        }
    }

    /// Concave in the stacked state (true for both kinds un-negated).
    pub fn is_linear(&self) -> bool {
        matches!(self, Predicate::Linear { .. })
    }
}

fn zero_like(xs: &StateMap, agent: AgentId) -> Result<DVector<f64>, StlError> {
    xs.get(&agent)
        .map(|x| DVector::zeros(x.len()))
        .ok_or(StlError::MissingAgent(agent))
}

/// Log-sum-exp under-approximation of the minimum together with the softmin
/// weights used by the chain rule.
pub fn smooth_min(values: &[f64], eta: f64) -> Result<(f64, Vec<f64>), StlError> {
    if values.is_empty() {
        return Err(StlError::Empty);
    }
    if !(eta > 0.0) {
        return Err(StlError::BadEta(eta));
    }
    let m = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = values.iter().map(|v| (-eta * (v - m)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let value = m - sum.ln() / eta;
    Ok((value, exps.iter().map(|e| e / sum).collect()))
}

/// One conjunct of a body.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    True,
    Atom { name: String, predicate: Predicate, negated: bool },
}

/// Conjunction of literals.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub literals: Vec<Literal>,
}

impl Body {
    /// Literals that carry a predicate, in order.
    pub fn atoms(&self) -> impl Iterator<Item = (&Predicate, bool)> {
        self.literals.iter().filter_map(|l| match l {
            Literal::Atom { predicate, negated, .. } => Some((predicate, *negated)),
            Literal::True => None,
        })
    }

    pub fn agents(&self) -> BTreeSet<AgentId> {
        self.atoms().flat_map(|(p, _)| p.agents()).collect()
    }

    /// Per-atom robustness values (negation applied).
    pub fn atom_values(&self, xs: &StateMap) -> Result<Vec<f64>, StlError> {
        self.atoms()
            .map(|(p, neg)| p.eval(xs).map(|v| if neg { -v } else { v }))
            .collect()
    }

    /// Smoothed robustness; `+∞` when the body is only `true`.
    pub fn eval_smooth(&self, xs: &StateMap, eta: f64) -> Result<f64, StlError> {
        let vals = self.atom_values(xs)?;
        if vals.is_empty() {
            return Ok(f64::INFINITY);
        }
        Ok(smooth_min(&vals, eta)?.0)
    }

    /// Exact min semantics, used by the monitor.
    pub fn eval_exact(&self, xs: &StateMap) -> Result<f64, StlError> {
        Ok(self.atom_values(xs)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn grad_smooth(&self, xs: &StateMap, agent: AgentId, eta: f64) -> Result<DVector<f64>, StlError> {
        let vals = self.atom_values(xs)?;
        let mut g = zero_like(xs, agent)?;
        if vals.is_empty() {
            return Ok(g);
        }
        let (_, w) = smooth_min(&vals, eta)?;
        for ((p, neg), wj) in self.atoms().zip(w) {
            let gp = p.grad(xs, agent)?;
            if neg {
                g -= gp * wj;
            } else {
                g += gp * wj;
            }
        }
        Ok(g)
    }

    /// True when every atom is concave (negation only over linear predicates).
    pub fn is_concave(&self) -> bool {
        self.atoms().all(|(p, neg)| !neg || p.is_linear())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self, StlError> {
        if !(a >= 0.0 && a <= b && b.is_finite()) {
            return Err(StlError::BadInterval { a, b });
        }
        Ok(Interval { a, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temporal {
    Always(Interval),
    Eventually(Interval),
    EventuallyAlways { outer: Interval, inner: Interval },
}

impl Temporal {
    /// Latest time the formula looks at.
    pub fn horizon(&self) -> f64 {
        match self {
            Temporal::Always(i) | Temporal::Eventually(i) => i.b,
            Temporal::EventuallyAlways { outer, inner } => outer.b + inner.b,
        }
    }

    /// Instant by which the funnel must certify satisfaction.
    pub fn satisfaction_instant(&self) -> f64 {
        match self {
            Temporal::Always(i) => i.a,
            Temporal::Eventually(i) => 0.5 * (i.a + i.b),
            Temporal::EventuallyAlways { outer, .. } => outer.a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    pub temporal: Temporal,
    pub body: Body,
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.temporal {
            Temporal::Always(i) => write!(f, "G{i}")?,
            Temporal::Eventually(i) => write!(f, "F{i}")?,
            Temporal::EventuallyAlways { outer, inner } => write!(f, "F{outer}G{inner}")?,
        }
        f.write_str("(")?;
        for (k, lit) in self.body.literals.iter().enumerate() {
            if k > 0 {
                f.write_str(" && ")?;
            }
            match lit {
                Literal::True => f.write_str("true")?,
                Literal::Atom { name, negated, .. } => {
                    if *negated {
                        f.write_str("!")?;
                    }
                    f.write_str(name)?;
                }
            }
        }
        f.write_str(")")
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    table: &'a BTreeMap<String, Predicate>,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, StlError> {
        Err(StlError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, tok: &str) -> Result<(), StlError> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            Ok(())
        } else {
            self.err(format!("expected `{tok}`"))
        }
    }

    fn number(&mut self) -> Result<f64, StlError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .char_indices()
            .take_while(|(i, c)| {
                c.is_ascii_digit() || *c == '.' || *c == 'e' || *c == 'E' || ((*c == '-' || *c == '+') && *i > 0 && matches!(rest.as_bytes()[i - 1], b'e' | b'E'))
            })
            .count();
        let text = &rest[..len];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos += len;
                Ok(v)
            }
            _ => self.err("expected a number"),
        }
    }

    fn interval(&mut self) -> Result<Interval, StlError> {
        self.expect("[")?;
        let a = self.number()?;
        self.expect(",")?;
        let b = self.number()?;
        self.expect("]")?;
        Interval::new(a, b)
    }

    fn ident(&mut self) -> Result<String, StlError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len: usize = rest
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
            .map(char::len_utf8)
            .sum();
        if len == 0 || rest.starts_with(|c: char| c.is_ascii_digit()) {
            return self.err("expected an identifier");
        }
        self.pos += len;
        Ok(rest[..len].to_string())
    }

    fn literal(&mut self) -> Result<Literal, StlError> {
        let negated = if self.peek() == Some('!') {
            self.pos += 1;
            true
        } else {
            false
        };
        let start = self.pos;
        let name = self.ident()?;
        if name == "true" {
            if negated {
                self.pos = start;
                return self.err("`true` cannot be negated");
            }
            return Ok(Literal::True);
        }
        let predicate = self
            .table
            .get(&name)
            .cloned()
            .ok_or_else(|| StlError::UnknownPredicate(name.clone()))?;
        Ok(Literal::Atom { name, predicate, negated })
    }

    fn body(&mut self) -> Result<Body, StlError> {
        self.expect("(")?;
        let mut literals = vec![self.literal()?];
        while self.src[self.pos..].trim_start().starts_with("&&") {
            self.expect("&&")?;
            literals.push(self.literal()?);
        }
        self.expect(")")?;
        Ok(Body { literals })
    }

    fn formula(&mut self) -> Result<Formula, StlError> {
        let op = self.peek();
        let temporal = match op {
            Some('G') => {
                self.pos += 1;
                Temporal::Always(self.interval()?)
            }
            Some('F') => {
                self.pos += 1;
                let outer = self.interval()?;
                match self.peek() {
                    Some('G') => {
                        self.pos += 1;
                        let inner = self.interval()?;
                        Temporal::EventuallyAlways { outer, inner }
                    }
                    Some('(') => Temporal::Eventually(outer),
                    _ => return self.err("expected `(` or a nested `G`"),
                }
            }
            _ => return self.err("expected `G` or `F`"),
        };
        let body = self.body()?;
        if self.peek().is_some() {
            return self.err("trailing input");
        }
        Ok(Formula { temporal, body })
    }
}

/// Parse a formula; every identifier must resolve in `table`.
pub fn parse_formula(text: &str, table: &BTreeMap<String, Predicate>) -> Result<Formula, StlError> {
    Parser { src: text, pos: 0, table }.formula()
}

/// Robustness of `phi` over a uniformly sampled signal of body values
/// (sample `k` at time `k·step`), evaluated at time zero.
pub fn monitor_temporal(phi: &Formula, body_values: &[f64], step: f64) -> Result<f64, StlError> {
    if !(step > 0.0) {
        return Err(StlError::BadStep);
    }
    let horizon = step * (body_values.len().saturating_sub(1)) as f64;
    let needed = phi.temporal.horizon();
    if body_values.is_empty() || needed > horizon + 1e-9 * step.max(1.0) {
        return Err(StlError::WindowExceedsHorizon { needed, horizon });
    }
    let idx = |t: f64, up: bool| -> usize {
        let k = t / step;
        let r = k.round();
        let k = if (k - r).abs() < 1e-6 { r } else if up { k.ceil() } else { k.floor() };
        (k as usize).min(body_values.len() - 1)
    };
    let window_min = |a: f64, b: f64| -> f64 {
        body_values[idx(a, true)..=idx(b, false)]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    };
    Ok(match &phi.temporal {
        Temporal::Always(i) => window_min(i.a, i.b),
        Temporal::Eventually(i) => body_values[idx(i.a, true)..=idx(i.b, false)]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max),
        Temporal::EventuallyAlways { outer, inner } => (idx(outer.a, true)..=idx(outer.b, false))
            .map(|k| {
                let t1 = k as f64 * step;
                window_min(t1 + inner.a, t1 + inner.b)
            })
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn xs(pairs: &[(usize, &[f64])]) -> StateMap {
        pairs
            .iter()
            .map(|(a, v)| (AgentId(*a), DVector::from_column_slice(v)))
            .collect()
    }

    fn rel(a: usize, b: usize, r2: f64) -> Predicate {
        let i = DMatrix::identity(2, 2);
        Predicate::norm2_le(vec![(AgentId(a), i.clone()), (AgentId(b), -i)], DVector::zeros(2), r2).unwrap()
    }

    #[test]
    fn coincident_relative_predicate_is_radius() {
        let p = rel(1, 2, 26.75);
        assert_eq!(p.eval(&xs(&[(1, &[0.3, -1.0]), (2, &[0.3, -1.0])])).unwrap(), 26.75);
    }

    #[test]
    fn linear_projection() {
        let p = Predicate::linear(vec![(AgentId(1), DVector::from_vec(vec![1.0, 0.0]))], 0.0).unwrap();
        assert_eq!(p.eval(&xs(&[(1, &[3.0, 7.0])])).unwrap(), 3.0);
        assert_eq!(p.grad(&xs(&[(1, &[9.0, 1.0])]), AgentId(1)).unwrap(), DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn center_of_ball() {
        let p = Predicate::norm2_le(
            vec![(AgentId(1), DMatrix::identity(2, 2))],
            DVector::from_vec(vec![0.0, 2.0]),
            7.0,
        )
        .unwrap();
        let at = xs(&[(1, &[0.0, 2.0])]);
        assert_eq!(p.eval(&at).unwrap(), 7.0);
        assert_eq!(p.grad(&at, AgentId(1)).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn missing_and_mismatched_agents() {
        let p = rel(1, 2, 1.0);
        assert_eq!(p.eval(&xs(&[(1, &[0.0, 0.0])])), Err(StlError::MissingAgent(AgentId(2))));
        assert!(matches!(
            p.eval(&xs(&[(1, &[0.0, 0.0]), (2, &[0.0])])),
            Err(StlError::Dimension { .. })
        ));
    }

    #[test]
    fn smooth_min_closed_forms() {
        let (v, w) = smooth_min(&[3.0, 3.0], 10.0).unwrap();
        assert_relative_eq!(v, 3.0 - 2f64.ln() / 10.0, epsilon = 1e-12);
        assert_eq!(w, vec![0.5, 0.5]);
        assert_eq!(smooth_min(&[4.2], 10.0).unwrap(), (4.2, vec![1.0]));
        let (v, _) = smooth_min(&[0.0, 10.0], 10.0).unwrap();
        assert!(v <= 0.0 && v >= -(2f64.ln()) / 10.0);
        assert_eq!(smooth_min(&[], 1.0), Err(StlError::Empty));
        // large magnitudes stay finite
        let (v, _) = smooth_min(&[1e6, 1e6 + 1.0], 100.0).unwrap();
        assert!(v.is_finite());
    }

    fn table() -> BTreeMap<String, Predicate> {
        ["p1", "p2", "p3", "p4"]
            .iter()
            .enumerate()
            .map(|(k, n)| (n.to_string(), rel(1, 2, 1.0 + k as f64)))
            .collect()
    }

    #[test]
    fn parses_grammar_examples() {
        let t = table();
        let f = parse_formula("G[1,2](p1 && p2 && p3)", &t).unwrap();
        assert_eq!(f.temporal, Temporal::Always(Interval { a: 1.0, b: 2.0 }));
        assert_eq!(f.body.literals.len(), 3);
        let f = parse_formula("G[0,0](true)", &t).unwrap();
        assert_eq!(f.body.literals, vec![Literal::True]);
        let f = parse_formula("F[1,2]G[0,0.5](p4)", &t).unwrap();
        assert!(matches!(f.temporal, Temporal::EventuallyAlways { .. }));
        let f = parse_formula(" F [ 0.5 , 1e0 ] ( !p1&&p2 ) ", &t).unwrap();
        assert_eq!(f.to_string(), "F[0.5,1](!p1 && p2)");
    }

    #[test]
    fn parse_errors() {
        let t = table();
        assert_eq!(parse_formula("G[1,2](q)", &t), Err(StlError::UnknownPredicate("q".into())));
        assert_eq!(parse_formula("G[2,1](p1)", &t), Err(StlError::BadInterval { a: 2.0, b: 1.0 }));
        assert!(matches!(parse_formula("G[1,2](p1", &t), Err(StlError::Syntax { pos: 9, .. })));
        assert!(matches!(parse_formula("X[1,2](p1)", &t), Err(StlError::Syntax { pos: 0, .. })));
        assert!(matches!(parse_formula("G[1,2]G[0,1](p1)", &t), Err(StlError::Syntax { .. })));
        assert!(matches!(parse_formula("G[1,2](p1) x", &t), Err(StlError::Syntax { .. })));
        assert!(matches!(parse_formula("G[1,2](!true)", &t), Err(StlError::Syntax { .. })));
    }

    #[test]
    fn body_semantics() {
        let t = table();
        let x = xs(&[(1, &[0.1, 0.2]), (2, &[-0.3, 0.4])]);
        let single = parse_formula("G[0,1](p2)", &t).unwrap();
        assert_eq!(single.body.eval_smooth(&x, 10.0).unwrap(), t["p2"].eval(&x).unwrap());
        let twice = parse_formula("G[0,1](p2 && p2)", &t).unwrap();
        assert_relative_eq!(
            twice.body.eval_smooth(&x, 10.0).unwrap(),
            t["p2"].eval(&x).unwrap() - 2f64.ln() / 10.0,
            epsilon = 1e-12
        );
        let neg = parse_formula("G[0,1](!p2)", &t).unwrap();
        assert_eq!(neg.body.eval_exact(&x).unwrap(), -t["p2"].eval(&x).unwrap());
        assert!(!neg.body.is_concave());
        let only_true = parse_formula("G[0,1](true)", &t).unwrap();
        assert_eq!(only_true.body.eval_smooth(&x, 10.0).unwrap(), f64::INFINITY);
        assert_eq!(only_true.body.grad_smooth(&x, AgentId(1), 10.0).unwrap(), DVector::zeros(2));
        let g = single.body.grad_smooth(&x, AgentId(3), 10.0);
        assert_eq!(g, Err(StlError::MissingAgent(AgentId(3))));
    }

    #[test]
    fn monitor_semantics() {
        let t = table();
        let g = parse_formula("G[1,2](p1)", &t).unwrap();
        let f = parse_formula("F[1,2](p1)", &t).unwrap();
        let constant = vec![5.0; 21];
        assert_eq!(monitor_temporal(&g, &constant, 0.1).unwrap(), 5.0);
        let mut dip = constant.clone();
        dip[15] = -1.0;
        assert_eq!(monitor_temporal(&g, &dip, 0.1).unwrap(), -1.0);
        assert_eq!(monitor_temporal(&f, &dip, 0.1).unwrap(), 5.0);
        dip[5] = -7.0; // outside the window
        assert_eq!(monitor_temporal(&g, &dip, 0.1).unwrap(), -1.0);
        assert!(matches!(
            monitor_temporal(&g, &constant[..15], 0.1),
            Err(StlError::WindowExceedsHorizon { .. })
        ));
        let fg = parse_formula("F[0,1]G[0,0.5](p1)", &t).unwrap();
        let ramp: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        // best start is t1 = 1, window [1, 1.5] has min 10
        assert_eq!(monitor_temporal(&fg, &ramp, 0.1).unwrap(), 10.0);
    }
}
