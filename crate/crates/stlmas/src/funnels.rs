//! Prescribed-performance functions, estimation margins, and the adjusted
//! robustness funnels used by the controller.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::stl::{smooth_min, Body, Predicate, StlError, Temporal};
use crate::{AgentId, StateMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunnelError {
    #[error("invalid performance function: {0}")]
    InvalidPpf(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("estimation bound {bound} reaches radius {radius} at t={t}")]
    MarginInfeasible { t: f64, bound: f64, radius: f64 },
    #[error("rho_max {rho_max} does not exceed the largest margin {margin} (t={t})")]
    Feasibility { rho_max: f64, margin: f64, t: f64 },
    #[error("rho_max {rho_max} must lie in (0, {rho_opt})")]
    RhoOpt { rho_max: f64, rho_opt: f64 },
    #[error("asymptotic funnel {gamma_inf} cannot sit below rho_max - r_target = {limit}")]
    TargetUnreachable { gamma_inf: f64, limit: f64 },
    #[error("initial robustness {rho_hat_0} is outside the funnel: {reason}")]
    Initialization { rho_hat_0: f64, reason: String },
    #[error("adjusted funnel is not positive at t={t} (value {value})")]
    NonPositiveGamma { t: f64, value: f64 },
    #[error(transparent)]
    Stl(#[from] StlError),
}

/// `(v0 − v_inf)·exp(−decay·t) + v_inf`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ppf {
    v0: f64,
    v_inf: f64,
    decay: f64,
}

impl Ppf {
    pub fn new(v0: f64, v_inf: f64, decay: f64) -> Result<Self, FunnelError> {
        if !(v_inf > 0.0 && v0 >= v_inf && decay >= 0.0 && v0.is_finite() && decay.is_finite()) {
            return Err(FunnelError::InvalidPpf(format!(
                "need v0 >= v_inf > 0 and decay >= 0, got v0={v0}, v_inf={v_inf}, decay={decay}"
            )));
        }
        Ok(Ppf { v0, v_inf, decay })
    }

    pub fn constant(v: f64) -> Result<Self, FunnelError> {
        Self::new(v, v, 0.0)
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }
    pub fn v_inf(&self) -> f64 {
        self.v_inf
    }
    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn eval(&self, t: f64) -> Result<f64, FunnelError> {
        if t < 0.0 {
            return Err(FunnelError::NegativeTime(t));
        }
        Ok(self.at(t))
    }

    pub fn deriv(&self, t: f64) -> Result<f64, FunnelError> {
        if t < 0.0 {
            return Err(FunnelError::NegativeTime(t));
        }
        Ok(-self.decay * (self.v0 - self.v_inf) * (-self.decay * t).exp())
    }

    /// Unchecked evaluation for internal hot paths with `t ≥ 0`.
    pub(crate) fn at(&self, t: f64) -> f64 {
        (self.v0 - self.v_inf) * (-self.decay * t).exp() + self.v_inf
    }

    pub(crate) fn rate(&self, t: f64) -> f64 {
        -self.decay * (self.v0 - self.v_inf) * (-self.decay * t).exp()
    }

    /// Same shape scaled by a positive factor.
    pub fn scaled(&self, k: f64) -> Result<Self, FunnelError> {
        Self::new(self.v0 * k, self.v_inf * k, self.decay)
    }
}

/// Outward rounding of a ball margin: robustness values near the radius are
/// computed at the scale `r²`, so a few ulps there keep the bound sound in
/// floating point where it is tight.
fn round_slack(radius: f64) -> f64 {
    8.0 * f64::EPSILON * radius * radius
}

/// Margin contributed by one body atom.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomMargin {
    Zero,
    /// `2Δr − Δ²` with `Δ = Σ w_j δ_j(t)` and `w_j` the operator norm of `c_j`.
    Norm2 { radius: f64, weights: Vec<(f64, Ppf)> },
    /// `Σ w_j δ_j(t)` with `w_j = ‖a_j‖₁`.
    Linear { weights: Vec<(f64, Ppf)> },
}

impl AtomMargin {
    fn spread(weights: &[(f64, Ppf)], t: f64) -> (f64, f64) {
        weights
            .iter()
            .fold((0.0, 0.0), |(v, d), (w, p)| (v + w * p.at(t), d + w * p.rate(t)))
    }

    /// Value and time derivative.
    pub fn eval(&self, t: f64) -> Result<(f64, f64), FunnelError> {
        match self {
            AtomMargin::Zero => Ok((0.0, 0.0)),
            AtomMargin::Linear { weights } => Ok(Self::spread(weights, t)),
            AtomMargin::Norm2 { radius, weights } => {
                let (big, rate) = Self::spread(weights, t);
                if big >= *radius {
                    return Err(FunnelError::MarginInfeasible { t, bound: big, radius: *radius });
                }
                Ok((2.0 * big * radius - big * big + round_slack(*radius), (2.0 * radius - 2.0 * big) * rate))
            }
        }
    }

    fn limit(&self) -> Result<f64, FunnelError> {
        let inf = |ws: &[(f64, Ppf)]| ws.iter().map(|(w, p)| w * p.v_inf).sum::<f64>();
        match self {
            AtomMargin::Zero => Ok(0.0),
            AtomMargin::Linear { weights } => Ok(inf(weights)),
            AtomMargin::Norm2 { radius, weights } => {
                let big = inf(weights);
                if big >= *radius {
                    return Err(FunnelError::MarginInfeasible { t: f64::INFINITY, bound: big, radius: *radius });
                }
                Ok(2.0 * big * radius - big * big + round_slack(*radius))
            }
        }
    }
}

/// Per-atom margins of a task body.
#[derive(Debug, Clone, PartialEq)]
pub struct Margin {
    pub atoms: Vec<AtomMargin>,
}

impl Margin {
    /// Margins for `body` when the agents in `estimated` are only known
    /// through estimates bounded by the given error funnels.
    pub fn for_body(body: &Body, estimated: &BTreeMap<AgentId, Ppf>) -> Margin {
        let atoms = body
            .atoms()
            .map(|(p, _)| match p {
                Predicate::Norm2Le { terms, radius_sq, .. } => {
                    let weights: Vec<(f64, Ppf)> = terms
                        .iter()
                        .filter_map(|(a, c)| estimated.get(a).map(|d| (c.clone().svd(false, false).singular_values.max(), *d)))
                        .collect();
                    if weights.is_empty() {
                        AtomMargin::Zero
                    } else {
                        AtomMargin::Norm2 { radius: radius_sq.sqrt(), weights }
                    }
                }
                Predicate::Linear { terms, .. } => {
                    let weights: Vec<(f64, Ppf)> = terms
                        .iter()
                        .filter_map(|(a, v)| estimated.get(a).map(|d| (v.lp_norm(1), *d)))
                        .collect();
                    if weights.is_empty() {
                        AtomMargin::Zero
                    } else {
                        AtomMargin::Linear { weights }
                    }
                }
            })
            .collect();
        Margin { atoms }
    }

    /// Formula margin: the largest atom margin.
    pub fn eval(&self, t: f64) -> Result<f64, FunnelError> {
        let mut m: f64 = 0.0;
        for a in &self.atoms {
            m = m.max(a.eval(t)?.0);
        }
        Ok(m)
    }

    pub fn limit(&self) -> Result<f64, FunnelError> {
        let mut m: f64 = 0.0;
        for a in &self.atoms {
            m = m.max(a.limit()?);
        }
        Ok(m)
    }
}

/// Tuned funnel of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct FunnelSpec {
    pub gamma: Ppf,
    pub rho_max: f64,
    pub margin: Margin,
    pub eta: f64,
}

impl FunnelSpec {
    /// Adjusted funnel `Γ(t)` (smooth min of `γ − m_j` over atoms) and its
    /// time derivative.
    pub fn capital_gamma_with_deriv(&self, t: f64) -> Result<(f64, f64), FunnelError> {
        let (g, gd) = (self.gamma.eval(t)?, self.gamma.deriv(t)?);
        if self.margin.atoms.is_empty() {
            return Ok((g, gd));
        }
        let mut vals = Vec::with_capacity(self.margin.atoms.len());
        let mut rates = Vec::with_capacity(self.margin.atoms.len());
        for a in &self.margin.atoms {
            let (m, md) = a.eval(t)?;
            vals.push(g - m);
            rates.push(gd - md);
        }
        let (v, w) = smooth_min(&vals, self.eta)?;
        Ok((v, w.iter().zip(&rates).map(|(w, r)| w * r).sum()))
    }

    pub fn capital_gamma(&self, t: f64) -> Result<f64, FunnelError> {
        Ok(self.capital_gamma_with_deriv(t)?.0)
    }

    pub fn capital_gamma_deriv(&self, t: f64) -> Result<f64, FunnelError> {
        Ok(self.capital_gamma_with_deriv(t)?.1)
    }
}

/// Knobs of the tuning rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningOptions {
    /// Width of `Γ` once the margins settle (`γ∞ = m∞ + ln(p)/η + band`).
    pub band: f64,
    /// Fraction of `Γ(0)` the initial error occupies, in (0, 1].
    pub theta: f64,
    /// Lower bound on the decay rate.
    pub min_decay: f64,
    /// Horizon over which positivity and feasibility are grid-checked.
    pub horizon: f64,
    pub eta: f64,
}

pub const CHECK_GRID: usize = 10_000;

/// Choose `γ` so the initial estimate sits inside the funnel and
/// `ρ_max − γ(t*) ≥ r_target` at the satisfaction instant.
pub fn tune_gamma(
    temporal: &Temporal,
    rho_max: f64,
    rho_hat_0: f64,
    r_target: f64,
    margin: &Margin,
    opts: &TuningOptions,
) -> Result<FunnelSpec, FunnelError> {
    if !(r_target > 0.0) || !(opts.band > 0.0) || !(opts.theta > 0.0 && opts.theta <= 1.0) || !(opts.min_decay >= 0.0) {
        return Err(FunnelError::InvalidPpf(format!(
            "need r_target > 0, band > 0, theta in (0,1], min_decay >= 0; got {r_target}, {}, {}, {}",
            opts.band, opts.theta, opts.min_decay
        )));
    }
    let horizon = opts.horizon.max(temporal.horizon());
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for k in 0..=CHECK_GRID {
        let t = horizon * k as f64 / CHECK_GRID as f64;
        let m = margin.eval(t)?;
        if m > worst.0 {
            worst = (m, t);
        }
    }
    if rho_max - worst.0 <= 0.0 {
        return Err(FunnelError::Feasibility { rho_max, margin: worst.0, t: worst.1 });
    }
    let p = margin.atoms.len().max(1);
    let gap = (p as f64).ln() / opts.eta;
    let limit = rho_max - r_target;
    let gamma_inf = margin.limit()? + gap + opts.band;
    if gamma_inf >= limit {
        return Err(FunnelError::TargetUnreachable { gamma_inf, limit });
    }
    if !(rho_hat_0 < rho_max) {
        return Err(FunnelError::Initialization {
            rho_hat_0,
            reason: format!("not below rho_max {rho_max}"),
        });
    }
    let gamma_0 = (margin.eval(0.0)? + gap + (rho_max - rho_hat_0) / opts.theta).max(gamma_inf);
    let t_star = temporal.satisfaction_instant();
    let mut decay = opts.min_decay;
    if gamma_0 > limit {
        if t_star <= 0.0 {
            return Err(FunnelError::Initialization {
                rho_hat_0,
                reason: format!("satisfaction is required at t=0 but gamma(0)={gamma_0} exceeds {limit}"),
            });
        }
        decay = decay.max(((gamma_0 - gamma_inf) / (limit - gamma_inf)).ln() / t_star);
    }
    let spec = FunnelSpec { gamma: Ppf::new(gamma_0, gamma_inf, decay)?, rho_max, margin: margin.clone(), eta: opts.eta };
    check_spec(&spec, rho_hat_0, horizon)?;
    Ok(spec)
}

/// Positivity of `Γ` on the grid and containment of the initial estimate.
pub fn check_spec(spec: &FunnelSpec, rho_hat_0: f64, horizon: f64) -> Result<(), FunnelError> {
    for k in 0..=CHECK_GRID {
        let t = horizon * k as f64 / CHECK_GRID as f64;
        let value = spec.capital_gamma(t)?;
        if !(value > 0.0) {
            return Err(FunnelError::NonPositiveGamma { t, value });
        }
    }
    let g0 = spec.capital_gamma(0.0)?;
    let e0 = rho_hat_0 - spec.rho_max;
    if !(-g0 < e0 && e0 < 0.0) {
        return Err(FunnelError::Initialization {
            rho_hat_0,
            reason: format!("need -{g0} < {e0} < 0"),
        });
    }
    Ok(())
}

/// Supremum of the smoothed body robustness. When every atom is a ball and
/// all centers can be reached at once, that point maximizes each atom and
/// the supremum is the smooth min of the squared radii. Anything else is
/// estimated by block coordinate ascent from 100 seeded restarts.
pub fn rho_opt(body: &Body, eta: f64, dims: &BTreeMap<AgentId, usize>) -> Result<f64, FunnelError> {
    let atoms: Vec<_> = body.atoms().collect();
    if atoms.is_empty() {
        return Ok(f64::INFINITY);
    }
    if atoms.iter().all(|(p, neg)| !neg && !p.is_linear()) {
        if let Some(radii) = common_center(&atoms, dims) {
            return Ok(smooth_min(&radii, eta)?.0);
        }
    }
    let agents: Vec<AgentId> = body.agents().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..100 {
        let mut xs: StateMap = agents
            .iter()
            .map(|a| {
                let n = dims.get(a).copied().unwrap_or(2);
                (*a, DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0)))
            })
            .collect();
        let mut value = body.eval_smooth(&xs, eta)?;
        'sweeps: for _ in 0..200 {
            let before = value;
            for a in &agents {
                let g = body.grad_smooth(&xs, *a, eta)?;
                let gn = g.norm();
                if gn < 1e-12 {
                    continue;
                }
                let mut step = 1.0;
                while step > 1e-12 {
                    let mut trial = xs.clone();
                    *trial.get_mut(a).expect("agent present") += &g * step;
                    let v = body.eval_smooth(&trial, eta)?;
                    if v > value {
                        xs = trial;
                        value = v;
                        // keep doubling while it pays off, so unbounded
                        // directions are detected quickly
                        loop {
                            step *= 2.0;
                            let mut longer = xs.clone();
                            *longer.get_mut(a).expect("agent present") += &g * step;
                            let v = body.eval_smooth(&longer, eta)?;
                            if v > value && value <= 1e12 {
                                xs = longer;
                                value = v;
                            } else {
                                break;
                            }
                        }
                        break;
                    }
                    step *= 0.5;
                }
                if value > 1e12 {
                    return Ok(f64::INFINITY);
                }
            }
            if value - before < 1e-12 {
                break 'sweeps;
            }
        }
        best = best.max(value);
    }
    Ok(best)
}

/// Squared radii of an all-ball body whose centers `Σ c_j x_j = d` are
/// simultaneously attainable, or `None`.
fn common_center(atoms: &[(&Predicate, bool)], dims: &BTreeMap<AgentId, usize>) -> Option<Vec<f64>> {
    let agents: Vec<AgentId> = atoms.iter().flat_map(|(p, _)| p.agents()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut col = BTreeMap::new();
    let mut cols = 0;
    for a in &agents {
        col.insert(*a, cols);
        cols += dims.get(a).copied()?;
    }
    let mut blocks = Vec::new();
    let mut radii = Vec::new();
    for (p, _) in atoms {
        let Predicate::Norm2Le { terms, offset, radius_sq } = p else { return None };
        blocks.push((terms, offset));
        radii.push(*radius_sq);
    }
    let rows: usize = blocks.iter().map(|(_, d)| d.len()).sum();
    let mut m = DMatrix::zeros(rows, cols);
    let mut rhs = DVector::zeros(rows);
    let mut r0 = 0;
    for (terms, d) in blocks {
        for (a, c) in terms.iter() {
            if c.nrows() != d.len() || c.ncols() != dims[a] {
                return None;
            }
            m.view_mut((r0, col[a]), (c.nrows(), c.ncols())).copy_from(c);
        }
        rhs.rows_mut(r0, d.len()).copy_from(d);
        r0 += d.len();
    }
    let x = m.clone().svd(true, true).solve(&rhs, 1e-12).ok()?;
    let residual = (&m * x - &rhs).norm();
    (residual <= 1e-9 * (1.0 + rhs.norm())).then_some(radii)
}
