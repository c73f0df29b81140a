//! Agent dynamics `ẋ = f(x) + g(x)u + w` and bounded disturbances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("input matrix form is not valid: {0}")]
    InputMatrix(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarFn {
    Atan,
    Tanh,
    Sin,
}

impl ScalarFn {
    fn apply(self, v: f64) -> f64 {
        match self {
            ScalarFn::Atan => v.atan(),
            ScalarFn::Tanh => v.tanh(),
            ScalarFn::Sin => v.sin(),
        }
    }
}

/// `gain · func(weightsᵀx)` added to output component `output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTerm {
    pub output: usize,
    pub func: ScalarFn,
    pub gain: f64,
    pub weights: Vec<f64>,
}

/// `A x + b + Σ smooth terms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub bias: Option<Vec<f64>>,
    #[serde(default)]
    pub terms: Vec<SmoothTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum InputMatrix {
    Identity,
    Constant { matrix: Vec<Vec<f64>> },
    /// Planar rotation by `scale · x[coordinate]`.
    Rotation { coordinate: usize, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentDynamics {
    dim: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    terms: Vec<SmoothTerm>,
    input: InputMatrix,
    input_const: Option<DMatrix<f64>>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, DynamicsError> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(DynamicsError::Dimension(format!("{what} must be a nonempty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl AgentDynamics {
    pub fn new(drift: &Drift, input: InputMatrix) -> Result<Self, DynamicsError> {
        let a = matrix(&drift.matrix, "drift matrix")?;
        let dim = a.nrows();
        if a.ncols() != dim {
            return Err(DynamicsError::Dimension("drift matrix must be square".into()));
        }
        let b = match &drift.bias {
            Some(v) if v.len() == dim => DVector::from_column_slice(v),
            Some(v) => return Err(DynamicsError::Dimension(format!("bias has length {}, expected {dim}", v.len()))),
            None => DVector::zeros(dim),
        };
        for t in &drift.terms {
            if t.output >= dim || t.weights.len() != dim {
                return Err(DynamicsError::Dimension(format!(
                    "smooth term must target a component below {dim} and carry {dim} weights"
                )));
            }
        }
        let input_const = match &input {
            InputMatrix::Identity => None,
            InputMatrix::Constant { matrix: m } => {
                let g = matrix(m, "input matrix")?;
                if g.nrows() != dim {
                    return Err(DynamicsError::Dimension(format!("input matrix needs {dim} rows")));
                }
                if (&g * g.transpose()).cholesky().is_none() {
                    return Err(DynamicsError::InputMatrix("g gᵀ is not positive definite".into()));
                }
                Some(g)
            }
            InputMatrix::Rotation { coordinate, .. } => {
                if dim != 2 || *coordinate >= 2 {
                    return Err(DynamicsError::InputMatrix("rotation form needs a planar state".into()));
                }
                None
            }
        };
        Ok(AgentDynamics { dim, a, b, terms: drift.terms.clone(), input, input_const })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Input dimension (columns of `g`).
    pub fn input_dim(&self) -> usize {
        self.input_const.as_ref().map_or(self.dim, |g| g.ncols())
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut f = &self.a * x + &self.b;
        for t in &self.terms {
            let arg: f64 = t.weights.iter().zip(x.iter()).map(|(w, v)| w * v).sum();
            f[t.output] += t.gain * t.func.apply(arg);
        }
        f
    }

    pub fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.input {
            InputMatrix::Identity => DMatrix::identity(self.dim, self.dim),
            InputMatrix::Constant { .. } => self.input_const.clone().expect("validated"),
            InputMatrix::Rotation { coordinate, scale } => {
                let (s, c) = (scale * x[*coordinate]).sin_cos();
                DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
            }
        }
    }
}

/// Piecewise-constant uniform noise in `[−bound, bound]` per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub bound: f64,
    #[serde(default = "one")]
    pub hold: usize,
}

fn one() -> usize {
    1
}

pub fn sample_disturbance(spec: &DisturbanceSpec, dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    if spec.bound <= 0.0 {
        return DVector::zeros(dim);
    }
    DVector::from_fn(dim, |_, _| rng.gen_range(-spec.bound..=spec.bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    pub(crate) fn coupled() -> Drift {
        Drift {
            matrix: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            bias: None,
            terms: vec![
                SmoothTerm { output: 0, func: ScalarFn::Atan, gain: 0.6, weights: vec![1.0, 0.0] },
                SmoothTerm { output: 0, func: ScalarFn::Tanh, gain: 0.3, weights: vec![0.0, 0.8] },
                SmoothTerm { output: 1, func: ScalarFn::Sin, gain: 0.5, weights: vec![0.7, 0.2] },
                SmoothTerm { output: 1, func: ScalarFn::Atan, gain: 0.4, weights: vec![0.0, 0.5] },
            ],
        }
    }

    #[test]
    fn coupled_drift_values() {
        let d = AgentDynamics::new(&coupled(), InputMatrix::Rotation { coordinate: 1, scale: 0.5 }).unwrap();
        assert_eq!(d.drift(&DVector::zeros(2)), DVector::zeros(2));
        let x = DVector::from_vec(vec![0.3, -1.2]);
        let f = d.drift(&x);
        let f0 = 0.3 + 2.0 * -1.2 + 0.6 * 0.3f64.atan() + 0.3 * (0.8 * -1.2f64).tanh();
        let f1 = 3.0 * 0.3 + 4.0 * -1.2 + 0.5 * (0.7 * 0.3 + 0.2 * -1.2f64).sin() + 0.4 * (0.5 * -1.2f64).atan();
        assert!((f[0] - f0).abs() < 1e-14 && (f[1] - f1).abs() < 1e-14);
        let g = d.input_matrix(&x);
        assert!((&g * g.transpose() - DMatrix::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn input_forms() {
        let lin = Drift { matrix: vec![vec![0.0]], bias: None, terms: vec![] };
        let d = AgentDynamics::new(&lin, InputMatrix::Identity).unwrap();
        assert_eq!(d.input_matrix(&DVector::from_vec(vec![5.0])), DMatrix::identity(1, 1));
        let bad = InputMatrix::Constant { matrix: vec![vec![0.0]] };
        assert!(matches!(AgentDynamics::new(&lin, bad), Err(DynamicsError::InputMatrix(_))));
        assert!(AgentDynamics::new(&lin, InputMatrix::Rotation { coordinate: 0, scale: 1.0 }).is_err());
    }

    #[test]
    fn disturbance_bounds_and_determinism() {
        let spec = DisturbanceSpec { bound: 6.0, hold: 1 };
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..50_000 {
            let a = sample_disturbance(&spec, 2, &mut r1);
            assert_eq!(a, sample_disturbance(&spec, 2, &mut r2));
            lo = lo.min(a.min());
            hi = hi.max(a.max());
        }
        assert!(lo >= -6.0 && hi <= 6.0 && lo < -5.9 && hi > 5.9);
        let zero = DisturbanceSpec { bound: 0.0, hold: 1 };
        assert_eq!(sample_disturbance(&zero, 2, &mut r1), DVector::zeros(2));
    }
}
