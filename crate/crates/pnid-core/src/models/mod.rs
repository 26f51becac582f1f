//! Benchmark dynamical systems: vector fields, parameter vectors and priors.
//!
//! Every model is a first-order continuous-time state-space system
//! `dx/dt = f(x, u, theta, t)` with a scalar input `u`. Models are selected
//! by name; new ones are added in code behind [`Model`], not through config.

mod prior;

pub use prior::{ParamSpace, PriorMarginal, PriorSpec};

use nalgebra::DVector;
use thiserror::Error;

/// Errors raised by model evaluation and parameter handling.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model name `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` expects {expected} parameters, got {got}")]
    ParamCount {
        model: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model `{model}` expects state dimension {expected}, got {got}")]
    StateDim {
        model: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite {what} passed to `{model}`")]
    NonFiniteInput { model: &'static str, what: &'static str },
    #[error("`{model}` produced a non-finite derivative")]
    NonFiniteOutput { model: &'static str },
    #[error("prior marginal `{name}` has non-positive variance {variance}")]
    BadVariance { name: String, variance: f64 },
    #[error("log-space prior on `{name}`, which is not a positive-only parameter of `{model}`")]
    LogSpaceNotAllowed { name: String, model: &'static str },
    #[error("prior has {got} marginals but model `{model}` has {expected} parameters")]
    PriorArity {
        model: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter `{name}` must be positive for a log-space transform, got {value}")]
    NonPositiveLogParam { name: String, value: f64 },
}

/// Ordered parameter values in natural (physical) space.
///
/// Entry order matches [`Model::param_names`] of the owning model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(pub DVector<f64>);

impl ParameterVector {
    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_row_slice(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Which entry of the augmented state is measured: `block` 0 is the solution
/// stack, block 1 its first derivative; `component` indexes within the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsIndex {
    pub block: usize,
    pub component: usize,
}

/// The benchmark systems this crate identifies.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Hysteretic single-degree-of-freedom oscillator. `nu` shapes the
    /// smoothness of the hysteresis loop and is held fixed (not identified).
    BoucWen { nu: f64 },
    /// Mass-spring-damper with a cubic spring term.
    Duffing,
    /// Prismatic drive with inertia, viscous and Coulomb friction plus a
    /// constant force offset.
    Emps,
    /// Plain linear oscillator; closed-form solutions make it the test
    /// reference model.
    LinearOscillator,
}

impl Model {
    /// Look up a model by its config name. Bouc-Wen gets the default
    /// exponent `nu = 1`; use [`Model::BoucWen`] directly to override it.
    pub fn from_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "bouc_wen" => Ok(Model::BoucWen { nu: 1.0 }),
            "duffing" => Ok(Model::Duffing),
            "emps" => Ok(Model::Emps),
            "linear_oscillator" => Ok(Model::LinearOscillator),
            other => Err(ModelError::UnknownModel(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::BoucWen { .. } => "bouc_wen",
            Model::Duffing => "duffing",
            Model::Emps => "emps",
            Model::LinearOscillator => "linear_oscillator",
        }
    }

    /// State dimension d.
    pub fn dim(&self) -> usize {
        match self {
            Model::BoucWen { .. } => 3,
            Model::Duffing | Model::Emps | Model::LinearOscillator => 2,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Model::BoucWen { .. } => &["m", "c", "k", "alpha", "beta", "gamma", "delta"],
            Model::Duffing => &["m", "c", "k", "k3"],
            Model::Emps => &["m", "f_v", "f_c", "offset"],
            Model::LinearOscillator => &["m", "c", "k"],
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_names().len()
    }

    /// Which parameters are positive in the physical model, and may
    /// therefore carry a log-space prior. The EMPS force offset is the one
    /// signed parameter across the benchmark set.
    pub fn positive_params(&self) -> &'static [bool] {
        match self {
            Model::BoucWen { .. } => &[true, true, true, true, true, true, true],
            Model::Duffing => &[true, true, true, true],
            Model::Emps => &[true, true, true, false],
            Model::LinearOscillator => &[true, true, true],
        }
    }

    /// Evaluate the vector field. Inputs and outputs are checked for
    /// finiteness; a violation is reported instead of propagating NaNs into
    /// the filter.
    pub fn rhs(
        &self,
        x: &DVector<f64>,
        u: f64,
        theta: &ParameterVector,
        _t: f64,
    ) -> Result<DVector<f64>, ModelError> {
        let name = self.name();
        if x.len() != self.dim() {
            return Err(ModelError::StateDim {
                model: name,
                expected: self.dim(),
                got: x.len(),
            });
        }
        if theta.len() != self.param_count() {
            return Err(ModelError::ParamCount {
                model: name,
                expected: self.param_count(),
                got: theta.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFiniteInput { model: name, what: "state" });
        }
        if !u.is_finite() {
            return Err(ModelError::NonFiniteInput { model: name, what: "input" });
        }
        if !theta.as_slice().iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFiniteInput { model: name, what: "parameters" });
        }

        let dx = match self {
            Model::BoucWen { nu } => bouc_wen_rhs(x, u, theta, *nu),
            Model::Duffing => duffing_rhs(x, u, theta),
            Model::Emps => emps_rhs(x, u, theta),
            Model::LinearOscillator => linear_oscillator_rhs(x, u, theta),
        };
        if dx.iter().all(|v| v.is_finite()) {
            Ok(dx)
        } else {
            Err(ModelError::NonFiniteOutput { model: name })
        }
    }
}

/// Bouc-Wen hysteresis: state (displacement, velocity, hysteretic force z).
///
/// The restoring term is `k * x` with x the displacement; the hysteretic
/// force z enters the momentum balance directly.
fn bouc_wen_rhs(x: &DVector<f64>, u: f64, theta: &ParameterVector, nu: f64) -> DVector<f64> {
    let (pos, vel, z) = (x[0], x[1], x[2]);
    let (m, c, k) = (theta[0], theta[1], theta[2]);
    let (alpha, beta, gamma, delta) = (theta[3], theta[4], theta[5], theta[6]);

    let accel = (u - c * vel - k * pos - z) / m;
    let z_abs = z.abs();
    let dz = alpha * vel - beta * (gamma * vel.abs() * z_abs.powf(nu - 1.0) * z + delta * vel * z_abs.powf(nu));
    DVector::from_column_slice(&[vel, accel, dz])
}

/// Duffing oscillator: `m x'' + c x' + k x + k3 x^3 = u`.
fn duffing_rhs(x: &DVector<f64>, u: f64, theta: &ParameterVector) -> DVector<f64> {
    let (pos, vel) = (x[0], x[1]);
    let (m, c, k, k3) = (theta[0], theta[1], theta[2], theta[3]);
    let accel = (u - c * vel - k * pos - k3 * pos.powi(3)) / m;
    DVector::from_column_slice(&[vel, accel])
}

/// EMPS drive: `u = M x'' + F_v x' + F_c sign(x') + offset`, with sign(0) = 0
/// so the rest state under an exactly cancelling input stays an equilibrium.
fn emps_rhs(x: &DVector<f64>, u: f64, theta: &ParameterVector) -> DVector<f64> {
    let (_pos, vel) = (x[0], x[1]);
    let (m, f_v, f_c, offset) = (theta[0], theta[1], theta[2], theta[3]);
    let sgn = if vel == 0.0 { 0.0 } else { vel.signum() };
    let accel = (u - f_v * vel - f_c * sgn - offset) / m;
    DVector::from_column_slice(&[vel, accel])
}

/// Linear oscillator: `m x'' + c x' + k x = u`.
fn linear_oscillator_rhs(x: &DVector<f64>, u: f64, theta: &ParameterVector) -> DVector<f64> {
    let (pos, vel) = (x[0], x[1]);
    let (m, c, k) = (theta[0], theta[1], theta[2]);
    DVector::from_column_slice(&[vel, (u - c * vel - k * pos) / m])
}
