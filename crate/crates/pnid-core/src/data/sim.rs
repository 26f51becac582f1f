//! Classical RK4 ground-truth simulation with zero-order-hold input.

use nalgebra::DVector;

use super::{DataError, ObservedQuantity};
use crate::models::{Model, ParameterVector};
use crate::odefilter::RhsResult;

/// Simulated states at the input sample times, plus the vector-field value
/// at each sample so derivative channels (acceleration) can be read off
/// without re-deriving them.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub t: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub derivs: Vec<DVector<f64>>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Integrate `rhs` across the sampled input with `substeps` RK4 steps per
/// sample interval. The input is held constant over each interval, so RK4
/// stage evaluations never straddle an input discontinuity.
pub fn rk4_simulate<F>(
    rhs: F,
    u: &[f64],
    rate_hz: f64,
    x1: &DVector<f64>,
    substeps: usize,
) -> Result<StateTrajectory, DataError>
where
    F: Fn(&DVector<f64>, f64, f64) -> RhsResult,
{
    assert!(substeps >= 1, "substeps must be at least 1");
    assert!(rate_hz > 0.0, "rate must be positive");
    let n = u.len();
    let dt = 1.0 / rate_hz;
    let h = dt / substeps as f64;

    let mut t = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut derivs = Vec::with_capacity(n);
    let mut x = x1.clone();

    for k in 0..n {
        let tk = k as f64 * dt;
        let fk = rhs(&x, u[k], tk)?;
        if !x.iter().all(|v| v.is_finite()) || !fk.iter().all(|v| v.is_finite()) {
            return Err(DataError::Divergence { step: k });
        }
        t.push(tk);
        states.push(x.clone());
        derivs.push(fk);

        if k + 1 < n {
            for j in 0..substeps {
                let tj = tk + j as f64 * h;
                x = rk4_step(&rhs, &x, u[k], tj, h)?;
            }
        }
    }
    Ok(StateTrajectory { t, states, derivs })
}

/// [`rk4_simulate`] with a model's bound parameter vector.
pub fn rk4_simulate_model(
    model: &Model,
    theta: &ParameterVector,
    u: &[f64],
    rate_hz: f64,
    x1: &DVector<f64>,
    substeps: usize,
) -> Result<StateTrajectory, DataError> {
    rk4_simulate(|x, ui, t| model.rhs(x, ui, theta, t), u, rate_hz, x1, substeps)
}

fn rk4_step<F>(rhs: &F, x: &DVector<f64>, u: f64, t: f64, h: f64) -> Result<DVector<f64>, DataError>
where
    F: Fn(&DVector<f64>, f64, f64) -> RhsResult,
{
    let k1 = rhs(x, u, t)?;
    let k2 = rhs(&(x + &k1 * (h / 2.0)), u, t + h / 2.0)?;
    let k3 = rhs(&(x + &k2 * (h / 2.0)), u, t + h / 2.0)?;
    let k4 = rhs(&(x + &k3 * h), u, t + h)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Relative terminal-state gap between `substeps` and `2 * substeps`
/// integration; the step resolution is adequate when this is small.
pub fn rk4_convergence_gap<F>(
    rhs: F,
    u: &[f64],
    rate_hz: f64,
    x1: &DVector<f64>,
    substeps: usize,
) -> Result<f64, DataError>
where
    F: Fn(&DVector<f64>, f64, f64) -> RhsResult,
{
    let coarse = rk4_simulate(&rhs, u, rate_hz, x1, substeps)?;
    let fine = rk4_simulate(&rhs, u, rate_hz, x1, substeps * 2)?;
    match (coarse.states.last(), fine.states.last()) {
        (Some(a), Some(b)) => Ok((a - b).norm() / b.norm().max(1.0)),
        _ => Ok(0.0),
    }
}

/// Read the observed channel out of a trajectory: displacement-like
/// channels are state entry 0, acceleration is entry 1 of the derivative.
pub fn extract_channel(traj: &StateTrajectory, observed: ObservedQuantity) -> Vec<f64> {
    match observed {
        ObservedQuantity::Displacement | ObservedQuantity::Voltage => {
            traj.states.iter().map(|x| x[0]).collect()
        }
        ObservedQuantity::Acceleration => traj.derivs.iter().map(|f| f[1]).collect(),
    }
}
