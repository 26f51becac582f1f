//! Independent per-parameter Gaussian priors, optionally in log space.
//!
//! A marginal in log space means `ln(theta) ~ N(mean, variance)`: samples are
//! the exponential of a Gaussian draw and the natural-space density carries
//! the change-of-variables term. The sampler side of the crate works in
//! "sampling space" (logs for flagged entries), where every marginal is a
//! plain Gaussian.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Model, ModelError, ParameterVector};

/// Space a prior marginal (and the matching particle coordinate) lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSpace {
    Natural,
    Log,
}

/// One parameter's prior: a Gaussian over the chosen space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorMarginal {
    pub mean: f64,
    pub variance: f64,
    pub space: ParamSpace,
}

impl PriorMarginal {
    pub fn natural(mean: f64, variance: f64) -> Self {
        Self { mean, variance, space: ParamSpace::Natural }
    }

    pub fn log(mean: f64, variance: f64) -> Self {
        Self { mean, variance, space: ParamSpace::Log }
    }
}

/// Independent prior over a model's full parameter vector, ordered like
/// [`Model::param_names`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpec {
    pub marginals: Vec<PriorMarginal>,
}

impl PriorSpec {
    pub fn new(marginals: Vec<PriorMarginal>) -> Self {
        Self { marginals }
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    /// Check arity, variance positivity and that log-space marginals sit on
    /// positive-only parameters of `model`.
    pub fn validate(&self, model: &Model) -> Result<(), ModelError> {
        if self.marginals.len() != model.param_count() {
            return Err(ModelError::PriorArity {
                model: model.name(),
                expected: model.param_count(),
                got: self.marginals.len(),
            });
        }
        let positive = model.positive_params();
        for (i, m) in self.marginals.iter().enumerate() {
            let name = model.param_names()[i];
            if !(m.variance > 0.0) || !m.variance.is_finite() || !m.mean.is_finite() {
                return Err(ModelError::BadVariance {
                    name: name.to_string(),
                    variance: m.variance,
                });
            }
            if m.space == ParamSpace::Log && !positive[i] {
                return Err(ModelError::LogSpaceNotAllowed {
                    name: name.to_string(),
                    model: model.name(),
                });
            }
        }
        Ok(())
    }

    /// Draw one parameter vector in sampling space (logs stay logs).
    pub fn sample_sampling<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.marginals.len(),
            self.marginals.iter().map(|m| {
                let normal = Normal::new(m.mean, m.variance.sqrt()).expect("variance >= 0");
                normal.sample(rng)
            }),
        )
    }

    /// Draw `n` parameter vectors in natural space.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<ParameterVector> {
        (0..n)
            .map(|_| self.to_natural(&self.sample_sampling(rng)))
            .collect()
    }

    /// Natural-space log density at `theta`, with the change-of-variables
    /// term for log-space entries. Non-positive values in log-space
    /// dimensions have density zero.
    pub fn log_density_natural(&self, theta: &ParameterVector) -> f64 {
        assert_eq!(theta.len(), self.marginals.len(), "parameter arity mismatch");
        let mut total = 0.0;
        for (i, m) in self.marginals.iter().enumerate() {
            let v = theta[i];
            match m.space {
                ParamSpace::Natural => total += gaussian_log_pdf(v, m.mean, m.variance),
                ParamSpace::Log => {
                    if v <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    total += gaussian_log_pdf(v.ln(), m.mean, m.variance) - v.ln();
                }
            }
        }
        total
    }

    /// Sampling-space log density at `eta` (every marginal is Gaussian here).
    pub fn log_density_sampling(&self, eta: &DVector<f64>) -> f64 {
        assert_eq!(eta.len(), self.marginals.len(), "parameter arity mismatch");
        self.marginals
            .iter()
            .zip(eta.iter())
            .map(|(m, &v)| gaussian_log_pdf(v, m.mean, m.variance))
            .sum()
    }

    /// Map sampling-space coordinates to natural space.
    pub fn to_natural(&self, eta: &DVector<f64>) -> ParameterVector {
        assert_eq!(eta.len(), self.marginals.len(), "parameter arity mismatch");
        ParameterVector(DVector::from_iterator(
            eta.len(),
            self.marginals.iter().zip(eta.iter()).map(|(m, &v)| match m.space {
                ParamSpace::Natural => v,
                ParamSpace::Log => v.exp(),
            }),
        ))
    }

    /// Map natural-space parameters to sampling space. Errors on
    /// non-positive entries in log-space dimensions.
    pub fn to_sampling(&self, theta: &ParameterVector) -> Result<DVector<f64>, ModelError> {
        assert_eq!(theta.len(), self.marginals.len(), "parameter arity mismatch");
        let mut out = DVector::zeros(theta.len());
        for (i, m) in self.marginals.iter().enumerate() {
            out[i] = match m.space {
                ParamSpace::Natural => theta[i],
                ParamSpace::Log => {
                    if theta[i] <= 0.0 {
                        return Err(ModelError::NonPositiveLogParam {
                            name: format!("#{i}"),
                            value: theta[i],
                        });
                    }
                    theta[i].ln()
                }
            };
        }
        Ok(out)
    }

    pub fn spaces(&self) -> Vec<ParamSpace> {
        self.marginals.iter().map(|m| m.space).collect()
    }
}

fn gaussian_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + d * d / variance)
}
