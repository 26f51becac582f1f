//! Per-particle simulation error against a test record.

use rayon::prelude::*;

use nalgebra::DVector;

use super::{extract_channel, rk4_simulate_model, DataError, TimeSeriesDataset};
use crate::models::{Model, ParameterVector};

/// Deterministic-simulation settings for scoring.
#[derive(Debug, Clone, Copy)]
pub struct RmsePolicy {
    /// RK4 substeps per dataset sample interval.
    pub substeps: usize,
    /// Leading samples dropped before scoring (transient removal).
    pub transient_skip: usize,
}

impl Default for RmsePolicy {
    fn default() -> Self {
        Self { substeps: 1, transient_skip: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct RmseReport {
    /// One entry per particle; diverged simulations carry infinity.
    pub per_particle: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub n_particles: usize,
    /// Particles whose simulation diverged; excluded from the summary stats.
    pub n_diverged: usize,
    pub unit: String,
}

/// Simulate each particle through the test input and score the observed
/// channel against the measurements.
pub fn rmse_per_particle(
    model: &Model,
    particles: &[ParameterVector],
    dataset: &TimeSeriesDataset,
    policy: RmsePolicy,
) -> Result<RmseReport, DataError> {
    let x0 = match &dataset.meta.x0 {
        Some(x0) => DVector::from_column_slice(x0),
        None => DVector::zeros(model.dim()),
    };
    let skip = policy.transient_skip.min(dataset.len());

    let per_particle: Vec<f64> = particles
        .par_iter()
        .map(|theta| {
            match rk4_simulate_model(model, theta, &dataset.u, dataset.rate_hz(), &x0, policy.substeps)
            {
                Ok(traj) => {
                    let channel = extract_channel(&traj, dataset.meta.observed);
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for k in skip..dataset.len() {
                        let e = channel[k] - dataset.y[k];
                        sum += e * e;
                        count += 1;
                    }
                    if count == 0 {
                        return f64::INFINITY;
                    }
                    let rmse = (sum / count as f64).sqrt();
                    if rmse.is_finite() {
                        rmse
                    } else {
                        f64::INFINITY
                    }
                }
                Err(_) => f64::INFINITY,
            }
        })
        .collect();

    let finite: Vec<f64> = per_particle.iter().copied().filter(|v| v.is_finite()).collect();
    let n_diverged = per_particle.len() - finite.len();
    let (min, max, mean) = if finite.is_empty() {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    } else {
        let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        (min, max, mean)
    };

    Ok(RmseReport {
        per_particle,
        min,
        max,
        mean,
        n_particles: particles.len(),
        n_diverged,
        unit: dataset.meta.units.clone(),
    })
}
