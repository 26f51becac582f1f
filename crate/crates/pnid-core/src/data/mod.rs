//! Data production and ingestion: excitation synthesis, ground-truth
//! simulation, downsampling, noise injection, dataset files and RMSE
//! scoring.

mod io;
mod rmse;
mod signal;
mod sim;

pub use io::{load_dataset, load_dataset_with, save_dataset, sidecar_path, ColumnMap, SchemaTag};
pub use rmse::{rmse_per_particle, RmsePolicy, RmseReport};
pub use signal::{add_noise, gen_multisine, gen_sine_sweep, rms, MultisineSpec};
pub use sim::{extract_channel, rk4_convergence_gap, rk4_simulate, rk4_simulate_model, StateTrajectory};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::models::{Model, ModelError, ObsIndex};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("CSV parse failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("metadata sidecar failure: {0}")]
    Json(#[from] serde_json::Error),
    #[error("column `{0}` missing from dataset header")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("non-uniform sampling at row {index} (dt deviates by more than 1e-9 relative)")]
    NonUniformSampling { index: usize },
    #[error("sidecar rate {meta} Hz disagrees with timestamp spacing ({inferred} Hz)")]
    RateMismatch { meta: f64, inferred: f64 },
    #[error("invalid signal spec: {0}")]
    BadSignalSpec(String),
    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },
    #[error("downsample factor must be positive")]
    BadFactor,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dataset has no rate source: no `t` column, no sidecar and no configured rate")]
    NoRate,
}

/// What the `y` column physically is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedQuantity {
    Acceleration,
    Displacement,
    Voltage,
}

impl ObservedQuantity {
    pub fn default_unit(&self) -> &'static str {
        match self {
            ObservedQuantity::Acceleration => "m/s^2",
            ObservedQuantity::Displacement => "m",
            ObservedQuantity::Voltage => "V",
        }
    }
}

/// Sidecar metadata stored next to each dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub rate_hz: f64,
    pub observed: ObservedQuantity,
    pub units: String,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_true: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

/// Uniformly sampled input/output record.
#[derive(Debug, Clone)]
pub struct TimeSeriesDataset {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub meta: DatasetMeta,
}

impl TimeSeriesDataset {
    /// Build and validate: equal column lengths, uniform spacing to 1e-9
    /// relative, spacing consistent with the declared rate.
    pub fn new(t: Vec<f64>, u: Vec<f64>, y: Vec<f64>, meta: DatasetMeta) -> Result<Self, DataError> {
        assert!(t.len() == u.len() && t.len() == y.len(), "ragged dataset columns");
        let ds = Self { t, u, y, meta };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        self.meta.rate_hz
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.meta.rate_hz
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.t.len() < 2 {
            return Ok(());
        }
        let dt = self.t[1] - self.t[0];
        for i in 2..self.t.len() {
            let step = self.t[i] - self.t[i - 1];
            if (step - dt).abs() > 1e-9 * dt.abs().max(1e-300) {
                return Err(DataError::NonUniformSampling { index: i });
            }
        }
        let inferred = 1.0 / dt;
        if (inferred - self.meta.rate_hz).abs() > 1e-6 * self.meta.rate_hz {
            return Err(DataError::RateMismatch { meta: self.meta.rate_hz, inferred });
        }
        Ok(())
    }

    /// Keep every `factor`-th sample, starting at the first.
    pub fn downsample(&self, factor: usize) -> Result<Self, DataError> {
        if factor == 0 {
            return Err(DataError::BadFactor);
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let pick = |v: &[f64]| v.iter().step_by(factor).copied().collect::<Vec<_>>();
        let mut meta = self.meta.clone();
        meta.rate_hz = self.meta.rate_hz / factor as f64;
        Self::new(pick(&self.t), pick(&self.u), pick(&self.y), meta)
    }
}

/// Where the observed quantity lives in the augmented filter state:
/// displacement-like channels are the first entry of the solution block,
/// acceleration is the velocity entry of the first derivative block.
pub fn obs_index_for(model: &Model, observed: ObservedQuantity) -> ObsIndex {
    let _ = model; // all built-in models share the (position, velocity, ...) convention
    match observed {
        ObservedQuantity::Displacement | ObservedQuantity::Voltage => {
            ObsIndex { block: 0, component: 0 }
        }
        ObservedQuantity::Acceleration => ObsIndex { block: 1, component: 1 },
    }
}
