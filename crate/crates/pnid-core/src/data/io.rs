//! Dataset files: CSV columns plus a JSON metadata sidecar.
//!
//! The native format is a UTF-8, LF-terminated CSV with header `t,u,y` and
//! floats printed with 17 significant digits, which round-trips f64 exactly.
//! The sidecar shares the file stem with extension `.meta.json`. Benchmark
//! re-exports (Silverbox, EMPS) are ingested through column maps.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, DatasetMeta, ObservedQuantity, TimeSeriesDataset};

/// How to read a CSV into `(t, u, y)` columns.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    /// Time column; when absent, timestamps are synthesized from the rate.
    pub t: Option<String>,
    pub u: String,
    pub y: String,
    /// Rate fallback when there is no time column and no sidecar.
    pub rate_hz: Option<f64>,
    pub observed: ObservedQuantity,
    pub units: String,
}

/// Known dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaTag {
    /// Native `t,u,y` export.
    Standard,
    /// Silverbox re-export: V1 is the input voltage, V2 the output voltage,
    /// recorded at 610.35 Hz.
    Silverbox,
    /// EMPS re-export: motor force input, position output, at 1000 Hz.
    Emps,
}

impl SchemaTag {
    pub fn column_map(&self) -> ColumnMap {
        match self {
            SchemaTag::Standard => ColumnMap {
                t: Some("t".into()),
                u: "u".into(),
                y: "y".into(),
                rate_hz: None,
                observed: ObservedQuantity::Displacement,
                units: "m".into(),
            },
            SchemaTag::Silverbox => ColumnMap {
                t: None,
                u: "V1".into(),
                y: "V2".into(),
                rate_hz: Some(610.35),
                observed: ObservedQuantity::Voltage,
                units: "V".into(),
            },
            SchemaTag::Emps => ColumnMap {
                t: None,
                u: "force".into(),
                y: "position".into(),
                rate_hz: Some(1000.0),
                observed: ObservedQuantity::Displacement,
                units: "m".into(),
            },
        }
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Write the CSV and its sidecar. Floats carry 17 significant digits.
pub fn save_dataset(ds: &TimeSeriesDataset, path: &Path) -> Result<(), DataError> {
    let mut out = String::with_capacity(ds.len() * 64 + 8);
    out.push_str("t,u,y\n");
    for i in 0..ds.len() {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", ds.t[i], ds.u[i], ds.y[i]));
    }
    fs::write(path, out)?;
    let meta = serde_json::to_string_pretty(&ds.meta)?;
    fs::write(sidecar_path(path), meta + "\n")?;
    Ok(())
}

/// Load a dataset using a schema tag's column map. The sidecar, when
/// present, supplies the metadata; otherwise it is reconstructed from the
/// column map and timestamps.
pub fn load_dataset(path: &Path, schema: SchemaTag) -> Result<TimeSeriesDataset, DataError> {
    load_dataset_with(path, &schema.column_map())
}

pub fn load_dataset_with(path: &Path, map: &ColumnMap) -> Result<TimeSeriesDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let t_idx = match &map.t {
        Some(name) => Some(find(name)?),
        None => None,
    };
    let u_idx = find(&map.u)?;
    let y_idx = find(&map.y)?;

    let mut t = Vec::new();
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |idx: usize| -> Result<f64, DataError> {
            record
                .get(idx)
                .ok_or_else(|| DataError::BadRow { row, message: "short row".into() })?
                .trim()
                .parse::<f64>()
                .map_err(|e| DataError::BadRow { row, message: e.to_string() })
        };
        if let Some(ti) = t_idx {
            t.push(parse(ti)?);
        }
        u.push(parse(u_idx)?);
        y.push(parse(y_idx)?);
    }

    let sidecar = sidecar_path(path);
    let meta = if sidecar.exists() {
        serde_json::from_str::<DatasetMeta>(&fs::read_to_string(&sidecar)?)?
    } else {
        let rate = match (t_idx.is_some() && t.len() >= 2, map.rate_hz) {
            (true, _) => 1.0 / (t[1] - t[0]),
            (false, Some(r)) => r,
            (false, None) => return Err(DataError::NoRate),
        };
        DatasetMeta {
            rate_hz: rate,
            observed: map.observed,
            units: map.units.clone(),
            provenance: format!("ingested:{}", path.display()),
            noise_std: None,
            theta_true: None,
            x0: None,
        }
    };

    if t_idx.is_none() {
        let dt = 1.0 / meta.rate_hz;
        t = (0..u.len()).map(|k| k as f64 * dt).collect();
    }
    TimeSeriesDataset::new(t, u, y, meta)
}
