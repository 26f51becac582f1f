//! Output artifacts: posterior tables, diagnostics traces, JSON summaries,
//! report rendering and the schema self-check run at the end of every
//! command.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use pnid_core::data::RmseReport;
use pnid_core::models::{Model, PriorSpec};
use pnid_core::smc::{ParticleSystem, RunDiagnostics};

use crate::CliError;

/// Shipped output schemas, embedded so the self-check cannot drift from the
/// writer code without failing.
const SCHEMA_DATASET: &str = include_str!("../schemas/dataset.schema.json");
const SCHEMA_META: &str = include_str!("../schemas/dataset_meta.schema.json");
const SCHEMA_POSTERIOR: &str = include_str!("../schemas/posterior.schema.json");
const SCHEMA_DIAGNOSTICS: &str = include_str!("../schemas/diagnostics.schema.json");
const SCHEMA_STATE_SAMPLES: &str = include_str!("../schemas/state_samples.schema.json");
const SCHEMA_SUMMARY: &str = include_str!("../schemas/posterior_summary.schema.json");
const SCHEMA_RMSE: &str = include_str!("../schemas/rmse_report.schema.json");

/// Minimal schema description: CSV headers (exact, prefix + suffix) or JSON
/// required keys (optionally exact).
#[derive(Debug, Deserialize)]
struct Schema {
    kind: String,
    #[serde(default)]
    header: Vec<String>,
    #[serde(default)]
    header_prefix: Vec<String>,
    #[serde(default)]
    header_suffix: Vec<String>,
    #[serde(default)]
    required: Vec<String>,
    #[serde(default)]
    exact_keys: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Dataset,
    DatasetMeta,
    Posterior,
    Diagnostics,
    StateSamples,
    PosteriorSummary,
    RmseReport,
}

impl ArtifactKind {
    fn schema_text(&self) -> &'static str {
        match self {
            ArtifactKind::Dataset => SCHEMA_DATASET,
            ArtifactKind::DatasetMeta => SCHEMA_META,
            ArtifactKind::Posterior => SCHEMA_POSTERIOR,
            ArtifactKind::Diagnostics => SCHEMA_DIAGNOSTICS,
            ArtifactKind::StateSamples => SCHEMA_STATE_SAMPLES,
            ArtifactKind::PosteriorSummary => SCHEMA_SUMMARY,
            ArtifactKind::RmseReport => SCHEMA_RMSE,
        }
    }
}

/// Validate one produced file against its shipped schema.
pub fn validate_artifact(path: &Path, kind: ArtifactKind) -> Result<(), CliError> {
    let schema: Schema = serde_json::from_str(kind.schema_text())
        .map_err(|e| CliError::Config(format!("bad embedded schema: {e}")))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("self-check cannot read {}: {e}", path.display())))?;
    match schema.kind.as_str() {
        "csv" => {
            let header = text.lines().next().unwrap_or("");
            let cols: Vec<&str> = if header.is_empty() { Vec::new() } else { header.split(',').collect() };
            if !schema.header.is_empty() && cols != schema.header.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(CliError::Data(format!(
                    "{}: header {:?} does not match schema {:?}",
                    path.display(),
                    cols,
                    schema.header
                )));
            }
            if !schema.header_prefix.is_empty() {
                let prefix: Vec<&str> = schema.header_prefix.iter().map(String::as_str).collect();
                if cols.len() < prefix.len() || cols[..prefix.len()] != prefix[..] {
                    return Err(CliError::Data(format!(
                        "{}: header {:?} lacks prefix {:?}",
                        path.display(),
                        cols,
                        prefix
                    )));
                }
            }
            if !schema.header_suffix.is_empty() {
                let suffix: Vec<&str> = schema.header_suffix.iter().map(String::as_str).collect();
                if cols.len() < suffix.len() || cols[cols.len() - suffix.len()..] != suffix[..] {
                    return Err(CliError::Data(format!(
                        "{}: header {:?} lacks suffix {:?}",
                        path.display(),
                        cols,
                        suffix
                    )));
                }
            }
            Ok(())
        }
        "json" => {
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: invalid JSON: {e}", path.display())))?;
            let obj = value
                .as_object()
                .ok_or_else(|| CliError::Data(format!("{}: expected a JSON object", path.display())))?;
            for key in &schema.required {
                if !obj.contains_key(key) {
                    return Err(CliError::Data(format!(
                        "{}: required key `{key}` missing",
                        path.display()
                    )));
                }
            }
            if schema.exact_keys {
                for key in obj.keys() {
                    if !schema.required.contains(key) {
                        return Err(CliError::Data(format!(
                            "{}: unexpected key `{key}`",
                            path.display()
                        )));
                    }
                }
            }
            Ok(())
        }
        other => Err(CliError::Config(format!("unknown schema kind `{other}`"))),
    }
}

/// Posterior particle table: one column per parameter (natural space) plus
/// the normalized weight.
pub fn write_posterior_csv(
    path: &Path,
    model: &Model,
    prior: &PriorSpec,
    system: &ParticleSystem,
) -> Result<(), CliError> {
    let weights = system.normalized_weights();
    let naturals = system.particles_natural(prior);
    let mut out = String::new();
    out.push_str(&model.param_names().join(","));
    out.push_str(",weight\n");
    for (theta, w) in naturals.iter().zip(&weights) {
        for v in theta.as_slice() {
            out.push_str(&format!("{v:.16e},"));
        }
        out.push_str(&format!("{w:.16e}\n"));
    }
    fs::write(path, out).map_err(|e| CliError::Data(e.to_string()))
}

pub fn write_diagnostics_csv(path: &Path, diag: &RunDiagnostics) -> Result<(), CliError> {
    let mut out = String::from("t_index,time,ess,threshold,rejuvenated,acceptance_rate\n");
    for step in &diag.steps {
        let rate = step
            .acceptance_rate
            .map(|r| format!("{r:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{},{}\n",
            step.t_index,
            step.time,
            step.ess,
            step.threshold,
            u8::from(step.rejuvenated),
            rate
        ));
    }
    fs::write(path, out).map_err(|e| CliError::Data(e.to_string()))
}

pub fn write_state_samples_csv(path: &Path, diag: &RunDiagnostics, d: usize) -> Result<(), CliError> {
    let mut out = String::from("slot,t_index,time,observed_mean");
    for i in 1..=d {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for row in &diag.state_traces {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e}",
            row.slot, row.t_index, row.time, row.observed_mean
        ));
        for v in &row.solution_mean {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Data(e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_std: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct PosteriorSummary {
    pub model: String,
    pub n_particles: usize,
    pub seed: u64,
    pub config_hash: String,
    pub rejuvenation_count: usize,
    pub final_ess: f64,
    pub posterior: BTreeMap<String, ParamSummary>,
}

/// Weighted posterior moments per parameter in natural space, normalized by
/// the generating value when one is known.
pub fn summarize_posterior(
    model: &Model,
    prior: &PriorSpec,
    system: &ParticleSystem,
    theta_true: Option<&BTreeMap<String, f64>>,
    seed: u64,
    config_hash: String,
    diag: &RunDiagnostics,
) -> PosteriorSummary {
    let weights = system.normalized_weights();
    let naturals = system.particles_natural(prior);
    let mut posterior = BTreeMap::new();
    for (i, &name) in model.param_names().iter().enumerate() {
        let mean: f64 = naturals.iter().zip(&weights).map(|(t, w)| t[i] * w).sum();
        let var: f64 = naturals
            .iter()
            .zip(&weights)
            .map(|(t, w)| w * (t[i] - mean) * (t[i] - mean))
            .sum();
        let std = var.sqrt();
        let truth = theta_true.and_then(|m| m.get(name)).copied();
        posterior.insert(
            name.to_string(),
            ParamSummary {
                mean,
                std,
                normalized_mean: truth.map(|tv| mean / tv),
                normalized_std: truth.map(|tv| std / tv.abs()),
            },
        );
    }
    PosteriorSummary {
        model: model.name().to_string(),
        n_particles: system.len(),
        seed,
        config_hash,
        rejuvenation_count: diag.rejuvenation_count,
        final_ess: diag.final_ess,
        posterior,
    }
}

#[derive(Debug, Serialize)]
pub struct RmseReportJson {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub n_particles: usize,
    pub n_diverged: usize,
    pub unit: String,
}

impl From<&RmseReport> for RmseReportJson {
    fn from(r: &RmseReport) -> Self {
        Self {
            min: r.min,
            max: r.max,
            mean: r.mean,
            n_particles: r.n_particles,
            n_diverged: r.n_diverged,
            unit: r.unit.clone(),
        }
    }
}

/// Summary table in the benchmark reporting layout.
pub fn render_rmse_table(case: &str, unit: &str, min: f64, max: f64, mean: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!("Case Study: {case}\n"));
    out.push_str(&format!("Unit: RMS ({unit})\n"));
    out.push_str(&format!("Minimum Particle  {min:.4e}\n"));
    out.push_str(&format!("Maximum Particle  {max:.4e}\n"));
    out.push_str(&format!("Mean Particle     {mean:.4e}\n"));
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Data(e.to_string()))
}
