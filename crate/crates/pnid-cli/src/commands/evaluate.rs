//! `evaluate`: score a posterior artifact against a test record by
//! deterministic per-particle simulation.

use std::path::{Path, PathBuf};

use pnid_core::data::{load_dataset, rmse_per_particle, RmsePolicy};
use pnid_core::models::ParameterVector;

use crate::config::RunConfig;
use crate::output::{render_rmse_table, validate_artifact, write_json, ArtifactKind, RmseReportJson};
use crate::CliError;

pub fn cmd_evaluate(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf, CliError> {
    let model = cfg.model()?;
    let artifact = cfg
        .evaluate
        .artifact
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluate.artifact path is required".into()))?;
    let test = cfg
        .data
        .test
        .as_ref()
        .ok_or_else(|| CliError::Config("data.test path is required for evaluate".into()))?;
    for (what, path) in [("evaluate.artifact", artifact), ("data.test", test)] {
        if !path.exists() {
            return Err(CliError::Config(format!(
                "{what} path {} does not exist",
                path.display()
            )));
        }
    }
    let dataset = load_dataset(test, cfg.schema_tag()?)?;
    let particles = read_posterior_particles(artifact, model.param_names())?;
    crate::init_threads(cfg.threads);

    super::ensure_out_dir(out_dir)?;
    super::write_snapshot(cfg, out_dir)?;

    let policy = RmsePolicy {
        substeps: cfg.evaluate.substeps.max(1),
        transient_skip: cfg.evaluate.transient_skip,
    };
    let report = rmse_per_particle(&model, &particles, &dataset, policy)?;

    let mut per_particle = String::from("particle,rmse\n");
    for (i, r) in report.per_particle.iter().enumerate() {
        per_particle.push_str(&format!("{i},{r:.16e}\n"));
    }
    let csv_path = out_dir.join("rmse_per_particle.csv");
    std::fs::write(&csv_path, per_particle).map_err(|e| CliError::Data(e.to_string()))?;

    let json_path = out_dir.join("rmse_report.json");
    write_json(&json_path, &RmseReportJson::from(&report))?;

    println!(
        "{}",
        render_rmse_table(model.name(), &report.unit, report.min, report.max, report.mean)
    );
    if report.n_diverged > 0 {
        eprintln!(
            "warning: {} of {} particles diverged during evaluation and were excluded from the summary",
            report.n_diverged, report.n_particles
        );
    }

    validate_artifact(&json_path, ArtifactKind::RmseReport)?;
    Ok(json_path)
}

/// Parse a posterior.csv back into natural-space particles, checking the
/// column layout against the model.
fn read_posterior_particles(
    path: &Path,
    param_names: &[&str],
) -> Result<Vec<ParameterVector>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read artifact {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| CliError::Data("posterior artifact is empty".into()))?
        .split(',')
        .collect();
    let mut expected: Vec<&str> = param_names.to_vec();
    expected.push("weight");
    if header != expected {
        return Err(CliError::Data(format!(
            "posterior artifact columns {header:?} do not match the model's parameters {expected:?}"
        )));
    }
    let mut particles = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let values: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let values =
            values.map_err(|e| CliError::Data(format!("artifact row {row}: {e}")))?;
        if values.len() != expected.len() {
            return Err(CliError::Data(format!("artifact row {row} has {} fields", values.len())));
        }
        particles.push(ParameterVector::from_slice(&values[..param_names.len()]));
    }
    Ok(particles)
}
