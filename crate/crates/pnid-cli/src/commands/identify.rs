//! `identify`: run the SMC sweep over a training record and write the
//! posterior artifact set.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pnid_core::data::{load_dataset, obs_index_for};
use pnid_core::smc::{RunDiagnostics, Sampler};

use crate::config::RunConfig;
use crate::output::{
    summarize_posterior, validate_artifact, write_diagnostics_csv, write_json,
    write_posterior_csv, write_state_samples_csv, ArtifactKind,
};
use crate::CliError;

pub fn cmd_identify(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let seed = cfg.require_seed()?;
    let model = cfg.model()?;
    let prior = cfg.prior(&model)?;
    let train = cfg
        .data
        .train
        .as_ref()
        .ok_or_else(|| CliError::Config("data.train path is required for identify".into()))?;
    if !train.exists() {
        return Err(CliError::Config(format!(
            "data.train path {} does not exist",
            train.display()
        )));
    }
    let dataset = load_dataset(train, cfg.schema_tag()?)?;

    let obs = obs_index_for(&model, dataset.meta.observed);
    let x1 = if cfg.model.x0.is_empty() {
        match &dataset.meta.x0 {
            Some(x0) if x0.len() == model.dim() => nalgebra::DVector::from_column_slice(x0),
            _ => nalgebra::DVector::zeros(model.dim()),
        }
    } else {
        cfg.x0(&model)?
    };
    let solver = cfg.solver_config(model.dim(), dataset.meta.noise_std)?;
    let smc = cfg.smc_config(seed)?;
    crate::init_threads(cfg.threads);

    super::ensure_out_dir(out_dir)?;
    super::write_snapshot(cfg, out_dir)?;

    let sampler = Sampler::new(&model, &prior, &dataset, obs, x1, &solver, &smc)?;
    let mut diag = RunDiagnostics::default();
    let outcome = sampler.run_traced(&mut diag);

    // Diagnostics are flushed whether or not the sweep survived.
    let diagnostics_path = out_dir.join("diagnostics.csv");
    write_diagnostics_csv(&diagnostics_path, &diag)?;
    let system = outcome?;

    let posterior_path = out_dir.join("posterior.csv");
    write_posterior_csv(&posterior_path, &model, &prior, &system)?;
    let state_samples_path = out_dir.join("state_samples.csv");
    write_state_samples_csv(&state_samples_path, &diag, model.dim())?;

    let summary = summarize_posterior(
        &model,
        &prior,
        &system,
        dataset.meta.theta_true.as_ref(),
        seed,
        cfg.config_hash(),
        &diag,
    );
    let summary_path = out_dir.join("posterior_summary.json");
    write_json(&summary_path, &summary)?;

    // Wall time is the one volatile quantity; it lives in the run log so
    // every other artifact is byte-reproducible from the snapshot.
    let runlog = format!(
        "command=identify\nconfig_hash={}\nwall_time_s={:.3}\nrejuvenations={}\nfinal_ess={:.3}\n",
        cfg.config_hash(),
        started.elapsed().as_secs_f64(),
        diag.rejuvenation_count,
        diag.final_ess,
    );
    std::fs::write(out_dir.join("runlog.txt"), runlog).map_err(|e| CliError::Data(e.to_string()))?;

    validate_artifact(&posterior_path, ArtifactKind::Posterior)?;
    validate_artifact(&diagnostics_path, ArtifactKind::Diagnostics)?;
    validate_artifact(&state_samples_path, ArtifactKind::StateSamples)?;
    validate_artifact(&summary_path, ArtifactKind::PosteriorSummary)?;
    Ok(posterior_path)
}
