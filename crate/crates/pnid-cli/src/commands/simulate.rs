//! `simulate`: synthesize excitation, integrate the ground truth, decimate,
//! inject noise and write train/test dataset files.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pnid_core::data::{
    add_noise, extract_channel, gen_multisine, gen_sine_sweep, rk4_convergence_gap,
    rk4_simulate_model, save_dataset, sidecar_path, DatasetMeta, MultisineSpec, TimeSeriesDataset,
};
use pnid_core::models::{Model, ParameterVector};

use crate::config::{GenerateConfig, RunConfig};
use crate::output::{validate_artifact, ArtifactKind};
use crate::CliError;

/// RNG stream tags for the generation pipeline.
const STREAM_TRAIN_PHASES: u64 = 10;
const STREAM_TRAIN_NOISE: u64 = 11;
const STREAM_TEST_PHASES: u64 = 12;
const STREAM_TEST_NOISE: u64 = 13;

pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let seed = cfg.require_seed()?;
    let model = cfg.model()?;
    let theta_true = cfg.theta_true(&model)?;
    let x0 = cfg.x0(&model)?;
    let gen = cfg
        .data
        .generate
        .as_ref()
        .ok_or_else(|| CliError::Config("data.generate section is required for simulate".into()))?;

    super::ensure_out_dir(out_dir)?;
    super::write_snapshot(cfg, out_dir)?;

    let mut written = Vec::new();
    written.extend(generate_pair(
        cfg,
        &model,
        &theta_true,
        &x0,
        gen,
        seed,
        (STREAM_TRAIN_PHASES, STREAM_TRAIN_NOISE),
        out_dir,
        "train",
    )?);
    if let Some(gen_test) = &cfg.data.generate_test {
        written.extend(generate_pair(
            cfg,
            &model,
            &theta_true,
            &x0,
            gen_test,
            seed,
            (STREAM_TEST_PHASES, STREAM_TEST_NOISE),
            out_dir,
            "test",
        )?);
    }

    for path in &written {
        validate_artifact(path, ArtifactKind::Dataset)?;
        validate_artifact(&sidecar_path(path), ArtifactKind::DatasetMeta)?;
    }
    Ok(written)
}

#[allow(clippy::too_many_arguments)]
fn generate_pair(
    cfg: &RunConfig,
    model: &Model,
    theta_true: &ParameterVector,
    x0: &nalgebra::DVector<f64>,
    gen: &GenerateConfig,
    seed: u64,
    (phase_stream, noise_stream): (u64, u64),
    out_dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, CliError> {
    let observed = super::parse_observed(&gen.observed)?;

    let input = match gen.kind.as_str() {
        "multisine" => {
            let spec = MultisineSpec {
                f_min_hz: gen.f_min_hz,
                f_max_hz: gen.f_max_hz,
                n_lines: gen.n_lines,
                amplitude: gen.amplitude,
                ramp_fraction: gen.ramp_fraction,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(phase_stream);
            gen_multisine(&spec, gen.duration_s, gen.rate_hz, &mut rng)?
        }
        "sine_sweep" => gen_sine_sweep(
            gen.f_start_hz,
            gen.sweep_rate_hz_per_min / 60.0,
            gen.amplitude,
            gen.duration_s,
            gen.rate_hz,
        )?,
        other => {
            return Err(CliError::Config(format!(
                "data.generate.kind must be multisine | sine_sweep, got `{other}`"
            )))
        }
    };

    let substeps = gen.substeps.max(1);
    if gen.check_convergence && !input.is_empty() {
        let gap = rk4_convergence_gap(
            |x, u, t| model.rhs(x, u, theta_true, t),
            &input,
            gen.rate_hz,
            x0,
            substeps,
        )?;
        if gap > gen.convergence_tol {
            return Err(CliError::Numerical(format!(
                "generation rate {} Hz is too coarse: step halving moves the terminal state by {gap:.3e} (> {:.1e})",
                gen.rate_hz, gen.convergence_tol
            )));
        }
    }

    let traj = rk4_simulate_model(model, theta_true, &input, gen.rate_hz, x0, substeps)?;
    let channel = extract_channel(&traj, observed);
    let full = TimeSeriesDataset::new(
        traj.t.clone(),
        input,
        channel,
        DatasetMeta {
            rate_hz: gen.rate_hz,
            observed,
            units: observed.default_unit().to_string(),
            provenance: format!("pnid simulate model={} seed={seed}", model.name()),
            noise_std: None,
            theta_true: Some(cfg.model.theta_true.clone()),
            x0: Some(x0.iter().copied().collect()),
        },
    )?;
    let clean = full.downsample(gen.downsample_factor)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(noise_stream);
    let (noisy_y, sigma) = add_noise(&clean.y, gen.noise_fraction, &mut rng);
    let mut noisy = clean.clone();
    noisy.y = noisy_y;
    noisy.meta.noise_std = Some(sigma);

    let clean_path = out_dir.join(format!("{stem}_clean.csv"));
    let noisy_path = out_dir.join(format!("{stem}_noisy.csv"));
    save_dataset(&clean, &clean_path)?;
    save_dataset(&noisy, &noisy_path)?;
    Ok(vec![clean_path, noisy_path])
}
