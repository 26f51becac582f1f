//! Run configuration: one TOML file with every default embedded, so the
//! fully resolved settings are always printable and reproducible.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use pnid_core::data::SchemaTag;
use pnid_core::models::{Model, ParameterVector, PriorMarginal, PriorSpec};
use pnid_core::odefilter::{Calibration, SolverConfig};
use pnid_core::smc::SmcConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; mandatory for any run (no entropy default).
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 means all available cores.
    pub threads: usize,
    pub model: ModelConfig,
    /// Per-parameter prior marginals keyed by parameter name.
    pub prior: BTreeMap<String, PriorEntry>,
    pub data: DataConfig,
    pub solver: SolverSection,
    pub smc: SmcSection,
    pub evaluate: EvaluateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: PathBuf::from("runs/out"),
            threads: 0,
            model: ModelConfig::default(),
            prior: BTreeMap::new(),
            data: DataConfig::default(),
            solver: SolverSection::default(),
            smc: SmcSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Bouc-Wen hysteresis exponent (fixed constant, not identified).
    pub nu: f64,
    /// Generating parameters for `simulate`, and the normalization
    /// reference carried into dataset sidecars.
    pub theta_true: BTreeMap<String, f64>,
    /// Initial state; defaults to the origin.
    pub x0: Vec<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { name: "duffing".into(), nu: 1.0, theta_true: BTreeMap::new(), x0: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorEntry {
    pub mean: f64,
    pub variance: f64,
    pub space: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Training dataset path (identify input).
    pub train: Option<PathBuf>,
    /// Test dataset path (evaluate input).
    pub test: Option<PathBuf>,
    /// Ingestion schema: standard | silverbox | emps.
    pub schema: String,
    /// Generation spec for the training record (`simulate`).
    pub generate: Option<GenerateConfig>,
    /// Generation spec for the test record (`simulate`).
    pub generate_test: Option<GenerateConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { train: None, test: None, schema: "standard".into(), generate: None, generate_test: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// multisine | sine_sweep
    pub kind: String,
    pub duration_s: f64,
    /// Fine generation rate for the ground-truth integration.
    pub rate_hz: f64,
    /// Decimation factor from the generation grid to the stored record.
    pub downsample_factor: usize,
    /// RK4 substeps per generation-grid interval (input still held per
    /// sample); raise when the vector field is stiff at the chosen rate.
    pub substeps: usize,
    /// Measurement noise standard deviation as a fraction of the clean
    /// channel's RMS.
    pub noise_fraction: f64,
    /// Observed channel: acceleration | displacement | voltage.
    pub observed: String,
    // Multisine parameters.
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_lines: usize,
    pub amplitude: f64,
    pub ramp_fraction: f64,
    // Sweep parameters.
    pub f_start_hz: f64,
    pub sweep_rate_hz_per_min: f64,
    /// Verify RK4 resolution by step halving before trusting the record.
    pub check_convergence: bool,
    /// Largest admissible relative terminal-state change under halving.
    /// Vector fields with absolute-value kinks (Bouc-Wen, EMPS) converge
    /// below fourth order, so protocol-pinned rates may need a looser gate.
    pub convergence_tol: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            kind: "multisine".into(),
            duration_s: 3.0,
            rate_hz: 131072.0,
            downsample_factor: 32,
            substeps: 1,
            noise_fraction: 0.05,
            observed: "acceleration".into(),
            f_min_hz: 0.5,
            f_max_hz: 100.0,
            n_lines: 2000,
            amplitude: 208.0,
            ramp_fraction: 0.1,
            f_start_hz: 20.0,
            sweep_rate_hz_per_min: 10.0,
            check_convergence: true,
            convergence_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub n_sub: usize,
    pub r_pseudo: f64,
    /// Data noise variance; 0 defers to the sidecar's recorded noise_std.
    pub r_y: f64,
    pub q: usize,
    /// online | fixed
    pub calibration: String,
    /// Diagonal diffusion used when calibration = "fixed"; a single entry
    /// broadcasts across dimensions.
    pub gamma_fixed: Vec<f64>,
    pub gamma_init: f64,
    pub gamma_min: f64,
    pub eps_chol: f64,
    pub sigma0_extra: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            n_sub: d.n_sub,
            r_pseudo: d.r_pseudo,
            r_y: 0.0,
            q: d.q,
            calibration: "online".into(),
            gamma_fixed: vec![1.0],
            gamma_init: d.gamma_init,
            gamma_min: d.gamma_min,
            eps_chol: d.eps_chol,
            sigma0_extra: d.sigma0_extra,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcSection {
    pub n_particles: usize,
    pub ess_threshold: f64,
    pub move_count: usize,
    pub proposal_inflation: f64,
    pub paper_exact_acceptance: bool,
    /// Particle slots whose filtered state means land in the state-sample
    /// output.
    pub state_sample_particles: usize,
}

impl Default for SmcSection {
    fn default() -> Self {
        let d = SmcConfig::default();
        Self {
            n_particles: d.n_particles,
            ess_threshold: d.ess_threshold,
            move_count: d.move_count,
            proposal_inflation: d.proposal_inflation,
            paper_exact_acceptance: d.paper_exact_acceptance,
            state_sample_particles: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Posterior artifact (posterior.csv) to score.
    pub artifact: Option<PathBuf>,
    /// RK4 substeps per sample interval in the scoring simulation.
    pub substeps: usize,
    /// Leading samples excluded from the RMSE (transient removal).
    pub transient_skip: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { artifact: None, substeps: 1, transient_skip: 0 }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config parse error: {e}")))
    }

    /// Fully resolved TOML, reproducing this run when fed back in.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("seed is mandatory; set it in the config or pass --seed".into()))
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let mut model = Model::from_name(&self.model.name)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Model::BoucWen { nu } = &mut model {
            if !(self.model.nu >= 1.0) {
                return Err(CliError::Config(format!(
                    "bouc_wen exponent nu must be >= 1, got {}",
                    self.model.nu
                )));
            }
            *nu = self.model.nu;
        }
        Ok(model)
    }

    /// Prior marginals ordered like the model's parameter list.
    pub fn prior(&self, model: &Model) -> Result<PriorSpec, CliError> {
        let mut marginals = Vec::with_capacity(model.param_count());
        for &name in model.param_names() {
            let entry = self.prior.get(name).ok_or_else(|| {
                CliError::Config(format!("prior for parameter `{name}` is missing"))
            })?;
            let marginal = match entry.space.as_str() {
                "natural" => PriorMarginal::natural(entry.mean, entry.variance),
                "log" => PriorMarginal::log(entry.mean, entry.variance),
                other => {
                    return Err(CliError::Config(format!(
                        "prior space for `{name}` must be `natural` or `log`, got `{other}`"
                    )))
                }
            };
            marginals.push(marginal);
        }
        for key in self.prior.keys() {
            if !model.param_names().contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "prior entry `{key}` does not name a parameter of `{}`",
                    model.name()
                )));
            }
        }
        let prior = PriorSpec::new(marginals);
        prior.validate(model).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(prior)
    }

    /// Generating parameters ordered like the model's parameter list.
    pub fn theta_true(&self, model: &Model) -> Result<ParameterVector, CliError> {
        let mut values = Vec::with_capacity(model.param_count());
        for &name in model.param_names() {
            let v = self.model.theta_true.get(name).ok_or_else(|| {
                CliError::Config(format!("model.theta_true is missing parameter `{name}`"))
            })?;
            values.push(*v);
        }
        Ok(ParameterVector::from_slice(&values))
    }

    pub fn x0(&self, model: &Model) -> Result<DVector<f64>, CliError> {
        if self.model.x0.is_empty() {
            return Ok(DVector::zeros(model.dim()));
        }
        if self.model.x0.len() != model.dim() {
            return Err(CliError::Config(format!(
                "model.x0 has {} entries, model `{}` needs {}",
                self.model.x0.len(),
                model.name(),
                model.dim()
            )));
        }
        Ok(DVector::from_column_slice(&self.model.x0))
    }

    pub fn schema_tag(&self) -> Result<SchemaTag, CliError> {
        match self.data.schema.as_str() {
            "standard" => Ok(SchemaTag::Standard),
            "silverbox" => Ok(SchemaTag::Silverbox),
            "emps" => Ok(SchemaTag::Emps),
            other => Err(CliError::Config(format!(
                "data.schema must be standard | silverbox | emps, got `{other}`"
            ))),
        }
    }

    /// Solver settings for a model of dimension `d`. `r_y` of zero defers
    /// to `sidecar_noise_std` (recorded at generation time).
    pub fn solver_config(&self, d: usize, sidecar_noise_std: Option<f64>) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let r_y = if s.r_y > 0.0 {
            s.r_y
        } else {
            match sidecar_noise_std {
                Some(sd) if sd > 0.0 => sd * sd,
                _ => {
                    return Err(CliError::Config(
                        "solver.r_y is unset and the dataset sidecar carries no noise_std".into(),
                    ))
                }
            }
        };
        let calibration = match s.calibration.as_str() {
            "online" => Calibration::Online,
            "fixed" => {
                let g = if s.gamma_fixed.len() == 1 {
                    DVector::from_element(d, s.gamma_fixed[0])
                } else if s.gamma_fixed.len() == d {
                    DVector::from_column_slice(&s.gamma_fixed)
                } else {
                    return Err(CliError::Config(format!(
                        "solver.gamma_fixed needs 1 or {d} entries, got {}",
                        s.gamma_fixed.len()
                    )));
                };
                Calibration::Fixed(g)
            }
            other => {
                return Err(CliError::Config(format!(
                    "solver.calibration must be online | fixed, got `{other}`"
                )))
            }
        };
        let cfg = SolverConfig {
            n_sub: s.n_sub,
            r_pseudo: s.r_pseudo,
            r_y,
            q: s.q,
            calibration,
            gamma_init: s.gamma_init,
            gamma_min: s.gamma_min,
            eps_chol: s.eps_chol,
            sigma0_extra: s.sigma0_extra,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn smc_config(&self, seed: u64) -> Result<SmcConfig, CliError> {
        let cfg = SmcConfig {
            n_particles: self.smc.n_particles,
            ess_threshold: self.smc.ess_threshold,
            seed,
            move_count: self.smc.move_count,
            proposal_inflation: self.smc.proposal_inflation,
            paper_exact_acceptance: self.smc.paper_exact_acceptance,
            trace_state_slots: self.smc.state_sample_particles,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Short hash identifying the resolved configuration.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_toml().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }
}
