//! Sequential Monte Carlo over model parameters.
//!
//! Particles live in sampling space (logs for positivity-transformed
//! parameters) and are reweighted by the probabilistic filter's incremental
//! likelihood, one observation at a time. When the effective sample size
//! falls below the configured fraction of N, the system is rebuilt:
//! systematic resampling, weight reset, then an independent
//! Metropolis-Hastings move through a Gaussian fitted to the weighted cloud,
//! each proposal re-scored by filtering the entire observation prefix from
//! scratch.

mod proposal;

pub use proposal::{fit_proposal, GaussianProposal, PROPOSAL_JITTER};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::TimeSeriesDataset;
use crate::iwp::{StateLayout, TransitionBuilder};
use crate::models::{Model, ObsIndex, ParameterVector, PriorSpec};
use crate::odefilter::{FilterError, FilterRun, Projections, SolverConfig};

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("all particles failed at observation {t_index}")]
    AllParticlesFailed { t_index: usize },
    #[error("proposal covariance is degenerate even after jitter")]
    DegenerateProposal,
    #[error("invalid SMC configuration: {0}")]
    Config(String),
    #[error("dataset exhausted: no observation after index {t_index}")]
    NoMoreObservations { t_index: usize },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Sampler settings.
#[derive(Debug, Clone)]
pub struct SmcConfig {
    pub n_particles: usize,
    /// Rejuvenation triggers when ESS < ess_threshold * N.
    pub ess_threshold: f64,
    pub seed: u64,
    /// Independent MH moves per particle per rejuvenation.
    pub move_count: usize,
    /// Scalar >= 1 applied to the fitted proposal covariance.
    pub proposal_inflation: f64,
    /// Drop the proposal-density correction from the acceptance ratio,
    /// reducing it to the bare prior-times-likelihood quotient.
    pub paper_exact_acceptance: bool,
    /// Number of leading particle slots whose filtered state means are
    /// traced per observation (diagnostics output).
    pub trace_state_slots: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 256,
            ess_threshold: 0.5,
            seed: 0,
            move_count: 1,
            proposal_inflation: 1.0,
            paper_exact_acceptance: false,
            trace_state_slots: 0,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<(), SmcError> {
        if self.n_particles < 2 {
            return Err(SmcError::Config("need at least 2 particles".into()));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return Err(SmcError::Config("ess_threshold must lie in (0, 1]".into()));
        }
        if self.move_count < 1 {
            return Err(SmcError::Config("move_count must be at least 1".into()));
        }
        if !(self.proposal_inflation >= 1.0) {
            return Err(SmcError::Config("proposal_inflation must be at least 1".into()));
        }
        Ok(())
    }
}

/// Weighted particle population with per-particle carried filter state.
/// A failed particle has weight -inf and no carried state.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    /// Sampling-space parameter vectors.
    pub particles: Vec<DVector<f64>>,
    /// Unnormalized log weights.
    pub log_weights: Vec<f64>,
    pub carried: Vec<Option<FilterRun>>,
    /// Index of the last assimilated observation row.
    pub t_current: usize,
}

impl ParticleSystem {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn ess(&self) -> f64 {
        ess(&self.log_weights)
    }

    /// Weights normalized to sum to one (zero for failed particles).
    pub fn normalized_weights(&self) -> Vec<f64> {
        normalized_weights(&self.log_weights)
    }

    /// Particles mapped back to natural space.
    pub fn particles_natural(&self, prior: &PriorSpec) -> Vec<ParameterVector> {
        self.particles.iter().map(|eta| prior.to_natural(eta)).collect()
    }
}

/// Effective sample size from unnormalized log weights, computed with
/// max-subtraction so weights of order exp(-2000) survive.
pub fn ess(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &lw in log_weights {
        let w = (lw - max).exp();
        sum += w;
        sum_sq += w * w;
    }
    sum * sum / sum_sq
}

pub fn normalized_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![0.0; log_weights.len()];
    }
    let unnorm: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|w| w / total).collect()
}

/// Systematic resampling: one uniform `u01` spaces N look-up points evenly
/// through the cumulative weights. Returns the selected source indices.
pub fn systematic_resample(weights: &[f64], u01: f64) -> Vec<usize> {
    let n = weights.len();
    let mut indices = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for m in 0..n {
        let pos = (m as f64 + u01) / n as f64;
        while pos > cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        indices.push(i);
    }
    indices
}

/// Per-observation diagnostics row.
#[derive(Debug, Clone)]
pub struct StepDiag {
    pub t_index: usize,
    pub time: f64,
    /// ESS after assimilating this observation, before any rejuvenation.
    pub ess: f64,
    pub threshold: f64,
    pub rejuvenated: bool,
    pub acceptance_rate: Option<f64>,
}

/// Filtered state means of one traced particle slot at one observation.
#[derive(Debug, Clone)]
pub struct StateTraceRow {
    pub slot: usize,
    pub t_index: usize,
    pub time: f64,
    pub observed_mean: f64,
    pub solution_mean: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunDiagnostics {
    pub steps: Vec<StepDiag>,
    pub state_traces: Vec<StateTraceRow>,
    pub rejuvenation_count: usize,
    pub final_ess: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RejuvenationStats {
    pub attempted: usize,
    pub accepted: usize,
}

impl RejuvenationStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

/// Log acceptance ratio of an independent MH move from `current` to
/// `candidate`, each summarized as log prior + cumulative log likelihood
/// (+ proposal log density unless running the bare-quotient variant).
#[allow(clippy::too_many_arguments)]
pub fn imh_log_acceptance(
    log_prior_candidate: f64,
    log_lik_candidate: f64,
    log_prop_candidate: f64,
    log_prior_current: f64,
    log_lik_current: f64,
    log_prop_current: f64,
    paper_exact: bool,
) -> f64 {
    let mut log_num = log_prior_candidate + log_lik_candidate;
    let mut log_den = log_prior_current + log_lik_current;
    if !paper_exact {
        // Proposal-density correction keeps the kernel invariant: the
        // proposal is independent of the current point, so its density
        // enters crosswise.
        log_num += log_prop_current;
        log_den += log_prop_candidate;
    }
    log_num - log_den
}

/// RNG stream purposes; each (purpose, event, move, particle) tuple owns a
/// private counter-derived stream so parallel execution is reproducible.
const STREAM_PRIOR: u8 = 1;
const STREAM_RESAMPLE: u8 = 2;
const STREAM_MOVE: u8 = 3;

/// The sampler: model, prior, dataset and configuration bound together.
pub struct Sampler<'a> {
    pub model: &'a Model,
    pub prior: &'a PriorSpec,
    pub dataset: &'a TimeSeriesDataset,
    pub obs: ObsIndex,
    pub x1: DVector<f64>,
    pub solver: &'a SolverConfig,
    pub cfg: &'a SmcConfig,
    layout: StateLayout,
    builder: TransitionBuilder,
    proj: Projections,
}

impl<'a> Sampler<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'a Model,
        prior: &'a PriorSpec,
        dataset: &'a TimeSeriesDataset,
        obs: ObsIndex,
        x1: DVector<f64>,
        solver: &'a SolverConfig,
        cfg: &'a SmcConfig,
    ) -> Result<Self, SmcError> {
        cfg.validate()?;
        solver.validate()?;
        prior.validate(model).map_err(FilterError::Model)?;
        let layout = StateLayout::new(model.dim(), solver.q);
        let dt = if dataset.len() >= 2 { dataset.dt() } else { 1.0 };
        let builder = TransitionBuilder::new(dt / solver.n_sub as f64, layout)
            .map_err(FilterError::Iwp)?;
        let proj = Projections::new(layout)?;
        Ok(Self { model, prior, dataset, obs, x1, solver, cfg, layout, builder, proj })
    }

    fn stream_rng(&self, purpose: u8, event: u32, mv: u8, particle: u16) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let id = ((purpose as u64) << 56)
            | ((event as u64) << 24)
            | ((mv as u64) << 16)
            | particle as u64;
        rng.set_stream(id);
        rng
    }

    fn init_carried(&self, eta: &DVector<f64>) -> Option<FilterRun> {
        let theta = self.prior.to_natural(eta);
        let (t1, u1) = if self.dataset.is_empty() {
            (0.0, 0.0)
        } else {
            (self.dataset.t[0], self.dataset.u[0])
        };
        FilterRun::init(
            |x, u, t| self.model.rhs(x, u, &theta, t),
            &self.x1,
            u1,
            t1,
            self.layout,
            self.solver,
        )
        .ok()
    }

    /// Draw the initial particle system from the prior with uniform weights.
    pub fn init(&self) -> Result<ParticleSystem, SmcError> {
        let n = self.cfg.n_particles;
        let mut rng = self.stream_rng(STREAM_PRIOR, 0, 0, 0);
        let particles: Vec<DVector<f64>> =
            (0..n).map(|_| self.prior.sample_sampling(&mut rng)).collect();
        self.system_from_particles(particles)
    }

    /// Build a synchronized system from given sampling-space particles.
    pub fn system_from_particles(
        &self,
        particles: Vec<DVector<f64>>,
    ) -> Result<ParticleSystem, SmcError> {
        let n = particles.len();
        let log_uniform = -(n as f64).ln();
        let carried: Vec<Option<FilterRun>> =
            particles.par_iter().map(|eta| self.init_carried(eta)).collect();
        let log_weights: Vec<f64> = carried
            .iter()
            .map(|c| if c.is_some() { log_uniform } else { f64::NEG_INFINITY })
            .collect();
        let sys = ParticleSystem { particles, log_weights, carried, t_current: 0 };
        if sys.log_weights.iter().all(|w| !w.is_finite()) {
            return Err(SmcError::AllParticlesFailed { t_index: 0 });
        }
        Ok(sys)
    }

    /// Advance every live particle's filter across one observation interval
    /// and fold the likelihood increments into the weights.
    pub fn assimilate(&self, sys: &mut ParticleSystem) -> Result<(), SmcError> {
        let k = sys.t_current + 1;
        if k >= self.dataset.len() {
            return Err(SmcError::NoMoreObservations { t_index: sys.t_current });
        }
        let u_held = self.dataset.u[k - 1];
        let u_next = self.dataset.u[k];
        let t_prev = self.dataset.t[k - 1];
        let y = self.dataset.y[k];

        let increments: Vec<Option<f64>> = sys
            .particles
            .par_iter()
            .zip(sys.carried.par_iter_mut())
            .map(|(eta, carried)| {
                let run = carried.as_mut()?;
                let theta = self.prior.to_natural(eta);
                match run.step(
                    |x, u, t| self.model.rhs(x, u, &theta, t),
                    &self.builder,
                    &self.proj,
                    self.obs,
                    u_held,
                    u_next,
                    t_prev,
                    y,
                    self.solver,
                    None,
                ) {
                    Ok(rec) => Some(rec.log_lik_increment),
                    Err(_) => {
                        *carried = None;
                        None
                    }
                }
            })
            .collect();

        for (i, inc) in increments.into_iter().enumerate() {
            match inc {
                Some(dll) => sys.log_weights[i] += dll,
                None => sys.log_weights[i] = f64::NEG_INFINITY,
            }
        }
        sys.t_current = k;
        if sys.log_weights.iter().all(|w| !w.is_finite()) {
            return Err(SmcError::AllParticlesFailed { t_index: k });
        }
        Ok(())
    }

    /// Filter a candidate parameter across the full observation prefix
    /// (rows 1..=t_current), producing a carried state ready to continue.
    fn rebrowse(&self, eta: &DVector<f64>, t_current: usize) -> Result<FilterRun, FilterError> {
        let theta = self.prior.to_natural(eta);
        let rhs = |x: &DVector<f64>, u: f64, t: f64| self.model.rhs(x, u, &theta, t);
        let mut run = FilterRun::init(
            &rhs,
            &self.x1,
            self.dataset.u[0],
            self.dataset.t[0],
            self.layout,
            self.solver,
        )?;
        for k in 1..=t_current {
            run.step(
                &rhs,
                &self.builder,
                &self.proj,
                self.obs,
                self.dataset.u[k - 1],
                self.dataset.u[k],
                self.dataset.t[k - 1],
                self.dataset.y[k],
                self.solver,
                None,
            )?;
        }
        Ok(run)
    }

    /// Resample-move rejuvenation: systematic resampling, weight reset, then
    /// `move_count` independent MH sweeps re-scoring each candidate over the
    /// whole prefix.
    pub fn rejuvenate(
        &self,
        sys: &mut ParticleSystem,
        event: u32,
    ) -> Result<RejuvenationStats, SmcError> {
        let n = sys.len();
        // Fit the proposal to the weighted cloud before resampling flattens it.
        let proposal = fit_proposal(
            &sys.particles,
            &sys.log_weights,
            self.cfg.proposal_inflation,
        )
        .ok_or(SmcError::DegenerateProposal)?;

        let weights = sys.normalized_weights();
        let u01 = self.stream_rng(STREAM_RESAMPLE, event, 0, 0).gen::<f64>();
        let picks = systematic_resample(&weights, u01);
        sys.particles = picks.iter().map(|&i| sys.particles[i].clone()).collect();
        sys.carried = picks.iter().map(|&i| sys.carried[i].clone()).collect();
        let log_uniform = -(n as f64).ln();
        sys.log_weights = vec![log_uniform; n];

        let t_current = sys.t_current;
        let mut attempted = 0usize;
        let mut accepted = 0usize;
        for mv in 0..self.cfg.move_count {
            let moves: Vec<Option<(DVector<f64>, FilterRun)>> = (0..n)
                .into_par_iter()
                .map(|m| {
                    let mut rng = self.stream_rng(STREAM_MOVE, event, mv as u8, m as u16);
                    let candidate = proposal.sample(&mut rng);
                    let log_prior_new = self.prior.log_density_sampling(&candidate);
                    if !log_prior_new.is_finite() {
                        return None;
                    }
                    let run = match self.rebrowse(&candidate, t_current) {
                        Ok(run) => run,
                        Err(_) => return None,
                    };
                    let current = &sys.particles[m];
                    let log_prior_old = self.prior.log_density_sampling(current);
                    let log_lik_old = sys.carried[m]
                        .as_ref()
                        .map(|r| r.cum_log_lik)
                        .unwrap_or(f64::NEG_INFINITY);
                    let log_alpha = imh_log_acceptance(
                        log_prior_new,
                        run.cum_log_lik,
                        proposal.log_density(&candidate),
                        log_prior_old,
                        log_lik_old,
                        proposal.log_density(current),
                        self.cfg.paper_exact_acceptance,
                    );
                    let accept = log_alpha >= 0.0 || rng.gen::<f64>().ln() < log_alpha;
                    if accept {
                        Some((candidate, run))
                    } else {
                        None
                    }
                })
                .collect();

            for (m, outcome) in moves.into_iter().enumerate() {
                attempted += 1;
                if let Some((candidate, run)) = outcome {
                    accepted += 1;
                    sys.particles[m] = candidate;
                    sys.carried[m] = Some(run);
                }
            }
        }
        Ok(RejuvenationStats { attempted, accepted })
    }

    /// Run the full sweep: assimilate every observation, rejuvenating
    /// whenever the ESS falls below the threshold.
    pub fn run(&self) -> Result<(ParticleSystem, RunDiagnostics), SmcError> {
        let mut diag = RunDiagnostics::default();
        let sys = self.run_traced(&mut diag)?;
        Ok((sys, diag))
    }

    /// Like [`Sampler::run`], but accumulates diagnostics into the caller's
    /// buffer so an aborted run still leaves its trace behind.
    pub fn run_traced(&self, diag: &mut RunDiagnostics) -> Result<ParticleSystem, SmcError> {
        let mut sys = self.init()?;
        let threshold = self.cfg.ess_threshold * self.cfg.n_particles as f64;
        let mut event: u32 = 0;

        let n_obs = self.dataset.len();
        for k in 1..n_obs {
            self.assimilate(&mut sys)?;
            let ess_now = sys.ess();
            let mut rate = None;
            let rejuvenated = ess_now < threshold;
            if rejuvenated {
                let stats = self.rejuvenate(&mut sys, event)?;
                event += 1;
                rate = Some(stats.acceptance_rate());
                diag.rejuvenation_count += 1;
            }
            diag.steps.push(StepDiag {
                t_index: k,
                time: self.dataset.t[k],
                ess: ess_now,
                threshold,
                rejuvenated,
                acceptance_rate: rate,
            });
            for slot in 0..self.cfg.trace_state_slots.min(sys.len()) {
                if let Some(run) = &sys.carried[slot] {
                    let idx = self.layout.index(self.obs.block, self.obs.component);
                    diag.state_traces.push(StateTraceRow {
                        slot,
                        t_index: k,
                        time: self.dataset.t[k],
                        observed_mean: run.state.mean[idx],
                        solution_mean: run.state.mean.rows(0, self.layout.d).iter().copied().collect(),
                    });
                }
            }
        }
        diag.final_ess = sys.ess();
        Ok(sys)
    }
}
