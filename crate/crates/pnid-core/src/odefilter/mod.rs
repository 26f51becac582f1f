//! Probabilistic ODE solver: square-root EKF0 filtering over the augmented
//! derivative-stacked state.
//!
//! Each step predicts through the IWP transition and then conditions on the
//! pseudo-measurement `Cdot X - f(C X) = 0`, which enforces the ODE at the
//! grid point and whose innovation measures local integration error. Data
//! updates against real observations are interleaved at sample times as
//! plain linear Kalman updates on the selected state component. Covariances
//! are carried exclusively as upper-triangular right factors (`cov = S^T S`)
//! and propagated by QR, never as dense covariance matrices.

mod sqrt_kalman;

pub use sqrt_kalman::{predict, qr_right_factor, sqrt_measurement_update};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::iwp::{self, IwpError, StateLayout, TransitionBuilder};
use crate::models::{ModelError, ObsIndex};

/// Result alias for fallible vector-field evaluation, the shape every model
/// right-hand side and test closure conforms to: `f(x, u, t)`.
pub type RhsResult = Result<DVector<f64>, ModelError>;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("model evaluation failed: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Iwp(#[from] IwpError),
    #[error("innovation covariance numerically singular")]
    SingularInnovation,
    #[error("non-finite filter state at step {t_index}")]
    NonFinite { t_index: usize },
    #[error("innovation variance must be positive, got {0}")]
    BadInnovationVariance(f64),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("observation index (block {block}, component {component}) outside layout")]
    BadObsIndex { block: usize, component: usize },
}

/// Gaussian filtering moments: mean and upper-triangular right covariance
/// factor with `covariance = cov_sqrt^T cov_sqrt`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov_sqrt: DMatrix<f64>,
}

impl GaussianState {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Dense covariance, for diagnostics and tests.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.cov_sqrt.transpose() * &self.cov_sqrt
    }

    /// Marginal standard deviation of state entry `i` (column norm of the
    /// right factor).
    pub fn marginal_std(&self, i: usize) -> f64 {
        self.cov_sqrt.column(i).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && self.cov_sqrt.iter().all(|v| v.is_finite())
    }
}

/// Data-update summary at an observation time.
#[derive(Debug, Clone, Copy)]
pub struct DataUpdateRecord {
    /// Innovation v = y - predicted observation.
    pub innovation: f64,
    /// Innovation variance S_y.
    pub variance: f64,
    /// Log-likelihood increment -phi = -(log(2 pi S_y) + v^2 / S_y) / 2.
    pub log_lik_increment: f64,
}

/// Per-substep record: the pseudo-measurement innovation and its
/// diffusion-relative scale, plus the data update when the substep lands on
/// an observation time.
#[derive(Debug, Clone)]
pub struct FilterStepRecord {
    /// Index of the observation interval this substep belongs to.
    pub t_index: usize,
    pub time: f64,
    /// Pseudo-innovation z_hat = Cdot mu_pred - f(C mu_pred).
    pub pseudo_innovation: DVector<f64>,
    /// Scalar s with S_pseudo ~= Gamma * s; feeds the diffusion estimator.
    pub pseudo_scale: f64,
    pub data: Option<DataUpdateRecord>,
}

/// Diffusion calibration mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibration {
    /// Quasi-ML estimate from the pseudo-innovations seen so far, refreshed
    /// before every predict.
    Online,
    /// Fixed diagonal Gamma (one entry per signal dimension).
    Fixed(DVector<f64>),
}

/// Solver settings. `n_sub` substeps per observation interval give the
/// filter step h = dt / n_sub; the input is held constant across the
/// interval (zero-order hold).
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub n_sub: usize,
    /// Pseudo-measurement noise R; zero enforces exact ODE interpolation.
    pub r_pseudo: f64,
    /// Data noise variance R_y.
    pub r_y: f64,
    /// Number of modelled derivatives (the prior extrapolates with
    /// polynomials of this degree plus one).
    pub q: usize,
    pub calibration: Calibration,
    /// Diffusion used before any pseudo-innovation has been recorded.
    pub gamma_init: f64,
    /// Floor keeping the calibrated diffusion away from exact zero.
    pub gamma_min: f64,
    /// Trace-relative jitter added to singular innovation factorizations.
    pub eps_chol: f64,
    /// Prior variance of derivative blocks beyond the first (q > 1), which
    /// the initial condition does not determine.
    pub sigma0_extra: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_sub: 1,
            r_pseudo: 0.0,
            r_y: 1.0,
            q: 1,
            calibration: Calibration::Online,
            gamma_init: 1.0,
            gamma_min: 1e-12,
            eps_chol: 1e-12,
            sigma0_extra: 1e2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.n_sub < 1 {
            return Err(FilterError::Config("n_sub must be at least 1".into()));
        }
        if !(self.r_pseudo >= 0.0) {
            return Err(FilterError::Config("r_pseudo must be nonnegative".into()));
        }
        if !(self.r_y > 0.0) {
            return Err(FilterError::Config("r_y must be positive".into()));
        }
        if self.q < 1 || self.q > 4 {
            return Err(FilterError::Config("q must lie in [1, 4]".into()));
        }
        if !(self.eps_chol >= 0.0) {
            return Err(FilterError::Config("eps_chol must be nonnegative".into()));
        }
        if !(self.gamma_min > 0.0) || !(self.gamma_init > 0.0) {
            return Err(FilterError::Config("diffusion floor and init must be positive".into()));
        }
        if !(self.sigma0_extra >= 0.0) {
            return Err(FilterError::Config("sigma0_extra must be nonnegative".into()));
        }
        if let Calibration::Fixed(g) = &self.calibration {
            if g.iter().any(|&v| !(v > 0.0)) {
                return Err(FilterError::Config("fixed diffusion entries must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Solution/derivative block selectors bundled with their layout.
#[derive(Debug, Clone)]
pub struct Projections {
    pub layout: StateLayout,
    pub c: DMatrix<f64>,
    pub c_dot: DMatrix<f64>,
}

impl Projections {
    pub fn new(layout: StateLayout) -> Result<Self, FilterError> {
        let (c, c_dot) = iwp::projections(layout)?;
        Ok(Self { layout, c, c_dot })
    }
}

/// Running quasi-ML sums for the diagonal diffusion estimate
/// `Gamma_ii = mean over steps of z_hat_i^2 / s`.
#[derive(Debug, Clone)]
pub struct CalibrationAccumulator {
    sums: DVector<f64>,
    count: usize,
}

impl CalibrationAccumulator {
    pub fn new(d: usize) -> Self {
        Self { sums: DVector::zeros(d), count: 0 }
    }

    pub fn push(&mut self, innovation: &DVector<f64>, scale: f64) {
        if scale > 0.0 {
            for i in 0..self.sums.len() {
                self.sums[i] += innovation[i] * innovation[i] / scale;
            }
            self.count += 1;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Current estimate, floored at `gamma_min`; `gamma_init` before any
    /// record has been seen.
    pub fn estimate(&self, gamma_init: f64, gamma_min: f64) -> DVector<f64> {
        if self.count == 0 {
            return DVector::from_element(self.sums.len(), gamma_init);
        }
        self.sums.map(|s| (s / self.count as f64).max(gamma_min))
    }
}

/// Quasi-ML diffusion estimate from a batch of step records.
pub fn calibrate_gamma(records: &[FilterStepRecord], d: usize, gamma_min: f64) -> DVector<f64> {
    let mut acc = CalibrationAccumulator::new(d);
    for rec in records {
        acc.push(&rec.pseudo_innovation, rec.pseudo_scale);
    }
    // With no usable record the estimator falls back to the floor.
    acc.estimate(gamma_min, gamma_min)
}

/// Initial filter state: the known initial condition fills the solution
/// block, its vector-field image the first derivative block, both pinned to
/// jitter-level variance; any higher blocks start at zero mean with
/// `sigma0_extra` variance.
pub fn init_state<F>(
    rhs: F,
    x1: &DVector<f64>,
    u1: f64,
    t1: f64,
    layout: StateLayout,
    cfg: &SolverConfig,
) -> Result<GaussianState, FilterError>
where
    F: Fn(&DVector<f64>, f64, f64) -> RhsResult,
{
    if !x1.iter().all(|v| v.is_finite()) {
        return Err(FilterError::NonFinite { t_index: 0 });
    }
    let d = layout.d;
    assert_eq!(x1.len(), d, "initial state dimension mismatch");
    let fx = rhs(x1, u1, t1)?;
    if !fx.iter().all(|v| v.is_finite()) {
        return Err(FilterError::NonFinite { t_index: 0 });
    }

    let n = layout.dim();
    let mut mean = DVector::zeros(n);
    mean.rows_mut(0, d).copy_from(x1);
    mean.rows_mut(d, d).copy_from(&fx);

    let jitter_sd = cfg.eps_chol.max(f64::MIN_POSITIVE).sqrt();
    let extra_sd = cfg.sigma0_extra.max(cfg.eps_chol).sqrt();
    let mut cov_sqrt = DMatrix::zeros(n, n);
    for i in 0..n {
        cov_sqrt[(i, i)] = if i < 2 * d { jitter_sd } else { extra_sd };
    }
    Ok(GaussianState { mean, cov_sqrt })
}

/// Condition on the zero-valued pseudo-measurement with the zeroth-order
/// linearization (observation matrix Cdot, no Jacobian of f).
///
/// Returns the updated state, the pseudo-innovation and its scalar
/// diffusion-relative scale. With `r_pseudo = 0` the updated mean
/// interpolates the ODE exactly: `Cdot mu = f(C mu_pred)`.
pub fn pseudo_update<F>(
    state: &GaussianState,
    rhs: F,
    u: f64,
    t: f64,
    proj: &Projections,
    gamma: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(GaussianState, DVector<f64>, f64), FilterError>
where
    F: Fn(&DVector<f64>, f64, f64) -> RhsResult,
{
    let sol = &proj.c * &state.mean;
    let deriv = &proj.c_dot * &state.mean;
    let fx = rhs(&sol, u, t)?;
    let innovation = deriv - fx;
    if !innovation.iter().all(|v| v.is_finite()) {
        return Err(FilterError::NonFinite { t_index: 0 });
    }

    let d = proj.layout.d;
    // Predicted innovation covariance diagonal, for the jitter scale and the
    // diffusion-relative innovation scale.
    let cross = &state.cov_sqrt * proj.c_dot.transpose(); // n x d
    let mut diag_sum = 0.0;
    let mut scale = 0.0;
    for i in 0..d {
        let s_ii = cross.column(i).norm_squared() + cfg.r_pseudo;
        diag_sum += s_ii;
        scale += s_ii / gamma[i];
    }
    let scale = scale / d as f64;
    let jitter = cfg.eps_chol * (diag_sum / d as f64);
    let r_sd = DVector::from_element(d, (cfg.r_pseudo + jitter).sqrt());

    let residual = -&innovation;
    let (updated, _sy_sqrt) =
        sqrt_measurement_update(state, &proj.c_dot, &r_sd, &residual)?;
    if !updated.is_finite() {
        return Err(FilterError::NonFinite { t_index: 0 });
    }
    Ok((updated, innovation, scale))
}

/// Linear Kalman update against a scalar observation of one state entry.
///
/// Returns the updated state, the innovation v and its variance S_y.
pub fn data_update(
    state: &GaussianState,
    y: f64,
    obs: ObsIndex,
    r_y: f64,
    layout: StateLayout,
) -> Result<(GaussianState, f64, f64), FilterError> {
    if !y.is_finite() {
        return Err(FilterError::NonFinite { t_index: 0 });
    }
    if !(r_y > 0.0) {
        return Err(FilterError::BadInnovationVariance(r_y));
    }
    if obs.block > layout.q || obs.component >= layout.d {
        return Err(FilterError::BadObsIndex { block: obs.block, component: obs.component });
    }
    let idx = layout.index(obs.block, obs.component);
    let n = layout.dim();
    let mut h = DMatrix::zeros(1, n);
    h[(0, idx)] = 1.0;

    let v = y - state.mean[idx];
    let r_sd = DVector::from_element(1, r_y.sqrt());
    let residual = DVector::from_element(1, v);
    let (updated, sy_sqrt) = sqrt_measurement_update(state, &h, &r_sd, &residual)?;
    if !updated.is_finite() {
        return Err(FilterError::NonFinite { t_index: 0 });
    }
    let s_y = sy_sqrt[(0, 0)] * sy_sqrt[(0, 0)];
    Ok((updated, v, s_y))
}

/// Log-likelihood increment of a scalar innovation: minus the energy
/// `phi = (log(2 pi S_y) + v^2 / S_y) / 2`.
pub fn log_lik_increment(v: f64, s_y: f64) -> Result<f64, FilterError> {
    if !(s_y > 0.0) {
        return Err(FilterError::BadInnovationVariance(s_y));
    }
    let phi = 0.5 * (2.0 * std::f64::consts::PI * s_y).ln() + 0.5 * v * v / s_y;
    Ok(-phi)
}

/// One particle's filter, carried across observations so sequential
/// assimilation costs one interval per new observation.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub state: GaussianState,
    pub calib: CalibrationAccumulator,
    pub cum_log_lik: f64,
    /// Index of the last assimilated observation row.
    pub t_index: usize,
}

impl FilterRun {
    pub fn init<F>(
        rhs: F,
        x1: &DVector<f64>,
        u1: f64,
        t1: f64,
        layout: StateLayout,
        cfg: &SolverConfig,
    ) -> Result<Self, FilterError>
    where
        F: Fn(&DVector<f64>, f64, f64) -> RhsResult,
    {
        let state = init_state(rhs, x1, u1, t1, layout, cfg)?;
        Ok(Self {
            state,
            calib: CalibrationAccumulator::new(layout.d),
            cum_log_lik: 0.0,
            t_index: 0,
        })
    }

    /// Current diffusion: the fixed value or the running online estimate.
    pub fn gamma(&self, cfg: &SolverConfig) -> DVector<f64> {
        match &cfg.calibration {
            Calibration::Fixed(g) => g.clone(),
            Calibration::Online => self.calib.estimate(cfg.gamma_init, cfg.gamma_min),
        }
    }

    /// Advance across one observation interval: `n_sub` predict/pseudo-update
    /// substeps, then the data update at the far end.
    ///
    /// Interior substeps hold the previous sample `u_held` (zero-order
    /// hold); the final substep lands on the observation time and uses that
    /// sample's input `u_next`, so the pseudo-measurement conditions the
    /// derivative block on the input actually applied there.
    #[allow(clippy::too_many_arguments)]
    pub fn step<F>(
        &mut self,
        rhs: F,
        builder: &TransitionBuilder,
        proj: &Projections,
        obs: ObsIndex,
        u_held: f64,
        u_next: f64,
        t_prev: f64,
        y_next: f64,
        cfg: &SolverConfig,
        mut sink: Option<&mut Vec<FilterStepRecord>>,
    ) -> Result<DataUpdateRecord, FilterError>
    where
        F: Fn(&DVector<f64>, f64, f64) -> RhsResult,
    {
        let here = |e: FilterError, t_index: usize| match e {
            FilterError::NonFinite { .. } => FilterError::NonFinite { t_index },
            other => other,
        };
        let h = builder.h();
        for j in 1..=cfg.n_sub {
            let gamma = self.gamma(cfg);
            let trans = builder.transition(&gamma)?;
            let predicted = predict(&self.state, &trans);
            let t_j = t_prev + j as f64 * h;
            let u_j = if j == cfg.n_sub { u_next } else { u_held };
            let (updated, innovation, scale) =
                pseudo_update(&predicted, &rhs, u_j, t_j, proj, &gamma, cfg)
                    .map_err(|e| here(e, self.t_index + 1))?;
            self.calib.push(&innovation, scale);
            if let Some(ref mut records) = sink {
                records.push(FilterStepRecord {
                    t_index: self.t_index,
                    time: t_j,
                    pseudo_innovation: innovation,
                    pseudo_scale: scale,
                    data: None,
                });
            }
            self.state = updated;
        }

        let (updated, v, s_y) = data_update(&self.state, y_next, obs, cfg.r_y, proj.layout)
            .map_err(|e| here(e, self.t_index + 1))?;
        self.state = updated;
        let dll = log_lik_increment(v, s_y)?;
        if !dll.is_finite() {
            return Err(FilterError::NonFinite { t_index: self.t_index + 1 });
        }
        self.cum_log_lik += dll;
        self.t_index += 1;
        let record = DataUpdateRecord { innovation: v, variance: s_y, log_lik_increment: dll };
        if let Some(records) = sink {
            if let Some(last) = records.last_mut() {
                if last.t_index + 1 == self.t_index {
                    last.data = Some(record);
                }
            }
        }
        Ok(record)
    }
}

/// Outcome of a full filtering sweep. On failure the partially accumulated
/// records and likelihood are kept and `failure` names the bad step; callers
/// treat the sweep as a rejected parameter rather than an abort.
#[derive(Debug)]
pub struct SolveOutcome {
    pub final_state: GaussianState,
    pub log_lik: f64,
    pub records: Vec<FilterStepRecord>,
    /// Diffusion estimate after each assimilated observation.
    pub gamma_trace: Vec<DVector<f64>>,
    pub failure: Option<String>,
}

impl SolveOutcome {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Filter a uniformly sampled record `(t, u, y)` end to end. Row 0 fixes the
/// initial time and held input; observations from row 1 onward are
/// assimilated. An empty dataset yields the bare initial state.
#[allow(clippy::too_many_arguments)]
pub fn solve_and_score<F>(
    rhs: F,
    x1: &DVector<f64>,
    t: &[f64],
    u: &[f64],
    y: &[f64],
    obs: ObsIndex,
    layout: StateLayout,
    cfg: &SolverConfig,
) -> Result<SolveOutcome, FilterError>
where
    F: Fn(&DVector<f64>, f64, f64) -> RhsResult,
{
    cfg.validate()?;
    assert!(t.len() == u.len() && t.len() == y.len(), "ragged dataset columns");

    let (t1, u1) = if t.is_empty() { (0.0, 0.0) } else { (t[0], u[0]) };
    let mut run = FilterRun::init(&rhs, x1, u1, t1, layout, cfg)?;
    let mut records = Vec::new();
    let mut gamma_trace = Vec::new();

    if t.len() < 2 {
        return Ok(SolveOutcome {
            final_state: run.state,
            log_lik: 0.0,
            records,
            gamma_trace,
            failure: None,
        });
    }

    let dt = t[1] - t[0];
    let builder = TransitionBuilder::new(dt / cfg.n_sub as f64, layout)?;
    let proj = Projections::new(layout)?;

    for k in 1..t.len() {
        let step = run.step(
            &rhs,
            &builder,
            &proj,
            obs,
            u[k - 1],
            u[k],
            t[k - 1],
            y[k],
            cfg,
            Some(&mut records),
        );
        match step {
            Ok(_) => gamma_trace.push(run.gamma(cfg)),
            Err(err) => {
                return Ok(SolveOutcome {
                    final_state: run.state,
                    log_lik: run.cum_log_lik,
                    records,
                    gamma_trace,
                    failure: Some(format!("step {k}: {err}")),
                });
            }
        }
    }

    Ok(SolveOutcome {
        final_state: run.state,
        log_lik: run.cum_log_lik,
        records,
        gamma_trace,
        failure: None,
    })
}
