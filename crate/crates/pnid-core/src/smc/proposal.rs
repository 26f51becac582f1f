//! Gaussian proposal fitted to the weighted particle cloud.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::normalized_weights;

/// Diagonal floor applied to the fitted covariance before factorization.
pub const PROPOSAL_JITTER: f64 = 1e-10;

/// Independent MH proposal: a Gaussian at the weighted mean and covariance
/// of the particle system (sampling space).
#[derive(Debug, Clone)]
pub struct GaussianProposal {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianProposal {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol_lower * z
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let centered = x - &self.mean;
        let solved = self
            .chol_lower
            .solve_lower_triangular(&centered)
            .expect("proposal factor is nonsingular by construction");
        self.log_norm - 0.5 * solved.norm_squared()
    }
}

/// Weighted mean and covariance of the cloud (population weighting), the
/// covariance symmetrized, floored on the diagonal and inflated. Returns
/// `None` when the result cannot be factorized.
pub fn fit_proposal(
    particles: &[DVector<f64>],
    log_weights: &[f64],
    inflation: f64,
) -> Option<GaussianProposal> {
    assert_eq!(particles.len(), log_weights.len());
    let weights = normalized_weights(log_weights);
    let p = particles.first()?.len();

    let mut mean = DVector::zeros(p);
    for (w, theta) in weights.iter().zip(particles) {
        mean += theta * *w;
    }
    let mut cov = DMatrix::zeros(p, p);
    for (w, theta) in weights.iter().zip(particles) {
        let centered = theta - &mean;
        cov += (&centered * centered.transpose()) * *w;
    }
    cov = (&cov + cov.transpose()) * 0.5;
    for i in 0..p {
        cov[(i, i)] += PROPOSAL_JITTER;
    }
    cov *= inflation;

    let chol = nalgebra::linalg::Cholesky::new(cov.clone())?;
    let chol_lower = chol.l();
    let log_det: f64 = (0..p).map(|i| chol_lower[(i, i)].ln()).sum::<f64>() * 2.0;
    let log_norm = -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
    Some(GaussianProposal { mean, cov, chol_lower, log_norm })
}
