//! QR-based square-root Kalman kernels.
//!
//! Covariance factors are upper-triangular right factors: `cov = S^T S`.
//! Prediction stacks `[S A^T; Q_sqrt]` and re-triangularizes; the
//! measurement update triangularizes the joint pre-array
//!
//! ```text
//! [ R_sqrt     0 ]        [ S_y_sqrt   *  ]
//! [ S H^T      S ]   ->   [ 0          S' ]
//! ```
//!
//! whose post-array carries the innovation factor, the gain and the updated
//! covariance factor in one decomposition.

use nalgebra::{DMatrix, DVector};

use super::{FilterError, GaussianState};
use crate::iwp::GaussMarkovTransition;

/// Upper-triangular R factor of a QR decomposition, rows sign-normalized to
/// a nonnegative diagonal so factors are deterministic.
pub fn qr_right_factor(pre: DMatrix<f64>) -> DMatrix<f64> {
    let ncols = pre.ncols();
    let qr = pre.qr();
    let mut r = qr.r().rows(0, ncols).into_owned();
    for i in 0..ncols.min(r.nrows()) {
        if r[(i, i)] < 0.0 {
            for j in 0..ncols {
                r[(i, j)] = -r[(i, j)];
            }
        }
    }
    r
}

/// Linear prediction `mean -> A mean + xi`, covariance `A cov A^T + Q`,
/// propagated entirely in square-root form.
pub fn predict(state: &GaussianState, trans: &GaussMarkovTransition) -> GaussianState {
    let n = state.dim();
    let mean = &trans.a * &state.mean + &trans.xi;
    let mut pre = DMatrix::zeros(2 * n, n);
    pre.view_mut((0, 0), (n, n))
        .copy_from(&(&state.cov_sqrt * trans.a.transpose()));
    pre.view_mut((n, 0), (n, n)).copy_from(&trans.q_sqrt);
    GaussianState { mean, cov_sqrt: qr_right_factor(pre) }
}

/// Joint square-root measurement update for observation matrix `h` (m x n),
/// noise standard deviations `r_sd` (diagonal) and residual `z - H mean`.
///
/// Returns the updated state and the m x m upper factor of the innovation
/// covariance `H cov H^T + R`.
pub fn sqrt_measurement_update(
    state: &GaussianState,
    h: &DMatrix<f64>,
    r_sd: &DVector<f64>,
    residual: &DVector<f64>,
) -> Result<(GaussianState, DMatrix<f64>), FilterError> {
    let n = state.dim();
    let m = h.nrows();
    debug_assert_eq!(h.ncols(), n);
    debug_assert_eq!(r_sd.len(), m);
    debug_assert_eq!(residual.len(), m);

    let mut pre = DMatrix::zeros(m + n, m + n);
    for i in 0..m {
        pre[(i, i)] = r_sd[i];
    }
    pre.view_mut((m, 0), (n, m)).copy_from(&(&state.cov_sqrt * h.transpose()));
    pre.view_mut((m, m), (n, n)).copy_from(&state.cov_sqrt);

    let post = qr_right_factor(pre);
    let sy_sqrt = post.view((0, 0), (m, m)).into_owned();
    let u12 = post.view((0, m), (m, n)).into_owned();
    let cov_sqrt = post.view((m, m), (n, n)).into_owned();

    for i in 0..m {
        if !(sy_sqrt[(i, i)] > f64::MIN_POSITIVE.sqrt()) {
            return Err(FilterError::SingularInnovation);
        }
    }

    // Gain K = cov H^T S_y^-1 = (U11^-1 U12)^T, via one triangular solve.
    let solved = sy_sqrt
        .solve_upper_triangular(&u12)
        .ok_or(FilterError::SingularInnovation)?;
    let gain = solved.transpose();

    let mean = &state.mean + gain * residual;
    Ok((GaussianState { mean, cov_sqrt }, sy_sqrt))
}
