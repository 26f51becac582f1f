//! Discrete-time transitions of the integrated Wiener process prior.
//!
//! The augmented state stacks a d-dimensional signal and its first q
//! derivatives block-major: all of X(1), then X(2), ... The transition over
//! a step h has closed form A(h) = A1(h) kron I_d and Q(h) = Q1(h) kron
//! Gamma, where Gamma is the per-signal diffusion scale. A1 and Q1 use the
//! 1-based index convention
//!
//!   A1(h)[i,j] = [i <= j] h^(j-i) / (j-i)!
//!   Q1(h)[i,j] = h^(2q+3-i-j) / ((2q+3-i-j) (q+1-i)! (q+1-j)!)
//!
//! evaluated here onto 0-based storage and pinned by tests against an
//! independent evaluation of the same formulas.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IwpError {
    #[error("step size must be nonnegative, got {0}")]
    NegativeStep(f64),
    #[error("diffusion scale must have {expected} nonnegative diagonal entries")]
    BadDiffusion { expected: usize },
    #[error("layout with q = 0 has no derivative block")]
    NoDerivativeBlock,
    #[error("unit-step process noise is not positive definite (q = {q})")]
    UnitNoiseFactorization { q: usize },
}

/// Shape of the augmented state: `d` coupled signals, each with `q` modelled
/// derivatives, stored block-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub d: usize,
    pub q: usize,
}

impl StateLayout {
    pub fn new(d: usize, q: usize) -> Self {
        assert!(d >= 1, "signal dimension must be at least 1");
        Self { d, q }
    }

    /// Augmented dimension d (q + 1).
    pub fn dim(&self) -> usize {
        self.d * (self.q + 1)
    }

    pub fn n_blocks(&self) -> usize {
        self.q + 1
    }

    /// Flat index of `component` within derivative `block`.
    pub fn index(&self, block: usize, component: usize) -> usize {
        debug_assert!(block <= self.q && component < self.d);
        block * self.d + component
    }
}

/// Discrete-time Gauss-Markov transition blocks. `xi` is identically zero
/// for the IWP prior but kept so the filter handles affine transitions.
#[derive(Debug, Clone)]
pub struct GaussMarkovTransition {
    pub a: DMatrix<f64>,
    pub xi: DVector<f64>,
    pub q: DMatrix<f64>,
    /// Upper-triangular right factor S with S^T S = q.
    pub q_sqrt: DMatrix<f64>,
}

/// Per-step transition cache. Everything that depends only on (h, layout) is
/// computed once; the diffusion scale Gamma, which moves with each
/// calibration update, is applied per call as a cheap column scaling.
#[derive(Debug, Clone)]
pub struct TransitionBuilder {
    layout: StateLayout,
    h: f64,
    a_full: DMatrix<f64>,
    q1: DMatrix<f64>,
    /// chol(Q1(1)) right factor, rescaled to step h.
    u1: DMatrix<f64>,
}

impl TransitionBuilder {
    pub fn new(h: f64, layout: StateLayout) -> Result<Self, IwpError> {
        if h < 0.0 || !h.is_finite() {
            return Err(IwpError::NegativeStep(h));
        }
        let b = layout.n_blocks();
        let a1 = a1_matrix(h, b);
        let q1 = q1_matrix(h, layout.q);

        // Q1(h) = T Q1(1) T with T = diag(h^(q + 3/2 - i)), so one Cholesky
        // of the well-scaled unit-step matrix serves every h, including 0.
        let unit = q1_matrix(1.0, layout.q);
        let chol = nalgebra::linalg::Cholesky::new(unit)
            .ok_or(IwpError::UnitNoiseFactorization { q: layout.q })?;
        let mut u1 = chol.l().transpose();
        for j in 0..b {
            let exponent = layout.q as f64 + 1.5 - (j as f64 + 1.0);
            let scale = h.powf(exponent);
            for i in 0..b {
                u1[(i, j)] *= scale;
            }
        }

        let a_full = a1.kronecker(&DMatrix::identity(layout.d, layout.d));
        Ok(Self { layout, h, a_full, q1, u1 })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    /// Assemble the transition for a diagonal diffusion scale `gamma`
    /// (natural-variance units, one entry per signal dimension).
    pub fn transition(&self, gamma: &DVector<f64>) -> Result<GaussMarkovTransition, IwpError> {
        let d = self.layout.d;
        if gamma.len() != d || gamma.iter().any(|&g| g < 0.0 || !g.is_finite()) {
            return Err(IwpError::BadDiffusion { expected: d });
        }
        let n = self.layout.dim();
        let b = self.layout.n_blocks();

        let mut q = DMatrix::zeros(n, n);
        let mut q_sqrt = DMatrix::zeros(n, n);
        for bi in 0..b {
            for bj in 0..b {
                for c in 0..d {
                    q[(bi * d + c, bj * d + c)] = self.q1[(bi, bj)] * gamma[c];
                    q_sqrt[(bi * d + c, bj * d + c)] = self.u1[(bi, bj)] * gamma[c].sqrt();
                }
            }
        }
        Ok(GaussMarkovTransition {
            a: self.a_full.clone(),
            xi: DVector::zeros(n),
            q,
            q_sqrt,
        })
    }
}

/// One-shot transition construction for step `h` and diffusion `gamma`.
pub fn build_transition(
    h: f64,
    layout: StateLayout,
    gamma: &DVector<f64>,
) -> Result<GaussMarkovTransition, IwpError> {
    TransitionBuilder::new(h, layout)?.transition(gamma)
}

/// Selector matrices (C, Cdot) extracting the solution block and its first
/// derivative block from the augmented state.
pub fn projections(layout: StateLayout) -> Result<(DMatrix<f64>, DMatrix<f64>), IwpError> {
    if layout.q < 1 {
        return Err(IwpError::NoDerivativeBlock);
    }
    let (d, n) = (layout.d, layout.dim());
    let mut c = DMatrix::zeros(d, n);
    let mut c_dot = DMatrix::zeros(d, n);
    for i in 0..d {
        c[(i, i)] = 1.0;
        c_dot[(i, d + i)] = 1.0;
    }
    Ok((c, c_dot))
}

fn a1_matrix(h: f64, blocks: usize) -> DMatrix<f64> {
    DMatrix::from_fn(blocks, blocks, |i0, j0| {
        let (i, j) = (i0 + 1, j0 + 1);
        if i <= j {
            h.powi((j - i) as i32) / factorial(j - i)
        } else {
            0.0
        }
    })
}

fn q1_matrix(h: f64, q: usize) -> DMatrix<f64> {
    let blocks = q + 1;
    DMatrix::from_fn(blocks, blocks, |i0, j0| {
        let (i, j) = (i0 + 1, j0 + 1);
        let p = 2 * q + 3 - i - j;
        h.powi(p as i32) / (p as f64 * factorial(q + 1 - i) * factorial(q + 1 - j))
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}
