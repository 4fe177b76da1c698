//! Estimation of the full argmin solution set of
//! `f(beta) = max_i (kappa_i + sum_u w_i(u) R_u(beta))`,
//! where `R_u` is the quadratic regression risk of environment `u`.
//!
//! The library is moment-driven: raw samples are reduced to per-environment
//! second moments ([`moments`]), each affine combination becomes an explicit
//! quadratic form ([`risk`]), and the candidate minimizers are enumerated
//! constructively ([`solver`]): one inflexion point per form plus, for every
//! pair of forms, the stationary points of one form restricted to the
//! intersection with the other. The pairwise candidates come from a matrix
//! pencil whose determinant-weighted gap polynomial is isolated and bisected
//! by the [`poly`] toolkit ([`pencil`]).
//!
//! Brute-force reference minimizers live in [`oracle`], a shifted-SEM data
//! simulator in [`sem`], and a Monte Carlo convergence harness in
//! [`consistency`].

pub mod consistency;
pub mod error;
pub mod moments;
pub mod oracle;
pub mod pencil;
pub mod poly;
pub mod risk;
pub mod sem;
pub mod solver;

pub use error::{Error, Result};

/// Numeric tolerances shared across the pipeline.
///
/// All `*_rel` values are relative: a quantity `q` is compared against
/// `tol * (1 + scale)` where `scale` is the natural magnitude of the
/// surrounding computation.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Tie tolerance for membership in the active set of the max.
    pub tau_active: f64,
    /// Scaled singularity guard for pencil/inflexion solves.
    pub tau_sing: f64,
    /// Linear-system residual bound for kept intersection roots.
    pub tau_lin: f64,
    /// Gap bound `|g_ij(beta)|` for kept intersection roots.
    pub tau_gap: f64,
    /// Relative coefficient trim threshold for interpolated polynomials.
    pub eps_trim: f64,
    /// Tie tolerance when selecting argmin candidates.
    pub tie_rel: f64,
    /// Candidate deduplication radius (relative).
    pub dedup_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tau_active: 1e-9,
            tau_sing: 1e-10,
            tau_lin: 1e-7,
            tau_gap: 1e-7,
            eps_trim: 1e-9,
            tie_rel: 1e-9,
            dedup_rel: 1e-8,
        }
    }
}
