//! The affine matrix pencil behind pairwise intersection candidates.
//!
//! Stationarity of `f_i` on the intersection `{f_i = f_j}` reads
//! `M(lambda) beta = C(lambda)` with `M` and `C` affine in the multiplier.
//! The polynomial `det(M(lambda))^2 * g_ij(beta(lambda))` shares its roots
//! with the gap along the stationary path, so its real roots parameterize
//! every intersection candidate. The polynomial is realized numerically by
//! interpolation: a symbolic cofactor expansion costs `O(p! p^2)` while
//! `2p + 3` determinant evaluations are enough, and the roots agree by
//! construction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly::{interpolate_poly, real_roots, Polynomial, RootPipelineOptions};
use crate::risk::{eval_form, eval_gap, gradient, QuadraticForm, SignClass};
use crate::Tolerances;

/// `M(t) = M0 + t M1`, `C(t) = C0 + t C1`, derived from the pair `(i, j)`.
///
/// For a non-negative row `i`: `M0 = A_i`, `M1 = -(A_i - A_j)`, `C0 = b_i`,
/// `C1 = -(b_i - b_j)`; for a non-positive row the sign of the `t` terms
/// flips. `multiplier_sign` maps the pencil parameter `t` to the Lagrange
/// multiplier `lambda` with `grad f_i = lambda * grad g_ij`.
#[derive(Debug, Clone)]
pub struct MatrixPencil {
    pub m0: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub c0: DVector<f64>,
    pub c1: DVector<f64>,
    pub source: (usize, usize),
    pub multiplier_sign: f64,
}

impl MatrixPencil {
    pub fn dim(&self) -> usize {
        self.m0.nrows()
    }

    pub fn m_at(&self, t: f64) -> DMatrix<f64> {
        &self.m0 + &self.m1 * t
    }

    pub fn c_at(&self, t: f64) -> DVector<f64> {
        &self.c0 + &self.c1 * t
    }
}

pub fn build_pencil(
    qf_i: &QuadraticForm,
    qf_j: &QuadraticForm,
    i: usize,
    j: usize,
) -> Result<MatrixPencil> {
    if qf_i.p() != qf_j.p() {
        return Err(Error::DimensionMismatch(format!(
            "forms have dimensions {} and {}",
            qf_i.p(),
            qf_j.p()
        )));
    }
    if i == j {
        return Err(Error::DataValidation(
            "self-pairs have an identically zero gap".into(),
        ));
    }
    let da = &qf_i.a - &qf_j.a;
    let db = &qf_i.b - &qf_j.b;
    let (sign, multiplier_sign) = match qf_i.sign_class {
        SignClass::NonNegative => (-1.0, 1.0),
        SignClass::NonPositive => (1.0, -1.0),
    };
    Ok(MatrixPencil {
        m0: qf_i.a.clone(),
        m1: da * sign,
        c0: qf_i.b.clone(),
        c1: db * sign,
        source: (i, j),
        multiplier_sign,
    })
}

fn chebyshev_nodes(count: usize, radius: f64) -> Vec<f64> {
    (0..count)
        .map(|k| {
            radius * (std::f64::consts::PI * (2.0 * k as f64 + 1.0) / (2.0 * count as f64)).cos()
        })
        .collect()
}

/// Node span for interpolation, balancing the constant and linear parts of
/// the pencil so determinant values stay in a sane range.
fn node_radius(pencil: &MatrixPencil) -> f64 {
    let n0 = pencil.m0.norm() + pencil.c0.norm();
    let n1 = pencil.m1.norm() + pencil.c1.norm();
    if n1 <= f64::MIN_POSITIVE {
        return 1.0;
    }
    (n0 / n1).clamp(1.0, 100.0)
}

/// `lambda -> det(M0 + lambda M1)` as a polynomial of degree at most `p`,
/// built from `p + 1` Chebyshev nodes.
pub fn det_poly(pencil: &MatrixPencil, eps_trim: f64) -> Polynomial {
    let p = pencil.dim();
    let radius = node_radius(pencil);
    let nodes: Vec<(f64, f64)> = chebyshev_nodes(p + 1, radius)
        .into_iter()
        .map(|t| (t, pencil.m_at(t).lu().determinant()))
        .collect();
    interpolate_poly(&nodes, p, eps_trim).expect("Chebyshev nodes are distinct")
}

/// Solve `M(t) beta = C(t)` behind the scaled singularity guard
/// `|det M(t)| > tau_sing * ||M(t)||^p`; returns the solution and its
/// residual norm.
pub fn beta_of_lambda(
    pencil: &MatrixPencil,
    t: f64,
    tau_sing: f64,
) -> Result<(DVector<f64>, f64)> {
    let m = pencil.m_at(t);
    let c = pencil.c_at(t);
    let p = pencil.dim();
    let lu = m.clone().lu();
    let det = lu.determinant();
    if det.abs() <= tau_sing * m.norm().powi(p as i32) {
        return Err(Error::NearSingular { lambda: t });
    }
    let beta = lu
        .solve(&c)
        .ok_or(Error::NearSingular { lambda: t })?;
    let residual = (&m * &beta - &c).norm();
    Ok((beta, residual))
}

/// `lambda -> det(M(lambda))^2 g_ij(beta(lambda))`, interpolated on nodes
/// that pass the singularity guard (degree bound `2p + 2`), then trimmed.
pub fn ptilde(
    pencil: &MatrixPencil,
    qf_i: &QuadraticForm,
    qf_j: &QuadraticForm,
    tol: &Tolerances,
) -> Result<Polynomial> {
    let p = pencil.dim();
    if det_poly(pencil, tol.eps_trim).is_zero() {
        return Err(Error::DegenerateInstance(
            "pencil determinant vanishes identically".into(),
        ));
    }
    let degree_bound = 2 * p + 2;
    let required = 2 * p + 3;
    let radius = node_radius(pencil);
    let pool = chebyshev_nodes(10 * required, radius);
    // Visit the pool strided so the first `required` candidates span the
    // whole interval; a narrow node span would amplify the recomposition of
    // high-degree coefficients past the trim threshold.
    let stride = 10;
    let ordered = (0..stride).flat_map(|offset| {
        pool.iter().skip(offset).step_by(stride).copied().collect::<Vec<_>>()
    });
    let mut nodes = Vec::with_capacity(required);
    for t in ordered {
        if nodes.len() == required {
            break;
        }
        let m = pencil.m_at(t);
        let lu = m.clone().lu();
        let det = lu.determinant();
        if det.abs() <= tol.tau_sing * m.norm().powi(p as i32) {
            continue;
        }
        if let Some(beta) = lu.solve(&pencil.c_at(t)) {
            let value = det * det * eval_gap(qf_i, qf_j, &beta);
            nodes.push((t, value));
        }
    }
    if nodes.len() < required {
        return Err(Error::TooManySingularNodes {
            clean: nodes.len(),
            required,
        });
    }
    interpolate_poly(&nodes, degree_bound, tol.eps_trim)
}

/// Range `(inf, sup)` of the quadratic gap `g_ij` over all of `R^p`,
/// computed from the eigendecomposition of its curvature.
pub fn gap_range(qf_i: &QuadraticForm, qf_j: &QuadraticForm) -> (f64, f64) {
    let d = &qf_i.a - &qf_j.a;
    let e = &qf_i.b - &qf_j.b;
    let h = qf_i.c - qf_j.c;
    let eig = d.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let coords = eig.eigenvectors.transpose() * &e;
    let (mut inf, mut sup) = (h, h);
    for (idx, &mu) in eig.eigenvalues.iter().enumerate() {
        let el = coords[idx];
        if mu.abs() <= 1e-12 * scale {
            if el.abs() > 1e-12 * (1.0 + e.norm()) {
                // Linear direction: unbounded both ways.
                inf = f64::NEG_INFINITY;
                sup = f64::INFINITY;
            }
        } else if mu > 0.0 {
            sup = f64::INFINITY;
            inf -= el * el / mu;
        } else {
            inf = f64::NEG_INFINITY;
            sup -= el * el / mu;
        }
    }
    (inf, sup)
}

/// `|| grad f_i(beta) - lambda grad g_ij(beta) ||` for the sign-adjusted
/// multiplier; zero at exact stationary points.
pub fn stationarity_residual(
    qf_i: &QuadraticForm,
    qf_j: &QuadraticForm,
    beta: &DVector<f64>,
    multiplier: f64,
) -> f64 {
    let gi = gradient(qf_i, beta);
    let gj = gradient(qf_j, beta);
    let gap_grad = &gi - &gj;
    (gi - gap_grad * multiplier).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairFlag {
    /// `g_ij` vanishes along the whole stationary path.
    IdenticalForms,
    /// All candidate roots were rejected although the gap does change sign
    /// somewhere, so the constrained infimum may not be attained.
    NonAttainedInfimum,
}

#[derive(Debug, Clone)]
pub enum RejectReason {
    NearSingular { det: f64 },
    ResidualTooLarge { residual: f64 },
    GapTooLarge { gap: f64 },
}

#[derive(Debug, Clone)]
pub struct RejectedRoot {
    pub lambda: f64,
    pub reason: RejectReason,
}

/// One real root of the gap polynomial that survived all filters.
#[derive(Debug, Clone)]
pub struct KeptRoot {
    /// Pencil parameter (the root of the interpolated polynomial).
    pub lambda: f64,
    /// Sign-adjusted Lagrange multiplier: `grad f_i = multiplier * grad g_ij`.
    pub multiplier: f64,
    pub beta: DVector<f64>,
    pub residual: f64,
    pub gap: f64,
    /// `f_i(beta)`, the quantity minimized over the roots.
    pub f_value_i: f64,
}

#[derive(Debug, Clone)]
pub struct IntersectionSolveResult {
    pub pair: (usize, usize),
    pub kept: Vec<KeptRoot>,
    pub rejected: Vec<RejectedRoot>,
    /// Indices into `kept` minimizing `f_i` within the tie tolerance; this
    /// is the pair's contribution to the candidate set.
    pub selected: Vec<usize>,
    pub flags: Vec<PairFlag>,
    /// Coefficients of the interpolated gap polynomial (diagnostics).
    pub ptilde_coeffs: Vec<f64>,
}

/// Options for the intersection pipeline.
#[derive(Debug, Clone, Copy)]
pub struct PencilOptions {
    pub tol: Tolerances,
    pub roots: RootPipelineOptions,
}

impl Default for PencilOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            roots: RootPipelineOptions::default(),
        }
    }
}

/// Full pairwise pipeline: pencil, gap polynomial, root isolation and
/// bisection, `beta` recovery, residual/gap filters, argmin selection.
pub fn intersection_candidates(
    qf_i: &QuadraticForm,
    qf_j: &QuadraticForm,
    i: usize,
    j: usize,
    opts: &PencilOptions,
) -> Result<IntersectionSolveResult> {
    let pencil = build_pencil(qf_i, qf_j, i, j)?;
    let pt = ptilde(&pencil, qf_i, qf_j, &opts.tol)?;
    let mut result = IntersectionSolveResult {
        pair: (i, j),
        kept: Vec::new(),
        rejected: Vec::new(),
        selected: Vec::new(),
        flags: Vec::new(),
        ptilde_coeffs: pt.coeffs().to_vec(),
    };
    if pt.is_zero() {
        result.flags.push(PairFlag::IdenticalForms);
        return Ok(result);
    }
    if pt.degree() == Some(0) {
        // Nonzero constant: the gap never vanishes on the stationary path.
        return Ok(result);
    }
    let roots = real_roots(&pt, &opts.roots)?;
    for t in roots {
        match beta_of_lambda(&pencil, t, opts.tol.tau_sing) {
            Err(Error::NearSingular { .. }) => {
                let det = pencil.m_at(t).lu().determinant();
                result.rejected.push(RejectedRoot {
                    lambda: t,
                    reason: RejectReason::NearSingular { det },
                });
            }
            Err(e) => return Err(e),
            Ok((beta, residual)) => {
                let c_norm = pencil.c_at(t).norm();
                if residual > opts.tol.tau_lin * (1.0 + c_norm) {
                    result.rejected.push(RejectedRoot {
                        lambda: t,
                        reason: RejectReason::ResidualTooLarge { residual },
                    });
                    continue;
                }
                let gap = eval_gap(qf_i, qf_j, &beta);
                let f_value_i = eval_form(qf_i, &beta);
                if gap.abs() > opts.tol.tau_gap * (1.0 + f_value_i.abs()) {
                    result.rejected.push(RejectedRoot {
                        lambda: t,
                        reason: RejectReason::GapTooLarge { gap },
                    });
                    continue;
                }
                result.kept.push(KeptRoot {
                    lambda: t,
                    multiplier: pencil.multiplier_sign * t,
                    beta,
                    residual,
                    gap,
                    f_value_i,
                });
            }
        }
    }
    if !result.kept.is_empty() {
        let min = result
            .kept
            .iter()
            .map(|k| k.f_value_i)
            .fold(f64::INFINITY, f64::min);
        let tie = opts.tol.tie_rel * (1.0 + min.abs());
        result.selected = result
            .kept
            .iter()
            .enumerate()
            .filter(|(_, k)| k.f_value_i <= min + tie)
            .map(|(idx, _)| idx)
            .collect();
    }
    if result.selected.is_empty() {
        let (inf, sup) = gap_range(qf_i, qf_j);
        if inf < 0.0 && sup > 0.0 {
            result.flags.push(PairFlag::NonAttainedInfimum);
        }
    }
    Ok(result)
}
