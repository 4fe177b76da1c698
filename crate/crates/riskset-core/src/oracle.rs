//! Brute-force reference minimizers, used to validate the solver at desk
//! scale. Never part of the production path.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::risk::{gradient, QuadraticForm, SignClass};
use crate::solver::inflexion_point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Grid,
    Subgradient,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub beta: DVector<f64>,
    pub value: f64,
    pub method: OracleMethod,
    /// Best point landed on the search-box boundary.
    pub boundary_hit: bool,
    /// Lattice points per axis (grid) or iterations (subgradient).
    pub resolution: usize,
}

/// Axis-aligned search region.
#[derive(Debug, Clone)]
pub struct SearchBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl SearchBox {
    pub fn cube(p: usize, radius: f64) -> Self {
        Self {
            lo: DVector::from_element(p, -radius),
            hi: DVector::from_element(p, radius),
        }
    }

    fn center(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    fn half_widths(&self) -> DVector<f64> {
        (&self.hi - &self.lo) * 0.5
    }
}

/// Default box: ball of radius `2 * max inflexion norm + 1`, which contains
/// the argmin for coercive instances.
pub fn default_box(qfs: &[QuadraticForm], tau_sing: f64) -> SearchBox {
    let p = qfs[0].p();
    let mut max_norm = 0.0_f64;
    for qf in qfs {
        if let Ok(x) = inflexion_point(qf, tau_sing) {
            max_norm = max_norm.max(x.norm());
        }
    }
    SearchBox::cube(p, 2.0 * max_norm + 1.0)
}

/// Allocation-free evaluation of `max_i f_i` at a lattice point.
fn max_value(qfs: &[QuadraticForm], beta: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for qf in qfs {
        let p = beta.len();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for r in 0..p {
            let mut row = 0.0;
            for c in 0..p {
                row += qf.a[(r, c)] * beta[c];
            }
            quad += beta[r] * row;
            lin += beta[r] * qf.b[r];
        }
        let v = quad - 2.0 * lin + qf.c;
        if v > best {
            best = v;
        }
    }
    best
}

/// Exhaustive evaluation on the lattice; ties keep the first point in
/// row-major order, so the result is deterministic.
pub fn grid_minimize(
    qfs: &[QuadraticForm],
    search: &SearchBox,
    resolution: usize,
) -> Result<OracleResult> {
    let p = qfs[0].p();
    if p > 3 {
        return Err(Error::CostGuard(format!("grid oracle limited to p <= 3, got {p}")));
    }
    if resolution < 2 {
        return Err(Error::CostGuard("grid resolution must be at least 2".into()));
    }
    let total = (resolution as u64).pow(p as u32);
    if total > (1 << 31) {
        return Err(Error::CostGuard(format!("grid of {total} points exceeds the cost cap")));
    }
    let steps: Vec<f64> = (0..p)
        .map(|d| (search.hi[d] - search.lo[d]) / (resolution - 1) as f64)
        .collect();
    let mut idx = vec![0_usize; p];
    let mut beta = vec![0.0_f64; p];
    let mut best_value = f64::INFINITY;
    let mut best_idx = vec![0_usize; p];
    loop {
        for d in 0..p {
            beta[d] = search.lo[d] + steps[d] * idx[d] as f64;
        }
        let v = max_value(qfs, &beta);
        if v < best_value {
            best_value = v;
            best_idx.copy_from_slice(&idx);
        }
        // Odometer increment, last axis fastest.
        let mut d = p;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < resolution {
                break;
            }
            idx[d] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
    }
    let boundary_hit = best_idx.iter().any(|&i| i == 0 || i == resolution - 1);
    let beta = DVector::from_fn(p, |d, _| search.lo[d] + steps[d] * best_idx[d] as f64);
    Ok(OracleResult {
        value: best_value,
        beta,
        method: OracleMethod::Grid,
        boundary_hit,
        resolution,
    })
}

/// Iterated grid refinement: recenter and halve the box around the round's
/// best point; a boundary hit doubles the box instead (the minimizer of a
/// convex objective escapes only through the boundary). Suitable for convex
/// instances where high accuracy is required of the oracle.
pub fn grid_minimize_refined(
    qfs: &[QuadraticForm],
    search: &SearchBox,
    resolution: usize,
    rounds: usize,
) -> Result<OracleResult> {
    let mut current = search.clone();
    let mut best: Option<OracleResult> = None;
    let mut shrinks = 0;
    let mut expansions = 0;
    while shrinks < rounds && expansions < 24 {
        let round = grid_minimize(qfs, &current, resolution)?;
        let center = round.beta.clone();
        let half = current.half_widths();
        if round.boundary_hit {
            expansions += 1;
            let c = current.center();
            current = SearchBox { lo: &c - &half * 2.0, hi: &c + &half * 2.0 };
        } else {
            shrinks += 1;
            current = SearchBox { lo: &center - &half * 0.5, hi: &center + &half * 0.5 };
        }
        if best.as_ref().is_none_or(|b| round.value < b.value) {
            best = Some(round);
        }
    }
    best.ok_or_else(|| Error::CostGuard("grid refinement performed no rounds".into()))
}

/// Step-size schedule for the subgradient oracle.
#[derive(Debug, Clone, Copy)]
pub enum StepRule {
    /// `alpha_t = alpha0 / sqrt(t + 1)`.
    InvSqrt { alpha0: f64 },
    /// Constant within an epoch, decaying geometrically across epochs;
    /// reaches much higher accuracy on strongly convex instances.
    GeometricEpochs { alpha0: f64, decay: f64, epoch_len: usize },
}

/// Subgradient descent on `max_i f_i`; valid only when every row is
/// non-negative, so the objective is convex. Returns the best iterate.
pub fn subgradient_minimize(
    qfs: &[QuadraticForm],
    start: &DVector<f64>,
    steps: usize,
    rule: StepRule,
) -> Result<OracleResult> {
    if qfs.iter().any(|qf| qf.sign_class != SignClass::NonNegative) {
        return Err(Error::OracleUnavailable(
            "subgradient oracle requires all rows non-negative (convex objective)".into(),
        ));
    }
    let mut beta = start.clone();
    let mut best_beta = beta.clone();
    let mut best_value = max_value(qfs, beta.as_slice());
    for t in 0..steps {
        // Active index: first form attaining the max.
        let mut active = 0;
        let mut value = f64::NEG_INFINITY;
        for (i, _) in qfs.iter().enumerate() {
            let v = {
                let ab = &qfs[i].a * &beta;
                beta.dot(&ab) - 2.0 * beta.dot(&qfs[i].b) + qfs[i].c
            };
            if v > value {
                value = v;
                active = i;
            }
        }
        if value < best_value {
            best_value = value;
            best_beta.copy_from(&beta);
        }
        let alpha = match rule {
            StepRule::InvSqrt { alpha0 } => alpha0 / ((t + 1) as f64).sqrt(),
            StepRule::GeometricEpochs { alpha0, decay, epoch_len } => {
                alpha0 * decay.powi((t / epoch_len.max(1)) as i32)
            }
        };
        let g = gradient(&qfs[active], &beta);
        beta -= g * alpha;
    }
    let final_value = max_value(qfs, beta.as_slice());
    if final_value < best_value {
        best_value = final_value;
        best_beta.copy_from(&beta);
    }
    Ok(OracleResult {
        beta: best_beta,
        value: best_value,
        method: OracleMethod::Subgradient,
        boundary_hit: false,
        resolution: steps,
    })
}
