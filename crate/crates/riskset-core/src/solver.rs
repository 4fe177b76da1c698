//! Candidate assembly and argmin-set selection.
//!
//! The full candidate vector holds one inflexion point per form followed by
//! the pairwise intersection argmins ordered lexicographically by pair and
//! then by coordinates. A candidate is admissible when its defining form
//! attains the max at the candidate; the chosen set are the admissible
//! argmins within a tie tolerance, and the epsilon set everything admissible
//! within `epsilon` of the minimum.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::pencil::{intersection_candidates, PairFlag, PencilOptions, RejectReason};
use crate::poly::RootPipelineOptions;
use crate::risk::{eval_max, gradient, QuadraticForm};
use crate::Tolerances;

#[derive(Debug, Clone)]
pub enum CandidateSource {
    Inflexion { form: usize },
    Intersection { i: usize, j: usize, lambda: f64 },
}

impl CandidateSource {
    /// Indices whose forms define this candidate; admissibility requires one
    /// of them to attain the max.
    fn defining(&self) -> Vec<usize> {
        match self {
            CandidateSource::Inflexion { form } => vec![*form],
            CandidateSource::Intersection { i, j, .. } => vec![*i, *j],
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidatePoint {
    pub beta: DVector<f64>,
    pub source: CandidateSource,
    /// Sources of duplicates merged into this candidate.
    pub merged: Vec<CandidateSource>,
    /// `max_i f_i(beta)`, recomputed at assembly time.
    pub f_value: f64,
    pub active: Vec<usize>,
    pub admissible: bool,
}

/// Per-pair outcome recorded in the report.
#[derive(Debug, Clone)]
pub struct PairDiagnostics {
    pub pair: (usize, usize),
    pub kept: usize,
    pub rejected: Vec<(f64, String)>,
    pub selected: usize,
    pub flags: Vec<PairFlag>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub pairs: Vec<PairDiagnostics>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolutionReport {
    pub candidates: Vec<CandidatePoint>,
    /// Indices into `candidates`.
    pub chosen: Vec<usize>,
    pub epsilon_set: Vec<usize>,
    pub min_value: Option<f64>,
    /// Effective epsilon used for the epsilon set.
    pub epsilon: Option<f64>,
    /// Set when no admissible candidate exists (degenerate instance).
    pub degenerate: Option<String>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: Tolerances,
    pub roots: RootPipelineOptions,
    /// Epsilon for the near-minimal candidate set; defaults to
    /// `1e-6 * (1 + |min|)`.
    pub epsilon: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            roots: RootPipelineOptions::default(),
            epsilon: None,
        }
    }
}

impl SolverOptions {
    fn pencil(&self) -> PencilOptions {
        PencilOptions { tol: self.tol, roots: self.roots }
    }
}

/// Unconstrained stationary point of one form: solve `A beta = b` behind a
/// scaled invertibility guard.
pub fn inflexion_point(qf: &QuadraticForm, tau_sing: f64) -> Result<DVector<f64>> {
    let p = qf.p();
    let lu = qf.a.clone().lu();
    let det = lu.determinant();
    if det.abs() <= tau_sing * qf.a.norm().powi(p as i32) {
        return Err(Error::SingularForm(format!(
            "form matrix numerically singular (det = {det:.3e})"
        )));
    }
    lu.solve(&qf.b)
        .ok_or_else(|| Error::SingularForm("form matrix solve failed".into()))
}

fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for idx in 0..a.len() {
        if a[idx] != b[idx] {
            return a[idx] < b[idx];
        }
    }
    false
}

fn reject_reason_string(reason: &RejectReason) -> String {
    match reason {
        RejectReason::NearSingular { det } => format!("near-singular (det = {det:.3e})"),
        RejectReason::ResidualTooLarge { residual } => {
            format!("residual too large ({residual:.3e})")
        }
        RejectReason::GapTooLarge { gap } => format!("gap too large ({gap:.3e})"),
    }
}

/// Enumerate all candidates: one inflexion per form (singular forms are
/// skipped with a warning), then each pair's intersection argmins. Failures
/// are recorded per pair without aborting the others.
pub fn assemble_candidates(
    qfs: &[QuadraticForm],
    opts: &SolverOptions,
) -> (Vec<CandidatePoint>, Diagnostics) {
    let m = qfs.len();
    let mut diagnostics = Diagnostics::default();
    let mut raw: Vec<(CandidateSource, DVector<f64>)> = Vec::new();

    for (i, qf) in qfs.iter().enumerate() {
        match inflexion_point(qf, opts.tol.tau_sing) {
            Ok(beta) => raw.push((CandidateSource::Inflexion { form: i }, beta)),
            Err(e) => diagnostics
                .warnings
                .push(format!("inflexion of form {i} skipped: {e}")),
        }
    }

    let pencil_opts = opts.pencil();
    for i in 0..m {
        for j in (i + 1)..m {
            match intersection_candidates(&qfs[i], &qfs[j], i, j, &pencil_opts) {
                Ok(result) => {
                    let mut picks: Vec<usize> = result.selected.clone();
                    // The paper's candidate vector orders each pair's
                    // contributions lexicographically.
                    picks.sort_by(|&a, &b| {
                        if lex_less(&result.kept[a].beta, &result.kept[b].beta) {
                            std::cmp::Ordering::Less
                        } else {
                            std::cmp::Ordering::Greater
                        }
                    });
                    for idx in &picks {
                        let k = &result.kept[*idx];
                        raw.push((
                            CandidateSource::Intersection { i, j, lambda: k.multiplier },
                            k.beta.clone(),
                        ));
                    }
                    diagnostics.pairs.push(PairDiagnostics {
                        pair: (i, j),
                        kept: result.kept.len(),
                        rejected: result
                            .rejected
                            .iter()
                            .map(|r| (r.lambda, reject_reason_string(&r.reason)))
                            .collect(),
                        selected: result.selected.len(),
                        flags: result.flags,
                        error: None,
                    });
                }
                Err(e) => diagnostics.pairs.push(PairDiagnostics {
                    pair: (i, j),
                    kept: 0,
                    rejected: Vec::new(),
                    selected: 0,
                    flags: Vec::new(),
                    error: Some(e.to_string()),
                }),
            }
        }
    }

    // Evaluate, mark admissibility, and merge duplicates (keeping the
    // earliest source). A merged candidate is admissible when any of its
    // sources is.
    let mut candidates: Vec<CandidatePoint> = Vec::new();
    for (source, beta) in raw {
        let (f_value, active) = eval_max(qfs, &beta, opts.tol.tau_active);
        let admissible = source.defining().iter().any(|d| active.contains(d));
        let duplicate = candidates.iter_mut().find(|c| {
            (&c.beta - &beta).norm() <= opts.tol.dedup_rel * (1.0 + c.beta.norm())
        });
        match duplicate {
            Some(existing) => {
                existing.merged.push(source);
                existing.admissible |= admissible;
            }
            None => candidates.push(CandidatePoint {
                beta,
                source,
                merged: Vec::new(),
                f_value,
                active,
                admissible,
            }),
        }
    }
    (candidates, diagnostics)
}

/// Chosen and epsilon sets over the admissible candidates.
pub struct Selection {
    pub chosen: Vec<usize>,
    pub epsilon_set: Vec<usize>,
    pub min_value: f64,
    pub epsilon: f64,
}

pub fn select(
    candidates: &[CandidatePoint],
    epsilon: Option<f64>,
    tol: &Tolerances,
) -> Result<Selection> {
    let admissible: Vec<usize> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.admissible)
        .map(|(i, _)| i)
        .collect();
    if admissible.is_empty() {
        return Err(Error::NoAdmissibleCandidate);
    }
    let min_value = admissible
        .iter()
        .map(|&i| candidates[i].f_value)
        .fold(f64::INFINITY, f64::min);
    let tie = tol.tie_rel * (1.0 + min_value.abs());
    let chosen: Vec<usize> = admissible
        .iter()
        .copied()
        .filter(|&i| candidates[i].f_value <= min_value + tie)
        .collect();
    let epsilon = epsilon.unwrap_or_else(|| 1e-6 * (1.0 + min_value.abs()));
    // The epsilon set must contain the chosen set even for epsilon below
    // the tie tolerance.
    let threshold = epsilon.max(tie);
    let epsilon_set: Vec<usize> = admissible
        .iter()
        .copied()
        .filter(|&i| candidates[i].f_value <= min_value + threshold)
        .collect();
    Ok(Selection { chosen, epsilon_set, min_value, epsilon })
}

/// End-to-end solve over explicit quadratic forms.
pub fn solve_forms(qfs: &[QuadraticForm], opts: &SolverOptions) -> Result<SolutionReport> {
    if qfs.is_empty() {
        return Err(Error::DataValidation("no quadratic forms".into()));
    }
    let (candidates, diagnostics) = assemble_candidates(qfs, opts);
    match select(&candidates, opts.epsilon, &opts.tol) {
        Ok(sel) => Ok(SolutionReport {
            candidates,
            chosen: sel.chosen,
            epsilon_set: sel.epsilon_set,
            min_value: Some(sel.min_value),
            epsilon: Some(sel.epsilon),
            degenerate: None,
            diagnostics,
        }),
        Err(Error::NoAdmissibleCandidate) => Ok(SolutionReport {
            candidates,
            chosen: Vec::new(),
            epsilon_set: Vec::new(),
            min_value: None,
            epsilon: opts.epsilon,
            degenerate: Some("no admissible candidate".into()),
            diagnostics,
        }),
        Err(e) => Err(e),
    }
}

/// Solve from a weight scheme and environment moments.
pub fn solve(
    scheme: &crate::risk::WeightScheme,
    envs: &[crate::moments::EnvironmentMoments],
    opts: &SolverOptions,
) -> Result<SolutionReport> {
    let qfs = crate::risk::build_all_forms(scheme, envs)?;
    solve_forms(&qfs, opts)
}

/// `d(x, E) = inf { |y - x| : y in E }`; empty sets give infinity.
pub fn point_set_distance(x: &DVector<f64>, set: &[DVector<f64>]) -> f64 {
    set.iter()
        .map(|y| (y - x).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Cardinality-penalized bidirectional sum of nearest-neighbor distances.
pub fn set_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let indicator = if a.len() != b.len() { 1.0 } else { 0.0 };
    let forward: f64 = a.iter().map(|x| point_set_distance(x, b)).sum();
    let backward: f64 = b.iter().map(|x| point_set_distance(x, a)).sum();
    indicator + forward + backward
}

#[derive(Debug, Clone)]
pub struct OneToOneDiagnostics {
    /// `(n, median over set elements of d(element, target))`, ascending in n.
    pub per_step: Vec<(usize, f64)>,
    pub monotone: bool,
    pub min_separation_at_last: f64,
    pub violating_pair: Option<(usize, usize)>,
    pub pass: bool,
}

pub fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Diagnostic check of asymptotically one-to-one convergence: per-step
/// median distances to the target must be nonincreasing, and the last set
/// must be pairwise separated by more than `delta`. A heuristic over the
/// provided sequence, not a proof.
pub fn asymptotic_one_to_one_check(
    sequence: &[(usize, Vec<DVector<f64>>)],
    target: &[DVector<f64>],
    delta: f64,
) -> OneToOneDiagnostics {
    let mut steps: Vec<&(usize, Vec<DVector<f64>>)> = sequence.iter().collect();
    steps.sort_by_key(|(n, _)| *n);
    let per_step: Vec<(usize, f64)> = steps
        .iter()
        .map(|(n, set)| {
            let mut dists: Vec<f64> = set.iter().map(|s| point_set_distance(s, target)).collect();
            (*n, median(&mut dists))
        })
        .collect();
    let monotone = per_step.windows(2).all(|w| w[1].1 <= w[0].1);
    let mut min_separation = f64::INFINITY;
    let mut violating_pair = None;
    if let Some((_, last)) = steps.last() {
        for a in 0..last.len() {
            for b in (a + 1)..last.len() {
                let d = (&last[a] - &last[b]).norm();
                if d < min_separation {
                    min_separation = d;
                    if d <= delta {
                        violating_pair = Some((a, b));
                    }
                }
            }
        }
    }
    let separation_ok = violating_pair.is_none();
    OneToOneDiagnostics {
        per_step,
        monotone,
        min_separation_at_last: min_separation,
        violating_pair,
        pass: monotone && separation_ok,
    }
}

/// Distance from the origin to the convex hull of the active gradients:
/// first-order optimality of the max holds when this is near zero.
///
/// Exact for small active sets via enumeration of support subsets.
pub fn convex_hull_gradient_distance(
    qfs: &[QuadraticForm],
    beta: &DVector<f64>,
    active: &[usize],
) -> f64 {
    assert!(!active.is_empty() && active.len() <= 16);
    let grads: Vec<DVector<f64>> = active.iter().map(|&i| gradient(&qfs[i], beta)).collect();
    let mut best = f64::INFINITY;
    let count = grads.len();
    for mask in 1_u32..(1 << count) {
        let support: Vec<usize> = (0..count).filter(|b| mask & (1 << b) != 0).collect();
        let s = support.len();
        if s == 1 {
            best = best.min(grads[support[0]].norm());
            continue;
        }
        // Minimize |sum mu_l g_l| with sum mu = 1 via the KKT system of the
        // equality-constrained least squares problem.
        let mut kkt = nalgebra::DMatrix::zeros(s + 1, s + 1);
        for r in 0..s {
            for c in 0..s {
                kkt[(r, c)] = 2.0 * grads[support[r]].dot(&grads[support[c]]);
            }
            kkt[(r, s)] = 1.0;
            kkt[(s, r)] = 1.0;
        }
        let mut rhs = nalgebra::DVector::zeros(s + 1);
        rhs[s] = 1.0;
        let lu = kkt.lu();
        let Some(sol) = lu.solve(&rhs) else { continue };
        if (0..s).any(|r| sol[r] < -1e-12) {
            continue;
        }
        let mut combo = DVector::zeros(beta.len());
        for r in 0..s {
            combo += &grads[support[r]] * sol[r];
        }
        best = best.min(combo.norm());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::SignClass;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn form(a: &[f64], b: &[f64], c: f64) -> QuadraticForm {
        let p = b.len();
        QuadraticForm::new(
            DMatrix::from_row_slice(p, p, a),
            DVector::from_column_slice(b),
            c,
            SignClass::NonNegative,
        )
        .unwrap()
    }

    fn parabola(v: f64, offset: f64) -> QuadraticForm {
        form(&[1.0], &[v], v * v + offset)
    }

    fn betas(report: &SolutionReport, indices: &[usize]) -> Vec<DVector<f64>> {
        indices
            .iter()
            .map(|&i| report.candidates[i].beta.clone())
            .collect()
    }

    #[test]
    fn inflexion_examples() {
        let qf = form(&[1.0, 0.0, 0.0, 1.0], &[2.0, -1.0], 0.0);
        let x = inflexion_point(&qf, 1e-10).unwrap();
        assert_eq!(x, DVector::from_column_slice(&[2.0, -1.0]));

        let qf = form(&[2.0, 0.0, 0.0, 4.0], &[2.0, 4.0], 0.0);
        let x = inflexion_point(&qf, 1e-10).unwrap();
        assert_relative_eq!(x, DVector::from_column_slice(&[1.0, 1.0]), epsilon = 1e-12);

        let qf = form(&[0.0], &[1.0], 0.0);
        assert!(matches!(inflexion_point(&qf, 1e-10), Err(Error::SingularForm(_))));
    }

    #[test]
    fn classic_pair_assembly_and_selection() {
        let qfs = [parabola(0.0, 0.0), parabola(2.0, 0.0)];
        let report = solve_forms(&qfs, &SolverOptions::default()).unwrap();
        assert_eq!(report.candidates.len(), 3);
        // Inflexion of f1 at 0: f(0) = 4 attained by f2 only.
        assert!(!report.candidates[0].admissible);
        assert!(!report.candidates[1].admissible);
        assert!(report.candidates[2].admissible);
        assert_eq!(report.chosen, vec![2]);
        assert_relative_eq!(report.candidates[2].beta[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(report.min_value.unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(report.epsilon_set, vec![2]);
    }

    #[test]
    fn single_form_always_admissible() {
        let qfs = [parabola(1.5, 0.0)];
        let report = solve_forms(&qfs, &SolverOptions::default()).unwrap();
        assert_eq!(report.candidates.len(), 1);
        assert!(report.candidates[0].admissible);
        assert_relative_eq!(report.candidates[0].beta[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(report.min_value.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_offset_pair_keeps_upper_inflexion() {
        // f2 = f1 + 1: both inflexions sit at 0 and merge; the merged
        // candidate is admissible through f2.
        let qfs = [parabola(0.0, 0.0), parabola(0.0, 1.0)];
        let report = solve_forms(&qfs, &SolverOptions::default()).unwrap();
        assert_eq!(report.candidates.len(), 1);
        assert!(report.candidates[0].admissible);
        assert_eq!(report.candidates[0].merged.len(), 1);
        assert_eq!(report.chosen, vec![0]);
        assert_relative_eq!(report.min_value.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn epsilon_does_not_override_admissibility() {
        let qfs = [parabola(0.0, 0.0), parabola(2.0, 0.0)];
        let opts = SolverOptions { epsilon: Some(10.0), ..Default::default() };
        let report = solve_forms(&qfs, &opts).unwrap();
        // Inadmissible inflexions stay excluded no matter how large epsilon.
        assert_eq!(report.epsilon_set, vec![2]);

        let opts = SolverOptions { epsilon: Some(0.5), ..Default::default() };
        let report = solve_forms(&qfs, &opts).unwrap();
        assert_eq!(report.epsilon_set, vec![2]);
    }

    #[test]
    fn duplicate_row_leaves_solution_invariant() {
        let qfs = [parabola(0.0, 0.0), parabola(2.0, 0.0)];
        let base = solve_forms(&qfs, &SolverOptions::default()).unwrap();
        let dup = [parabola(0.0, 0.0), parabola(2.0, 0.0), parabola(0.0, 0.0)];
        let extended = solve_forms(&dup, &SolverOptions::default()).unwrap();
        assert_relative_eq!(
            base.min_value.unwrap(),
            extended.min_value.unwrap(),
            epsilon = 1e-9
        );
        let d = set_distance(
            &betas(&base, &base.chosen),
            &betas(&extended, &extended.chosen),
        );
        assert!(d <= 1e-8, "distance {d}");
    }

    #[test]
    fn permutation_invariance() {
        let qfs = [parabola(0.0, 0.0), parabola(2.0, 0.0), parabola(1.0, 0.2)];
        let fwd = solve_forms(&qfs, &SolverOptions::default()).unwrap();
        let rev: Vec<QuadraticForm> = qfs.iter().rev().cloned().collect();
        let bwd = solve_forms(&rev, &SolverOptions::default()).unwrap();
        assert_relative_eq!(
            fwd.min_value.unwrap(),
            bwd.min_value.unwrap(),
            epsilon = 1e-9
        );
        let d = set_distance(&betas(&fwd, &fwd.chosen), &betas(&bwd, &bwd.chosen));
        assert!(d <= 1e-7, "distance {d}");
    }

    #[test]
    fn set_distance_examples() {
        let v = |x: f64| DVector::from_column_slice(&[x]);
        assert_eq!(point_set_distance(&v(3.0), &[v(3.0), v(-1.0)]), 0.0);
        assert_eq!(point_set_distance(&v(0.0), &[v(3.0), v(-1.0)]), 1.0);
        assert_eq!(point_set_distance(&v(0.0), &[]), f64::INFINITY);

        assert_eq!(set_distance(&[v(5.0)], &[v(5.0)]), 0.0);
        assert_eq!(set_distance(&[v(0.0)], &[v(0.0), v(3.0)]), 4.0);
        assert_eq!(set_distance(&[v(1.0)], &[v(2.0)]), 2.0);
    }

    #[test]
    fn one_to_one_check_cases() {
        let v = |x: f64| DVector::from_column_slice(&[x]);
        let target = vec![v(0.0), v(2.0)];
        let constant: Vec<(usize, Vec<DVector<f64>>)> = vec![
            (10, target.clone()),
            (100, target.clone()),
            (1000, target.clone()),
        ];
        let diag = asymptotic_one_to_one_check(&constant, &target, 1.0);
        assert!(diag.pass, "{diag:?}");

        // A spurious duplicate pair below delta at the largest n.
        let bad = vec![(10, target.clone()), (100, vec![v(0.0), v(0.05), v(2.0)])];
        let diag = asymptotic_one_to_one_check(&bad, &target, 0.1);
        assert!(!diag.pass);
        assert_eq!(diag.violating_pair, Some((0, 1)));
    }

    #[test]
    fn first_order_optimality_at_kink() {
        let qfs = [parabola(0.0, 0.0), parabola(2.0, 0.0)];
        let beta = DVector::from_column_slice(&[1.0]);
        let d = convex_hull_gradient_distance(&qfs, &beta, &[0, 1]);
        assert!(d <= 1e-9, "hull distance {d}");
        // At a non-optimal point with a single active form the distance is
        // the gradient norm.
        let beta = DVector::from_column_slice(&[0.0]);
        let d = convex_hull_gradient_distance(&qfs, &beta, &[1]);
        assert_relative_eq!(d, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_when_every_form_singular() {
        // Single form with singular A: no inflexion, no pairs, no candidates.
        let qfs = [form(&[0.0], &[1.0], 0.0)];
        let report = solve_forms(&qfs, &SolverOptions::default()).unwrap();
        assert!(report.degenerate.is_some());
        assert!(report.chosen.is_empty());
        assert!(report.min_value.is_none());
    }
}
