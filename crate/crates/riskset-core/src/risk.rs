//! Weight schemes and the quadratic forms they induce.
//!
//! Each affine combination `f_i(beta) = kappa_i + sum_u w_i(u) R_u(beta)`
//! collapses to `beta A beta^T - 2 beta b + c` with `A`, `b`, `c` linear in
//! the environment moments; evaluation, gaps and gradients all work on that
//! closed form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moments::EnvironmentMoments;

/// Sign class of one weight row: all weights `>= 0` with at least one
/// positive, or all `<= 0` with at least one negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignClass {
    NonNegative,
    NonPositive,
}

/// The `m` affine combinations over `k` environments.
#[derive(Debug, Clone)]
pub struct WeightScheme {
    w: DMatrix<f64>,
    kappa: DVector<f64>,
    sign_classes: Vec<SignClass>,
}

impl WeightScheme {
    pub fn new(w: DMatrix<f64>, kappa: DVector<f64>) -> Result<Self> {
        let (m, _k) = w.shape();
        if m == 0 {
            return Err(Error::DataValidation("weight matrix has no rows".into()));
        }
        if kappa.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} weight rows but {} intercepts",
                m,
                kappa.len()
            )));
        }
        let mut sign_classes = Vec::with_capacity(m);
        for i in 0..m {
            if !(kappa[i].is_finite() && kappa[i] >= 0.0) {
                return Err(Error::DataValidation(format!(
                    "intercept {i} must be finite and nonnegative, got {}",
                    kappa[i]
                )));
            }
            let row = w.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::DataValidation(format!("non-finite weight in row {i}")));
            }
            let has_pos = row.iter().any(|&v| v > 0.0);
            let has_neg = row.iter().any(|&v| v < 0.0);
            let class = match (has_pos, has_neg) {
                (true, false) => SignClass::NonNegative,
                (false, true) => SignClass::NonPositive,
                (false, false) => {
                    return Err(Error::DataValidation(format!(
                        "weight row {i} is identically zero"
                    )))
                }
                (true, true) => {
                    return Err(Error::DataValidation(format!(
                        "weight row {i} mixes positive and negative weights"
                    )))
                }
            };
            sign_classes.push(class);
        }
        if !sign_classes.iter().any(|c| *c == SignClass::NonNegative) {
            return Err(Error::DataValidation(
                "at least one weight row must be non-negative".into(),
            ));
        }
        Ok(Self { w, kappa, sign_classes })
    }

    /// The classical minimax over `k` environments: `m = k`, identity weights.
    pub fn classic(k: usize) -> Self {
        Self::new(DMatrix::identity(k, k), DVector::zeros(k)).expect("identity scheme is valid")
    }

    pub fn m(&self) -> usize {
        self.w.nrows()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn kappa(&self) -> &DVector<f64> {
        &self.kappa
    }

    pub fn sign_class(&self, row: usize) -> SignClass {
        self.sign_classes[row]
    }
}

/// One `f_i` as `beta A beta^T - 2 beta b + c`, with `A` stored fully
/// symmetric.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
    pub sign_class: SignClass,
}

impl QuadraticForm {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64, sign_class: SignClass) -> Result<Self> {
        let p = a.nrows();
        if a.ncols() != p || b.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{} but b has length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        let scale = a.amax().max(1.0);
        for r in 0..p {
            for c in 0..r {
                if (a[(r, c)] - a[(c, r)]).abs() > 1e-12 * scale {
                    return Err(Error::DataValidation(format!(
                        "quadratic form matrix not symmetric at ({r},{c})"
                    )));
                }
            }
        }
        Ok(Self { a, b, c, sign_class })
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }
}

/// Combine environment moments into the quadratic form of weight row `row`:
/// `A = sum_u w(u) G^u`, `b = sum_u w(u) Z^u`, `c = kappa + sum_u w(u) y2_u`.
pub fn build_quadratic_form(
    scheme: &WeightScheme,
    row: usize,
    envs: &[EnvironmentMoments],
) -> Result<QuadraticForm> {
    if envs.len() != scheme.k() {
        return Err(Error::DimensionMismatch(format!(
            "scheme has k = {} but {} environments given",
            scheme.k(),
            envs.len()
        )));
    }
    let p = envs[0].p();
    if envs.iter().any(|e| e.p() != p) {
        return Err(Error::DimensionMismatch(
            "environments disagree on covariate dimension".into(),
        ));
    }
    let mut a = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    let mut c = scheme.kappa()[row];
    for (u, env) in envs.iter().enumerate() {
        let w = scheme.weights()[(row, u)];
        if w != 0.0 {
            a += env.g() * w;
            b += env.z() * w;
            c += w * env.y2();
        }
    }
    QuadraticForm::new(a, b, c, scheme.sign_class(row))
}

/// Build all `m` forms of a scheme.
pub fn build_all_forms(
    scheme: &WeightScheme,
    envs: &[EnvironmentMoments],
) -> Result<Vec<QuadraticForm>> {
    (0..scheme.m())
        .map(|i| build_quadratic_form(scheme, i, envs))
        .collect()
}

/// `beta A beta^T - 2 beta b + c`.
pub fn eval_form(qf: &QuadraticForm, beta: &DVector<f64>) -> f64 {
    let ab = &qf.a * beta;
    beta.dot(&ab) - 2.0 * beta.dot(&qf.b) + qf.c
}

/// Max over the forms plus the indices within the active-set tie tolerance
/// `tau_active * (1 + |max|)`.
pub fn eval_max(qfs: &[QuadraticForm], beta: &DVector<f64>, tau_active: f64) -> (f64, Vec<usize>) {
    debug_assert!(!qfs.is_empty());
    let values: Vec<f64> = qfs.iter().map(|qf| eval_form(qf, beta)).collect();
    let value = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = tau_active * (1.0 + value.abs());
    let active = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| value - v <= tol)
        .map(|(i, _)| i)
        .collect();
    (value, active)
}

/// `g_ij(beta) = f_i(beta) - f_j(beta)` as a single subtraction, so the
/// antisymmetry `g_ij = -g_ji` is exact.
pub fn eval_gap(qf_i: &QuadraticForm, qf_j: &QuadraticForm, beta: &DVector<f64>) -> f64 {
    eval_form(qf_i, beta) - eval_form(qf_j, beta)
}

/// `grad f_i(beta) = 2 (A beta - b)`.
pub fn gradient(qf: &QuadraticForm, beta: &DVector<f64>) -> DVector<f64> {
    (&qf.a * beta - &qf.b) * 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::SampleCount;
    use approx::assert_relative_eq;

    fn env(g: &[f64], z: &[f64], y2: f64) -> EnvironmentMoments {
        let p = z.len();
        EnvironmentMoments::new(
            DMatrix::from_row_slice(p, p, g),
            DVector::from_column_slice(z),
            y2,
            SampleCount::Population,
        )
        .unwrap()
    }

    /// `f(beta) = (beta - v)^2 + offset` for p = 1 fixtures, as moments.
    pub(crate) fn parabola(v: f64, offset: f64) -> QuadraticForm {
        QuadraticForm::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_column_slice(&[v]),
            v * v + offset,
            SignClass::NonNegative,
        )
        .unwrap()
    }

    #[test]
    fn identity_weights_copy_the_environment() {
        let scheme = WeightScheme::classic(1);
        let e = env(&[1.0, 0.0, 0.0, 1.0], &[2.0, -1.0], 5.0);
        let qf = build_quadratic_form(&scheme, 0, &[e]).unwrap();
        assert_eq!(qf.a, DMatrix::identity(2, 2));
        assert_eq!(qf.b, DVector::from_column_slice(&[2.0, -1.0]));
        assert_eq!(qf.c, 5.0);
    }

    #[test]
    fn zero_row_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(WeightScheme::new(w, DVector::zeros(2)).is_err());
    }

    #[test]
    fn mixed_sign_row_rejected() {
        let w = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert!(WeightScheme::new(w, DVector::zeros(1)).is_err());
    }

    #[test]
    fn all_nonpositive_scheme_rejected() {
        let w = DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]);
        assert!(WeightScheme::new(w, DVector::zeros(1)).is_err());
    }

    #[test]
    fn two_env_summation() {
        // Oracle: direct summation, A = 2, b = 2, c = 1 + 0 + 4 = 5.
        let w = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let scheme = WeightScheme::new(w, DVector::from_column_slice(&[1.0])).unwrap();
        let e1 = env(&[1.0], &[0.0], 0.0);
        let e2 = env(&[1.0], &[2.0], 4.0);
        let qf = build_quadratic_form(&scheme, 0, &[e1, e2]).unwrap();
        assert_eq!(qf.a[(0, 0)], 2.0);
        assert_eq!(qf.b[0], 2.0);
        assert_eq!(qf.c, 5.0);
    }

    #[test]
    fn eval_examples() {
        let qf = QuadraticForm::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            1.0,
            SignClass::NonNegative,
        )
        .unwrap();
        assert_eq!(eval_form(&qf, &DVector::zeros(2)), 1.0);

        let qf = QuadraticForm::new(
            DMatrix::identity(2, 2),
            DVector::from_column_slice(&[2.0, -1.0]),
            5.0,
            SignClass::NonNegative,
        )
        .unwrap();
        // 5 - 2*5 + 5 = 0 at beta = b.
        assert_eq!(eval_form(&qf, &DVector::from_column_slice(&[2.0, -1.0])), 0.0);

        let qf = QuadraticForm::new(
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DVector::from_column_slice(&[1.0]),
            3.0,
            SignClass::NonNegative,
        )
        .unwrap();
        assert_eq!(eval_form(&qf, &DVector::from_column_slice(&[1.0])), 3.0);
    }

    #[test]
    fn max_and_active_set() {
        let qfs = [parabola(0.0, 0.0), parabola(2.0, 0.0)];
        let (v, active) = eval_max(&qfs, &DVector::from_column_slice(&[1.0]), 1e-9);
        assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        assert_eq!(active, vec![0, 1]);

        let (v, active) = eval_max(&qfs, &DVector::from_column_slice(&[0.0]), 1e-9);
        assert_eq!(v, 4.0);
        assert_eq!(active, vec![1]);

        let single = [parabola(0.0, 0.0)];
        let (v, active) = eval_max(&single, &DVector::from_column_slice(&[3.0]), 1e-9);
        assert_eq!(v, 9.0);
        assert_eq!(active, vec![0]);
    }

    #[test]
    fn gap_examples() {
        let f1 = parabola(0.0, 0.0);
        let f2 = parabola(2.0, 0.0);
        assert_eq!(eval_gap(&f1, &f1, &DVector::from_column_slice(&[0.7])), 0.0);
        assert_relative_eq!(
            eval_gap(&f1, &f2, &DVector::from_column_slice(&[1.0])),
            0.0,
            epsilon = 1e-14
        );
        assert_eq!(eval_gap(&f1, &f2, &DVector::from_column_slice(&[0.0])), -4.0);
    }

    #[test]
    fn gradient_examples() {
        let qf = QuadraticForm::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            0.0,
            SignClass::NonNegative,
        )
        .unwrap();
        let g = gradient(&qf, &DVector::from_column_slice(&[1.0, 2.0]));
        assert_eq!(g, DVector::from_column_slice(&[2.0, 4.0]));

        // Zero gradient at the inflexion point A^-1 b.
        let qf = QuadraticForm::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]),
            DVector::from_column_slice(&[2.0, 4.0]),
            0.0,
            SignClass::NonNegative,
        )
        .unwrap();
        let g = gradient(&qf, &DVector::from_column_slice(&[1.0, 1.0]));
        assert_relative_eq!(g.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Central differences with h = 1e-6 on a fixed asymmetric instance.
        let qf = QuadraticForm::new(
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]),
            DVector::from_column_slice(&[0.5, -1.5]),
            2.0,
            SignClass::NonNegative,
        )
        .unwrap();
        let beta = DVector::from_column_slice(&[0.3, -0.7]);
        let g = gradient(&qf, &beta);
        let h = 1e-6;
        for d in 0..2 {
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[d] += h;
            bm[d] -= h;
            let fd = (eval_form(&qf, &bp) - eval_form(&qf, &bm)) / (2.0 * h);
            assert_relative_eq!(g[d], fd, max_relative = 1e-6);
        }
    }
}
