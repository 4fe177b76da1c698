//! Dense univariate real polynomials: arithmetic, resultants, root bounds,
//! bisection-based real-root isolation, and an eigenvalue root oracle.
//!
//! The production path isolates roots on a uniform grid sized by a
//! separation lower bound and refines each sign-change bracket by bisection;
//! a Sturm-sequence subdivision takes over when the grid would be infeasible.
//! The companion-matrix eigenvalue route is kept strictly as an independent
//! cross-check.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Coefficients ascending (`coeffs[u]` multiplies `lambda^u`); the zero
/// polynomial is the empty vector. Horner evaluation is the canonical
/// semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Build from ascending coefficients, stripping exact trailing zeros.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn leading(&self) -> Option<f64> {
        self.coeffs.last().copied()
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        Polynomial::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, &c)| c * (i + 1) as f64)
                .collect(),
        )
    }

    /// Zero every coefficient below `eps_rel * max|coeff|`, then strip
    /// trailing zeros. Degree inference happens after the trim.
    pub fn trim(&self, eps_rel: f64) -> Polynomial {
        let max = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if max == 0.0 {
            return Polynomial::zero();
        }
        let thresh = eps_rel * max;
        Polynomial::new(
            self.coeffs
                .iter()
                .map(|&c| if c.abs() < thresh { 0.0 } else { c })
                .collect(),
        )
    }

    fn scaled(&self, s: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Sum of absolute coefficients.
    fn coeff_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}

/// An interval with opposite polynomial signs at its endpoints, so a root
/// lies strictly inside.
#[derive(Debug, Clone, Copy)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub sign_lo: f64,
    pub sign_hi: f64,
}

/// Alias for the canonical evaluation, matching the operation vocabulary.
pub fn eval_poly(p: &Polynomial, x: f64) -> f64 {
    p.eval(x)
}

/// Euclidean division: `a = q * b + r` with `deg r < deg b`.
fn div_rem(a: &Polynomial, b: &Polynomial) -> (Polynomial, Polynomial) {
    let db = b.degree().expect("division by zero polynomial");
    let lead_b = b.coeffs[db];
    let mut rem = a.coeffs.clone();
    if rem.len() <= db {
        return (Polynomial::zero(), a.clone());
    }
    let dq = rem.len() - 1 - db;
    let mut quot = vec![0.0; dq + 1];
    for qi in (0..=dq).rev() {
        let coeff = rem[qi + db] / lead_b;
        quot[qi] = coeff;
        for bi in 0..=db {
            rem[qi + bi] -= coeff * b.coeffs[bi];
        }
    }
    rem.truncate(db);
    (Polynomial::new(quot), Polynomial::new(rem))
}

/// Determinant of the `(deg P + deg Q)`-sized Sylvester matrix.
pub fn sylvester_resultant(p: &Polynomial, q: &Polynomial) -> Result<f64> {
    Ok(resultant_with_scale(p, q)?.0)
}

/// Resultant together with the Hadamard row-norm product of the Sylvester
/// matrix, used as the magnitude scale for near-zero decisions.
fn resultant_with_scale(p: &Polynomial, q: &Polynomial) -> Result<(f64, f64)> {
    let dp = p
        .degree()
        .ok_or_else(|| Error::DataValidation("resultant of zero polynomial".into()))?;
    let dq = q
        .degree()
        .ok_or_else(|| Error::DataValidation("resultant of zero polynomial".into()))?;
    if dp == 0 && dq == 0 {
        return Ok((1.0, 1.0));
    }
    if dq == 0 {
        return Ok((q.coeffs[0].powi(dp as i32), q.coeffs[0].abs().powi(dp as i32)));
    }
    if dp == 0 {
        // res(P, Q) = (-1)^{dp dq} res(Q, P); dp = 0 makes the sign positive.
        return Ok((p.coeffs[0].powi(dq as i32), p.coeffs[0].abs().powi(dq as i32)));
    }
    let n = dp + dq;
    let mut m = DMatrix::zeros(n, n);
    for row in 0..dq {
        for (idx, &c) in p.coeffs.iter().rev().enumerate() {
            m[(row, row + idx)] = c;
        }
    }
    for row in 0..dp {
        for (idx, &c) in q.coeffs.iter().rev().enumerate() {
            m[(dq + row, row + idx)] = c;
        }
    }
    let scale = (0..n).map(|r| m.row(r).norm()).product::<f64>().max(f64::MIN_POSITIVE);
    let det = m.lu().determinant();
    Ok((det, scale))
}

/// `(-1)^{d(d-1)/2} res(P, P') / e_d`.
pub fn discriminant(p: &Polynomial) -> Result<f64> {
    Ok(discriminant_with_scale(p)?.0)
}

/// Discriminant plus a magnitude scale for deciding "numerically zero".
fn discriminant_with_scale(p: &Polynomial) -> Result<(f64, f64)> {
    let d = p
        .degree()
        .ok_or_else(|| Error::DataValidation("discriminant of zero polynomial".into()))?;
    if d == 0 {
        return Err(Error::DataValidation("discriminant needs degree >= 1".into()));
    }
    let lead = p.coeffs[d];
    if lead == 0.0 {
        return Err(Error::DataValidation("zero leading coefficient".into()));
    }
    if d == 1 {
        return Ok((1.0, 1.0));
    }
    let (res, scale) = resultant_with_scale(p, &p.derivative())?;
    let sign = if (d * (d - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    Ok((sign * res / lead, scale / lead.abs()))
}

/// Whether the discriminant is numerically indistinguishable from zero.
///
/// Tested on the max-normalized coefficients, where the discriminant is a
/// bounded polynomial of the entries, so a fixed relative threshold is
/// meaningful across scales.
pub fn discriminant_is_zero(p: &Polynomial) -> Result<bool> {
    let max = p.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if max == 0.0 {
        return Err(Error::DataValidation("discriminant of zero polynomial".into()));
    }
    let pn = p.scaled(1.0 / max);
    let (disc, _) = discriminant_with_scale(&pn)?;
    let d = pn.degree().unwrap_or(0) as f64;
    Ok(disc.abs() <= 1e-12 * (1.0 + d))
}

/// Lagrange bound: every real root lies in `[-R, R]` with
/// `R = max(1, sum_{u<d} |e_u / e_d|)`.
pub fn lagrange_root_bound(p: &Polynomial) -> Result<f64> {
    let d = p
        .degree()
        .ok_or_else(|| Error::DataValidation("root bound of zero polynomial".into()))?;
    if d == 0 {
        return Err(Error::DataValidation("root bound needs degree >= 1".into()));
    }
    let lead = p.coeffs[d];
    let sum: f64 = p.coeffs[..d].iter().map(|c| (c / lead).abs()).sum();
    Ok(sum.max(1.0))
}

fn ln_rump(coeffs: &[f64], ln_disc_abs: f64) -> f64 {
    let d = (coeffs.len() - 1) as f64;
    let s: f64 = coeffs.iter().map(|c| c.abs()).sum();
    let lead = coeffs.last().unwrap().abs();
    d * (d.ln() + 1.0) * lead.max(1.0).ln() + ln_disc_abs + (d - 1.0) * (2.0 * d).ln()
        - d * (d.ln() + 3.0) * s.ln()
}

/// Lower bound on the minimal distance between any two roots (complex
/// included), evaluated in log space.
///
/// The bound is not scale-invariant while root separation is, so it is
/// evaluated on both the raw and the max-normalized coefficients and the
/// smaller value is returned; a smaller bound only makes the isolation grid
/// finer.
pub fn rump_separation(p: &Polynomial) -> Result<f64> {
    let d = p
        .degree()
        .ok_or_else(|| Error::DataValidation("separation of zero polynomial".into()))?;
    if d < 2 {
        return Err(Error::DataValidation("separation bound needs degree >= 2".into()));
    }
    if discriminant_is_zero(p)? {
        return Err(Error::DegenerateInstance(
            "zero discriminant: roots are not simple".into(),
        ));
    }
    let disc = discriminant(p)?;
    let ln_disc = disc.abs().ln();
    let ln_raw = ln_rump(&p.coeffs, ln_disc);
    // Scaling by c multiplies the discriminant by c^(2d-2).
    let max = p.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let pn = p.scaled(1.0 / max);
    let ln_disc_n = ln_disc + (2.0 * d as f64 - 2.0) * (1.0 / max).ln();
    let ln_norm = ln_rump(&pn.coeffs, ln_disc_n);
    Ok(ln_raw.min(ln_norm).exp())
}

/// One bracket per sign change of `p` on a uniform grid over `[-radius,
/// radius]` with spacing at most `step`.
///
/// A grid value within `1e-13 * sum|e_u|` of zero triggers one retry with
/// the grid nudged by `step / 7`; a zero that survives the retry is treated
/// as a root found and bracketed directly.
pub fn isolate_real_roots(
    p: &Polynomial,
    radius: f64,
    step: f64,
    budget: u64,
) -> Result<Vec<RootBracket>> {
    if !(radius.is_finite() && radius > 0.0 && step.is_finite() && step > 0.0) {
        return Err(Error::DataValidation(format!(
            "invalid isolation window: radius {radius}, step {step}"
        )));
    }
    let needed = 2.0 * (radius / step).ceil();
    if !needed.is_finite() || needed as u64 > budget {
        return Err(Error::IsolationBudgetExceeded {
            needed: if needed.is_finite() { needed as u64 } else { u64::MAX },
            budget,
        });
    }
    let eps_zero = 1e-13 * p.coeff_l1();

    let grid_values = |offset: f64| -> (Vec<f64>, Vec<f64>, bool) {
        let lo = -radius - offset;
        let hi = radius + offset;
        let m = ((hi - lo) / step).ceil().max(1.0) as usize;
        let h = (hi - lo) / m as f64;
        let xs: Vec<f64> = (0..=m).map(|i| lo + h * i as f64).collect();
        let vs: Vec<f64> = xs.iter().map(|&x| p.eval(x)).collect();
        let has_zero = vs.iter().any(|v| v.abs() <= eps_zero);
        (xs, vs, has_zero)
    };

    let (xs, vs, _) = {
        let first = grid_values(0.0);
        if first.2 {
            grid_values(step / 7.0)
        } else {
            first
        }
    };

    let mut brackets = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        if vs[i].abs() <= eps_zero {
            // Root found on the (nudged) grid: bracket it directly.
            let lo = xs[i] - 0.5 * step;
            let hi = xs[i] + 0.5 * step;
            let (vlo, vhi) = (p.eval(lo), p.eval(hi));
            if vlo * vhi < 0.0 {
                brackets.push(RootBracket {
                    lo,
                    hi,
                    sign_lo: vlo.signum(),
                    sign_hi: vhi.signum(),
                });
            }
            i += 1;
            continue;
        }
        if i + 1 < xs.len() && vs[i + 1].abs() > eps_zero && vs[i] * vs[i + 1] < 0.0 {
            brackets.push(RootBracket {
                lo: xs[i],
                hi: xs[i + 1],
                sign_lo: vs[i].signum(),
                sign_hi: vs[i + 1].signum(),
            });
        }
        i += 1;
    }
    Ok(brackets)
}

/// Sturm chain of `p` (standard remainder sequence, each member normalized
/// by its largest coefficient magnitude, which preserves signs).
fn sturm_chain(p: &Polynomial) -> Vec<Polynomial> {
    let mut chain = vec![p.clone(), p.derivative()];
    loop {
        let n = chain.len();
        if chain[n - 1].is_zero() || chain[n - 1].degree() == Some(0) {
            break;
        }
        let (_, rem) = div_rem(&chain[n - 2], &chain[n - 1]);
        // Clear roundoff dust so the degree of the next member is honest.
        let rem = rem.trim(1e-13).scaled(-1.0);
        if rem.is_zero() {
            break;
        }
        let max = rem.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        chain.push(rem.scaled(1.0 / max));
    }
    chain
}

fn sign_variations(chain: &[Polynomial], x: f64) -> usize {
    let mut count = 0;
    let mut last = 0.0_f64;
    for member in chain {
        let v = member.eval(x);
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && last * v < 0.0 {
            count += 1;
        }
        last = v;
    }
    count
}

/// Number of distinct real roots of squarefree `p` in `(lo, hi]`.
pub fn sturm_count(p: &Polynomial, lo: f64, hi: f64) -> Result<i64> {
    if p.degree().is_none() {
        return Err(Error::DataValidation("Sturm count of zero polynomial".into()));
    }
    let chain = sturm_chain(p);
    Ok(sign_variations(&chain, lo) as i64 - sign_variations(&chain, hi) as i64)
}

/// Bisection refinement with up to `c_n` halvings (error at most
/// `(hi - lo) / 2^c_n`), followed by one Newton polish that is kept only if
/// it stays inside the bracket and does not worsen `|p|`.
pub fn bisect(p: &Polynomial, bracket: &RootBracket, c_n: u32) -> f64 {
    let mut lo = bracket.lo;
    let mut hi = bracket.hi;
    let mut sign_lo = bracket.sign_lo;
    for _ in 0..c_n {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let vm = p.eval(mid);
        if vm == 0.0 {
            return mid;
        }
        if vm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        sign_lo = p.eval(lo).signum();
        if (hi - lo) <= f64::EPSILON * (1.0 + mid.abs()) {
            break;
        }
    }
    let estimate = 0.5 * (lo + hi);
    let deriv = p.derivative().eval(estimate);
    if deriv != 0.0 {
        let polished = estimate - p.eval(estimate) / deriv;
        if polished.is_finite()
            && polished >= lo
            && polished <= hi
            && p.eval(polished).abs() <= p.eval(estimate).abs()
        {
            return polished;
        }
    }
    estimate
}

/// All eigenvalues of the companion matrix of `p / e_d`, sorted by real then
/// imaginary part. Independent root oracle.
pub fn companion_roots(p: &Polynomial) -> Result<Vec<Complex<f64>>> {
    let d = p
        .degree()
        .ok_or_else(|| Error::DataValidation("companion matrix of zero polynomial".into()))?;
    if d == 0 {
        return Ok(Vec::new());
    }
    let lead = p.coeffs[d];
    let mut m = DMatrix::zeros(d, d);
    for r in 1..d {
        m[(r, r - 1)] = 1.0;
    }
    for r in 0..d {
        m[(r, d - 1)] = -p.coeffs[r] / lead;
    }
    let mut eigs: Vec<Complex<f64>> = m.complex_eigenvalues().iter().cloned().collect();
    eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(eigs)
}

/// Real roots from the companion oracle: eigenvalues with imaginary part
/// within `1e-8 * (1 + |root|)` of zero.
pub fn real_companion_roots(p: &Polynomial) -> Result<Vec<f64>> {
    let mut roots: Vec<f64> = companion_roots(p)?
        .into_iter()
        .filter(|z| z.im.abs() <= 1e-8 * (1.0 + z.norm()))
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// Least-squares fit of a degree-`degree_bound` polynomial through the
/// nodes (exact interpolation when exactly `degree_bound + 1` nodes are
/// given), trimmed at `eps_trim`.
///
/// Internally the abscissas are mapped affinely onto `[-1, 1]` so the
/// Vandermonde system stays well conditioned; coefficients are mapped back
/// before trimming.
pub fn interpolate_poly(
    nodes: &[(f64, f64)],
    degree_bound: usize,
    eps_trim: f64,
) -> Result<Polynomial> {
    if nodes.len() < degree_bound + 1 {
        return Err(Error::DataValidation(format!(
            "{} nodes cannot determine degree {degree_bound}",
            nodes.len()
        )));
    }
    let mut xs: Vec<f64> = nodes.iter().map(|(x, _)| *x).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DataValidation("duplicate interpolation nodes".into()));
    }
    let (min, max) = (xs[0], xs[xs.len() - 1]);
    let center = 0.5 * (min + max);
    let half = 0.5 * (max - min);

    let n = nodes.len();
    let v = DMatrix::from_fn(n, degree_bound + 1, |r, c| {
        let t = (nodes[r].0 - center) / half;
        t.powi(c as i32)
    });
    let y = DVector::from_fn(n, |r, _| nodes[r].1);
    let svd = v.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let q = svd
        .solve(&y, smax * 1e-13)
        .map_err(|e| Error::DataValidation(format!("interpolation solve failed: {e}")))?;

    // Recompose P(lambda) = q((lambda - center) / half) by Horner steps in
    // polynomial arithmetic.
    let (a0, a1) = (-center / half, 1.0 / half);
    let mut result = Polynomial::zero();
    for u in (0..=degree_bound).rev() {
        let mut next = vec![0.0; result.coeffs.len() + 1];
        for (i, &c) in result.coeffs.iter().enumerate() {
            next[i] += c * a0;
            next[i + 1] += c * a1;
        }
        let mut next = Polynomial::new(next);
        if next.coeffs.is_empty() {
            next.coeffs.push(q[u]);
        } else {
            next.coeffs[0] += q[u];
        }
        result = Polynomial::new(next.coeffs);
    }
    Ok(result.trim(eps_trim))
}

/// Options threaded through the root pipeline.
#[derive(Debug, Clone, Copy)]
pub struct RootPipelineOptions {
    /// Maximum number of grid intervals before falling back to Sturm
    /// subdivision.
    pub interval_budget: u64,
    /// Bisection iterations per bracket.
    pub c_n: u32,
    /// Relative coefficient trim applied before isolation.
    pub eps_trim: f64,
    /// Recursion depth cap of the Sturm fallback.
    pub sturm_depth: u32,
}

impl Default for RootPipelineOptions {
    fn default() -> Self {
        Self {
            interval_budget: 1_000_000,
            c_n: 64,
            eps_trim: 1e-9,
            sturm_depth: 128,
        }
    }
}

fn sturm_subdivide(
    p: &Polynomial,
    chain: &[Polynomial],
    lo: f64,
    hi: f64,
    depth: u32,
    out: &mut Vec<RootBracket>,
) -> Result<()> {
    let count = sign_variations(chain, lo) as i64 - sign_variations(chain, hi) as i64;
    if count <= 0 {
        return Ok(());
    }
    if count == 1 {
        let vlo = p.eval(lo);
        let mut hi = hi;
        let mut vhi = p.eval(hi);
        if vhi == 0.0 {
            // Root sits exactly on the subdivision point; widen a hair.
            hi += (hi - lo) * 1e-9 + f64::MIN_POSITIVE;
            vhi = p.eval(hi);
        }
        if vlo * vhi < 0.0 {
            out.push(RootBracket {
                lo,
                hi,
                sign_lo: vlo.signum(),
                sign_hi: vhi.signum(),
            });
            return Ok(());
        }
    }
    if depth == 0 {
        return Err(Error::DegenerateInstance(
            "Sturm subdivision depth exhausted without isolating a sign change".into(),
        ));
    }
    let mid = 0.5 * (lo + hi);
    if mid <= lo || mid >= hi {
        return Err(Error::DegenerateInstance(
            "Sturm subdivision interval collapsed".into(),
        ));
    }
    sturm_subdivide(p, chain, lo, mid, depth - 1, out)?;
    sturm_subdivide(p, chain, mid, hi, depth - 1, out)
}

/// Full real-root pipeline: trim, Lagrange bound, separation-sized grid
/// isolation with Sturm-guided fallback, bisection, Newton polish.
pub fn real_roots(p: &Polynomial, opts: &RootPipelineOptions) -> Result<Vec<f64>> {
    let q = p.trim(opts.eps_trim);
    let d = match q.degree() {
        None => {
            return Err(Error::DegenerateInstance(
                "zero polynomial has no isolated roots".into(),
            ))
        }
        Some(0) => return Ok(Vec::new()),
        Some(d) => d,
    };
    if d == 1 {
        return Ok(vec![-q.coeffs()[0] / q.coeffs()[1]]);
    }
    let radius = lagrange_root_bound(&q)?;
    let separation = rump_separation(&q)?;
    // Grid spacing Delta + eps with eps = Delta * 1e-3.
    let step = separation * (1.0 + 1e-3);
    let brackets = if step > 0.0 {
        match isolate_real_roots(&q, radius, step, opts.interval_budget) {
            Ok(b) => b,
            Err(Error::IsolationBudgetExceeded { .. }) => {
                sturm_isolate(&q, radius, opts.sturm_depth)?
            }
            Err(e) => return Err(e),
        }
    } else {
        sturm_isolate(&q, radius, opts.sturm_depth)?
    };
    let mut roots: Vec<f64> = brackets.iter().map(|b| bisect(&q, b, opts.c_n)).collect();
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// Isolation driven purely by Sturm counts; correct whenever the chain's
/// sign variations are, independently of the separation bound.
fn sturm_isolate(p: &Polynomial, radius: f64, depth: u32) -> Result<Vec<RootBracket>> {
    let chain = sturm_chain(p);
    // Inflate slightly so boundary roots are interior.
    let r = radius * (1.0 + 1e-9) + 1e-12;
    let mut out = Vec::new();
    sturm_subdivide(p, &chain, -r, r, depth, &mut out)?;
    Ok(out)
}
