//! Shifted structural equation model simulator.
//!
//! Draws observations of the stacked vector `[Y; X]` solving
//! `v = B v + eps + A` for a (possibly random) coefficient matrix `B`, iid
//! noise `eps`, and an additive shift `A`. The worst-risk probe estimates
//! risks over the scaling family `c * A_i`, `|c| <= 1`, whose conditional
//! second moments are dominated by the base shift by construction.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::moments::SampleMatrix;

/// Distribution of the coefficient matrix `B(omega)`; the point-mass case
/// is a fixed matrix.
#[derive(Debug, Clone)]
pub enum CoefficientSampler {
    Fixed(DMatrix<f64>),
    GaussianIid { scale: f64 },
}

/// Noise distribution, identical across environments. `sd = 0` gives the
/// deterministic system.
#[derive(Debug, Clone, Copy)]
pub enum NoiseSpec {
    Gaussian { sd: f64 },
}

#[derive(Debug, Clone)]
pub struct SemSpec {
    /// Covariate dimension; the stacked system has dimension `p + 1` with
    /// the target in coordinate 0.
    pub p: usize,
    pub coefficients: CoefficientSampler,
    pub noise: NoiseSpec,
    /// Shift vectors in `R^{p+1}` (target coordinate first).
    pub shifts: Vec<DVector<f64>>,
    /// Force the target coordinate of every shift to zero.
    pub zero_target_shift: bool,
    pub seed: u64,
}

impl SemSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.p + 1;
        if let CoefficientSampler::Fixed(b) = &self.coefficients {
            if b.nrows() != d || b.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient matrix is {}x{}, expected {d}x{d}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        for (i, a) in self.shifts.iter().enumerate() {
            if a.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "shift {i} has length {}, expected {d}",
                    a.len()
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.shifts.len()
    }

    fn effective_shift(&self, shift: &DVector<f64>) -> DVector<f64> {
        let mut s = shift.clone();
        if self.zero_target_shift {
            s[0] = 0.0;
        }
        s
    }
}

/// Deterministic per-environment RNG stream derived from the master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const SINGULAR_RETRY_CAP: usize = 100;

fn draw_coefficients(spec: &SemSpec, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = spec.p + 1;
    match &spec.coefficients {
        CoefficientSampler::Fixed(b) => b.clone(),
        CoefficientSampler::GaussianIid { scale } => {
            DMatrix::from_fn(d, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
        }
    }
}

fn draw_noise(spec: &SemSpec, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let d = spec.p + 1;
    match spec.noise {
        NoiseSpec::Gaussian { sd } => {
            DVector::from_fn(d, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
        }
    }
}

/// Simulate `n` observations under the given shift, reading randomness from
/// the stream `stream` of the spec's master seed. A fresh `B` and `eps` are
/// drawn per observation; draws with numerically singular `I - B` are
/// redrawn up to a retry cap.
pub fn simulate_environment(
    spec: &SemSpec,
    shift: &DVector<f64>,
    stream: u64,
    n: usize,
) -> Result<SampleMatrix> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::DataValidation("need at least one observation".into()));
    }
    let d = spec.p + 1;
    if shift.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "shift has length {}, expected {d}",
            shift.len()
        )));
    }
    let shift = spec.effective_shift(shift);
    let mut rng = stream_rng(spec.seed, stream);
    let mut x = DMatrix::zeros(n, spec.p);
    let mut y = DVector::zeros(n);
    for row in 0..n {
        let mut lu = None;
        for _ in 0..SINGULAR_RETRY_CAP {
            let b = draw_coefficients(spec, &mut rng);
            let i_minus_b = DMatrix::identity(d, d) - &b;
            let guard = 1e-12 * i_minus_b.norm().max(1.0).powi(d as i32);
            let cand = i_minus_b.lu();
            if cand.determinant().abs() > guard {
                lu = Some(cand);
                break;
            }
        }
        let lu = lu.ok_or_else(|| {
            Error::DegenerateInstance(format!(
                "I - B numerically singular after {SINGULAR_RETRY_CAP} redraws"
            ))
        })?;
        let eps = draw_noise(spec, &mut rng);
        let v = lu
            .solve(&(&eps + &shift))
            .ok_or_else(|| Error::DegenerateInstance("structural solve failed".into()))?;
        y[row] = v[0];
        for c in 0..spec.p {
            x[(row, c)] = v[c + 1];
        }
    }
    SampleMatrix::new(x, y)
}

/// One dataset per declared shift, environment `i` on stream `i`.
pub fn simulate_shift_environments(spec: &SemSpec, n: usize) -> Result<Vec<SampleMatrix>> {
    (0..spec.k())
        .map(|i| simulate_environment(spec, &spec.shifts[i], i as u64, n))
        .collect()
}

/// A probe of the shift class: the scaled shift `c * A_i` with `|c| <= 1`,
/// which satisfies the conditional dominance defining the class.
#[derive(Debug, Clone, Copy)]
pub struct ShiftClassSample {
    pub base_index: usize,
    pub scaling: f64,
}

impl ShiftClassSample {
    pub fn new(base_index: usize, scaling: f64) -> Result<Self> {
        if !(scaling.is_finite() && scaling.abs() <= 1.0) {
            return Err(Error::DataValidation(format!(
                "scaling must satisfy |c| <= 1, got {scaling}"
            )));
        }
        Ok(Self { base_index, scaling })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RiskEstimate {
    pub base_index: usize,
    pub scaling: f64,
    pub risk: f64,
    /// Standard error of the Monte Carlo mean.
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct WorstRiskReport {
    pub base: Vec<RiskEstimate>,
    pub probes: Vec<RiskEstimate>,
    pub max_base_risk: f64,
    pub max_probe_risk: f64,
    /// `max_base_risk - max_probe_risk`; nonnegative up to Monte Carlo
    /// noise when the worst risk is attained at the base shifts.
    pub slack: f64,
    /// Combined standard error of the two maxima being compared.
    pub comparison_se: f64,
}

/// Monte Carlo risk of `beta` under one shift; Welford accumulation of the
/// squared errors.
pub fn estimate_risk(
    spec: &SemSpec,
    shift: &DVector<f64>,
    stream: u64,
    n: usize,
    beta: &DVector<f64>,
) -> Result<(f64, f64)> {
    if beta.len() != spec.p {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, expected {}",
            beta.len(),
            spec.p
        )));
    }
    let samples = simulate_environment(spec, shift, stream, n)?;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for row in 0..n {
        let mut pred = 0.0;
        for c in 0..spec.p {
            pred += beta[c] * samples.x()[(row, c)];
        }
        let sq = (samples.y()[row] - pred).powi(2);
        let delta = sq - mean;
        mean += delta / (row + 1) as f64;
        m2 += delta * (sq - mean);
    }
    let se = if n > 1 {
        (m2 / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, se))
}

/// Estimate the risk of every base shift and every probe.
///
/// A probe of base `i` reuses stream `i`, so its draws of `B` and `eps` are
/// coupled to the base estimate: a `c = 1` probe reproduces the base risk
/// exactly, and probes differ from the base only through the shift.
pub fn worst_risk_probe(
    spec: &SemSpec,
    beta: &DVector<f64>,
    probes: &[ShiftClassSample],
    n: usize,
) -> Result<WorstRiskReport> {
    spec.validate()?;
    let mut base = Vec::with_capacity(spec.k());
    for i in 0..spec.k() {
        let (risk, se) = estimate_risk(spec, &spec.shifts[i], i as u64, n, beta)?;
        base.push(RiskEstimate { base_index: i, scaling: 1.0, risk, se });
    }
    let mut probe_estimates = Vec::with_capacity(probes.len());
    for probe in probes {
        if probe.base_index >= spec.k() {
            return Err(Error::DataValidation(format!(
                "probe base index {} out of range",
                probe.base_index
            )));
        }
        let shift = &spec.shifts[probe.base_index] * probe.scaling;
        let (risk, se) = estimate_risk(spec, &shift, probe.base_index as u64, n, beta)?;
        probe_estimates.push(RiskEstimate {
            base_index: probe.base_index,
            scaling: probe.scaling,
            risk,
            se,
        });
    }
    let max_of = |estimates: &[RiskEstimate]| -> (f64, f64) {
        let mut risk = f64::NEG_INFINITY;
        let mut se = 0.0;
        for e in estimates {
            if e.risk > risk {
                risk = e.risk;
                se = e.se;
            }
        }
        (risk, se)
    };
    let (max_base_risk, se_base) = max_of(&base);
    let (max_probe_risk, se_probe) = if probe_estimates.is_empty() {
        (f64::NEG_INFINITY, 0.0)
    } else {
        max_of(&probe_estimates)
    };
    Ok(WorstRiskReport {
        base,
        probes: probe_estimates,
        max_base_risk,
        max_probe_risk,
        slack: max_base_risk - max_probe_risk,
        comparison_se: (se_base * se_base + se_probe * se_probe).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec(p: usize, shifts: Vec<DVector<f64>>) -> SemSpec {
        SemSpec {
            p,
            coefficients: CoefficientSampler::Fixed(DMatrix::zeros(p + 1, p + 1)),
            noise: NoiseSpec::Gaussian { sd: 0.0 },
            shifts,
            zero_target_shift: false,
            seed: 7,
        }
    }

    #[test]
    fn identity_solve_reproduces_shift() {
        let a = DVector::from_column_slice(&[1.5, -0.5, 2.0]);
        let spec = base_spec(2, vec![a.clone()]);
        let s = simulate_environment(&spec, &a, 0, 4).unwrap();
        for row in 0..4 {
            assert_eq!(s.y()[row], 1.5);
            assert_eq!(s.x()[(row, 0)], -0.5);
            assert_eq!(s.x()[(row, 1)], 2.0);
        }
    }

    #[test]
    fn fixed_coefficients_direct_solve() {
        // B with small norm, eps = 0: samples equal (I - B)^{-1} A.
        let b = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.0, 0.3]);
        let a = DVector::from_column_slice(&[1.0, 2.0]);
        let spec = SemSpec {
            p: 1,
            coefficients: CoefficientSampler::Fixed(b.clone()),
            noise: NoiseSpec::Gaussian { sd: 0.0 },
            shifts: vec![a.clone()],
            zero_target_shift: false,
            seed: 3,
        };
        let expected = (DMatrix::identity(2, 2) - &b).lu().solve(&a).unwrap();
        let s = simulate_environment(&spec, &a, 0, 2).unwrap();
        for row in 0..2 {
            assert!((s.y()[row] - expected[0]).abs() < 1e-14);
            assert!((s.x()[(row, 0)] - expected[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn clt_bound_on_standard_normal_noise() {
        let n = 100_000;
        let spec = SemSpec {
            noise: NoiseSpec::Gaussian { sd: 1.0 },
            ..base_spec(1, vec![DVector::zeros(2)])
        };
        let s = simulate_environment(&spec, &DVector::zeros(2), 0, n).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        let mean_y = s.y().mean();
        let mean_x = s.x().column(0).mean();
        assert!(mean_y.abs() < bound, "mean_y = {mean_y}");
        assert!(mean_x.abs() < bound, "mean_x = {mean_x}");
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let spec = SemSpec {
            coefficients: CoefficientSampler::GaussianIid { scale: 0.2 },
            noise: NoiseSpec::Gaussian { sd: 1.0 },
            ..base_spec(2, vec![DVector::from_column_slice(&[1.0, 0.0, -1.0])])
        };
        let a = &spec.shifts[0].clone();
        let s1 = simulate_environment(&spec, a, 0, 50).unwrap();
        let s2 = simulate_environment(&spec, a, 0, 50).unwrap();
        assert_eq!(s1.x(), s2.x());
        assert_eq!(s1.y(), s2.y());
    }

    #[test]
    fn zero_target_shift_option() {
        let a = DVector::from_column_slice(&[5.0, 1.0]);
        let spec = SemSpec { zero_target_shift: true, ..base_spec(1, vec![a.clone()]) };
        let s = simulate_environment(&spec, &a, 0, 1).unwrap();
        assert_eq!(s.y()[0], 0.0);
        assert_eq!(s.x()[(0, 0)], 1.0);
    }

    #[test]
    fn unit_probe_reproduces_base_exactly() {
        let spec = SemSpec {
            coefficients: CoefficientSampler::GaussianIid { scale: 0.15 },
            noise: NoiseSpec::Gaussian { sd: 0.7 },
            ..base_spec(1, vec![
                DVector::from_column_slice(&[1.0, 0.5]),
                DVector::from_column_slice(&[-0.5, 2.0]),
            ])
        };
        let beta = DVector::from_column_slice(&[0.4]);
        let probes = vec![
            ShiftClassSample::new(0, 1.0).unwrap(),
            ShiftClassSample::new(1, 1.0).unwrap(),
        ];
        let report = worst_risk_probe(&spec, &beta, &probes, 2000).unwrap();
        for (b, p) in report.base.iter().zip(report.probes.iter()) {
            assert_eq!(b.risk, p.risk);
        }
        assert_eq!(report.slack, 0.0);
    }

    #[test]
    fn scaled_probes_bounded_by_base_risk() {
        let spec = SemSpec {
            coefficients: CoefficientSampler::GaussianIid { scale: 0.1 },
            noise: NoiseSpec::Gaussian { sd: 0.5 },
            ..base_spec(2, vec![
                DVector::from_column_slice(&[1.0, 2.0, 0.0]),
                DVector::from_column_slice(&[0.0, -1.0, 1.0]),
            ])
        };
        let beta = DVector::from_column_slice(&[0.3, -0.2]);
        let mut probes = Vec::new();
        for i in 0..2 {
            for c in [0.0, 0.25, 0.5, 0.75, 1.0] {
                probes.push(ShiftClassSample::new(i, c).unwrap());
            }
        }
        let report = worst_risk_probe(&spec, &beta, &probes, 20_000).unwrap();
        assert!(
            report.max_probe_risk <= report.max_base_risk + 3.0 * report.comparison_se,
            "max probe {} vs max base {} (se {})",
            report.max_probe_risk,
            report.max_base_risk,
            report.comparison_se
        );
    }

    #[test]
    fn risk_monotone_in_scaling_without_feedback() {
        // B = 0 and uncorrelated noise: risk at c A_i decomposes into a
        // noise part plus c^2 times the shift part, so the coupled
        // estimates must be nondecreasing in c up to Monte Carlo noise.
        let spec = SemSpec {
            noise: NoiseSpec::Gaussian { sd: 1.0 },
            ..base_spec(1, vec![DVector::from_column_slice(&[2.0, 1.0])])
        };
        let beta = DVector::from_column_slice(&[0.25]);
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut risks = Vec::new();
        let mut ses = Vec::new();
        for &c in &grid {
            let shift = &spec.shifts[0] * c;
            let (risk, se) = estimate_risk(&spec, &shift, 0, 50_000, &beta).unwrap();
            risks.push(risk);
            ses.push(se);
        }
        for w in 0..grid.len() - 1 {
            let tol = 3.0 * (ses[w].powi(2) + ses[w + 1].powi(2)).sqrt();
            assert!(
                risks[w + 1] >= risks[w] - tol,
                "risk not monotone: {risks:?}"
            );
        }
    }

    #[test]
    fn cross_term_within_monte_carlo_noise() {
        // With B = 0 the error is w.eps + w.A with w.A deterministic, so
        // the empirical cross moment E[(w.eps)(w.A)] must vanish within SE.
        let a = DVector::from_column_slice(&[2.0, -1.0]);
        let spec = SemSpec {
            noise: NoiseSpec::Gaussian { sd: 1.0 },
            ..base_spec(1, vec![a.clone()])
        };
        let beta = DVector::from_column_slice(&[0.5]);
        let n = 50_000;
        let s = simulate_environment(&spec, &a, 0, n).unwrap();
        let wa = a[0] - beta[0] * a[1];
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for row in 0..n {
            let err = s.y()[row] - beta[0] * s.x()[(row, 0)];
            let cross = (err - wa) * wa;
            let delta = cross - mean;
            mean += delta / (row + 1) as f64;
            m2 += delta * (cross - mean);
        }
        let se = (m2 / (n - 1) as f64 / n as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "cross term {mean} vs se {se}");
    }
}
