//! Monte Carlo convergence experiments: solve on exact population moments
//! to fix the reference solution set, then re-solve on empirical moments at
//! increasing sample sizes and track the set distance to the reference.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::moments::{compute_moments, EnvironmentMoments, SampleMatrix};
use crate::risk::WeightScheme;
use crate::solver::{median, set_distance, solve, SolutionReport, SolverOptions};

/// Sampling distribution realizing declared second moments. The normal
/// case matches them exactly; the Student-t variant (dof > 2, rescaled to
/// unit variance) exists for robustness studies.
#[derive(Debug, Clone, Copy)]
pub enum SampleGenerator {
    Normal,
    StudentT { dof: f64 },
}

#[derive(Debug, Clone)]
pub struct ConsistencyExperiment {
    /// Exact population moments per environment.
    pub envs: Vec<EnvironmentMoments>,
    pub scheme: WeightScheme,
    pub n_schedule: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub generator: SampleGenerator,
    pub opts: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct ConsistencyPoint {
    pub n: usize,
    /// Median over replications of `dist(epsilon set, reference set)`.
    pub median_distance: f64,
    pub median_epsilon_cardinality: f64,
    pub median_chosen_cardinality: f64,
    /// Replications whose chosen set was a single point.
    pub unique_chosen_count: usize,
    pub degenerate_count: usize,
}

#[derive(Debug, Clone)]
pub struct ConsistencyCurve {
    pub reference: Vec<DVector<f64>>,
    pub reference_min: f64,
    pub points: Vec<ConsistencyPoint>,
}

/// Factor `L` with `L L^T = [[G, Z], [Z^T, y2]]` via the symmetric
/// eigendecomposition, tolerating semidefiniteness.
fn moment_factor(env: &EnvironmentMoments) -> DMatrix<f64> {
    let p = env.p();
    let mut block = DMatrix::zeros(p + 1, p + 1);
    block.view_mut((0, 0), (p, p)).copy_from(env.g());
    for r in 0..p {
        block[(r, p)] = env.z()[r];
        block[(p, r)] = env.z()[r];
    }
    block[(p, p)] = env.y2();
    let eig = block.symmetric_eigen();
    let mut l = eig.eigenvectors.clone();
    for c in 0..p + 1 {
        let lambda = eig.eigenvalues[c].max(0.0).sqrt();
        for r in 0..p + 1 {
            l[(r, c)] *= lambda;
        }
    }
    l
}

/// Draw `n` samples whose population second moments equal the declared
/// ones: `(x, y) = L z` with `z` iid standardized.
pub fn sample_from_moments(
    env: &EnvironmentMoments,
    n: usize,
    rng: &mut ChaCha8Rng,
    generator: SampleGenerator,
) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::DataValidation("need at least one sample".into()));
    }
    let p = env.p();
    let l = moment_factor(env);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut z = DVector::zeros(p + 1);
    for row in 0..n {
        for d in 0..p + 1 {
            z[d] = match generator {
                SampleGenerator::Normal => rng.sample::<f64, _>(StandardNormal),
                SampleGenerator::StudentT { dof } => {
                    let t = StudentT::new(dof).map_err(|e| {
                        Error::DataValidation(format!("invalid Student-t dof: {e}"))
                    })?;
                    // Rescale to unit variance (requires dof > 2).
                    t.sample(rng) * ((dof - 2.0) / dof).sqrt()
                }
            };
        }
        let v = &l * &z;
        for c in 0..p {
            x[(row, c)] = v[c];
        }
        y[row] = v[p];
    }
    SampleMatrix::new(x, y)
}

fn chosen_betas(report: &SolutionReport) -> Vec<DVector<f64>> {
    report
        .chosen
        .iter()
        .map(|&i| report.candidates[i].beta.clone())
        .collect()
}

fn epsilon_betas(report: &SolutionReport) -> Vec<DVector<f64>> {
    report
        .epsilon_set
        .iter()
        .map(|&i| report.candidates[i].beta.clone())
        .collect()
}

/// Run the experiment: the reference set comes from solving the exact
/// moments; each replication draws data, re-estimates moments, solves, and
/// records the set distance of its epsilon set to the reference.
pub fn run_consistency(exp: &ConsistencyExperiment) -> Result<ConsistencyCurve> {
    let reference_report = solve(&exp.scheme, &exp.envs, &exp.opts)?;
    if reference_report.degenerate.is_some() {
        return Err(Error::DegenerateInstance(
            "population solve is degenerate; no reference set".into(),
        ));
    }
    let reference = chosen_betas(&reference_report);
    let k = exp.envs.len();
    let mut points = Vec::with_capacity(exp.n_schedule.len());
    for (ni, &n) in exp.n_schedule.iter().enumerate() {
        let mut distances = Vec::new();
        let mut eps_cards = Vec::new();
        let mut chosen_cards = Vec::new();
        let mut unique_chosen = 0;
        let mut degenerate = 0;
        for r in 0..exp.replications {
            let mut emp_envs = Vec::with_capacity(k);
            for u in 0..k {
                let stream = (ni as u64 * 1_000_000 + r as u64) * 64 + u as u64;
                let mut rng = crate::sem::stream_rng(exp.seed, stream);
                let samples = sample_from_moments(&exp.envs[u], n, &mut rng, exp.generator)?;
                emp_envs.push(compute_moments(&samples)?);
            }
            let report = solve(&exp.scheme, &emp_envs, &exp.opts)?;
            if report.degenerate.is_some() {
                degenerate += 1;
                continue;
            }
            distances.push(set_distance(&epsilon_betas(&report), &reference));
            eps_cards.push(report.epsilon_set.len() as f64);
            chosen_cards.push(report.chosen.len() as f64);
            if report.chosen.len() == 1 {
                unique_chosen += 1;
            }
        }
        points.push(ConsistencyPoint {
            n,
            median_distance: median(&mut distances),
            median_epsilon_cardinality: median(&mut eps_cards),
            median_chosen_cardinality: median(&mut chosen_cards),
            unique_chosen_count: unique_chosen,
            degenerate_count: degenerate,
        });
    }
    Ok(ConsistencyCurve {
        reference,
        reference_min: reference_report.min_value.unwrap_or(f64::NAN),
        points,
    })
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

    #[test]
    fn sampled_moments_converge_to_declared() {
        // G = I2, Z = (0.5, -0.25), y2 = 1.5 (PSD block).
        let e = env(&[1.0, 0.0, 0.0, 1.0], &[0.5, -0.25], 1.5);
        let mut rng = crate::sem::stream_rng(11, 0);
        let s = sample_from_moments(&e, 200_000, &mut rng, SampleGenerator::Normal).unwrap();
        let m = compute_moments(&s).unwrap();
        let tol = 4.0 / (200_000_f64).sqrt() * 3.0;
        assert!((m.g()[(0, 0)] - 1.0).abs() < tol);
        assert!((m.g()[(0, 1)]).abs() < tol);
        assert!((m.z()[0] - 0.5).abs() < tol);
        assert!((m.y2() - 1.5).abs() < tol * 2.0);
    }

    #[test]
    fn near_degenerate_variance_keeps_distances_tiny() {
        // Tiny residual variance around an exact linear relation: empirical
        // solves sit on top of the population solution at every n.
        let sigma2 = 1e-6;
        let envs = vec![
            env(&[1.0], &[0.0], sigma2),
            env(&[1.0], &[2.0], 4.0 + sigma2),
        ];
        let exp = ConsistencyExperiment {
            envs,
            scheme: WeightScheme::classic(2),
            n_schedule: vec![100, 1000],
            replications: 5,
            seed: 5,
            generator: SampleGenerator::Normal,
            opts: SolverOptions::default(),
        };
        let curve = run_consistency(&exp).unwrap();
        assert_eq!(curve.reference.len(), 1);
        assert_relative_eq!(curve.reference[0][0], 1.0, epsilon = 1e-9);
        for point in &curve.points {
            assert!(point.median_distance < 1e-2, "{point:?}");
            assert_eq!(point.degenerate_count, 0);
        }
    }

    #[test]
    fn classic_fixture_distance_shrinks() {
        let envs = vec![env(&[1.0], &[0.0], 1.0), env(&[1.0], &[2.0], 5.0)];
        let exp = ConsistencyExperiment {
            envs,
            scheme: WeightScheme::classic(2),
            n_schedule: vec![100, 10_000],
            replications: 9,
            seed: 42,
            generator: SampleGenerator::Normal,
            opts: SolverOptions::default(),
        };
        let curve = run_consistency(&exp).unwrap();
        let d0 = curve.points[0].median_distance;
        let d1 = curve.points[1].median_distance;
        assert!(d1 < d0, "median distances not shrinking: {d0} vs {d1}");
        // Strict convexity: one chosen point at the larger n.
        assert_eq!(curve.points[1].median_chosen_cardinality, 1.0);
    }
}
