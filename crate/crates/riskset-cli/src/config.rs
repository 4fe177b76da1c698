//! JSON-facing configuration structs and their mapping onto core types.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use riskset_core::moments::{CsvSchema, EnvironmentMoments};
use riskset_core::poly::RootPipelineOptions;
use riskset_core::risk::WeightScheme;
use riskset_core::sem::{CoefficientSampler, NoiseSpec, SemSpec};
use riskset_core::solver::SolverOptions;
use riskset_core::Tolerances;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnvironmentConfig {
    pub csv: PathBuf,
    pub target: String,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TolerancesConfig {
    pub tau_active: Option<f64>,
    pub tau_sing: Option<f64>,
    pub tau_lin: Option<f64>,
    pub tau_gap: Option<f64>,
    pub eps_trim: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BisectionConfig {
    pub c_n: Option<u32>,
    pub interval_budget: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environments: Vec<EnvironmentConfig>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub tolerances: TolerancesConfig,
    #[serde(default)]
    pub bisection: BisectionConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn scheme(&self) -> Result<WeightScheme> {
        let m = self.weights.len();
        anyhow::ensure!(m > 0, "weights matrix is empty");
        let k = self.weights[0].len();
        anyhow::ensure!(
            self.weights.iter().all(|row| row.len() == k),
            "weights rows have unequal lengths"
        );
        anyhow::ensure!(
            k == self.environments.len(),
            "weights have k = {k} columns but {} environments are configured",
            self.environments.len()
        );
        let w = DMatrix::from_fn(m, k, |r, c| self.weights[r][c]);
        let kappa = DVector::from_column_slice(&self.intercepts);
        Ok(WeightScheme::new(w, kappa)?)
    }

    /// Load every environment CSV and reduce it to moments.
    pub fn load_environments(&self) -> Result<Vec<EnvironmentMoments>> {
        self.environments
            .iter()
            .map(|env| {
                let schema = CsvSchema {
                    target: env.target.clone(),
                    covariates: env.covariates.clone(),
                };
                let samples = riskset_core::moments::load_environment_csv(&env.csv, &schema)
                    .with_context(|| format!("loading {}", env.csv.display()))?;
                Ok(riskset_core::moments::compute_moments(&samples)?)
            })
            .collect()
    }

    pub fn effective_tolerances(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            tau_active: self.tolerances.tau_active.unwrap_or(d.tau_active),
            tau_sing: self.tolerances.tau_sing.unwrap_or(d.tau_sing),
            tau_lin: self.tolerances.tau_lin.unwrap_or(d.tau_lin),
            tau_gap: self.tolerances.tau_gap.unwrap_or(d.tau_gap),
            eps_trim: self.tolerances.eps_trim.unwrap_or(d.eps_trim),
            ..d
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        let tol = self.effective_tolerances();
        let roots_default = RootPipelineOptions::default();
        SolverOptions {
            tol,
            roots: RootPipelineOptions {
                interval_budget: self
                    .bisection
                    .interval_budget
                    .unwrap_or(roots_default.interval_budget),
                c_n: self.bisection.c_n.unwrap_or(roots_default.c_n),
                eps_trim: tol.eps_trim,
                ..roots_default
            },
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoefficientsConfig {
    Fixed { matrix: Vec<Vec<f64>> },
    GaussianIid { scale: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SemSpecConfig {
    pub p: usize,
    pub coefficients: CoefficientsConfig,
    /// Standard deviation of the iid Gaussian noise coordinates.
    pub noise_sd: f64,
    /// Shift vectors in R^{p+1}, target coordinate first.
    pub shifts: Vec<Vec<f64>>,
    #[serde(default)]
    pub zero_target_shift: bool,
    pub seed: u64,
}

impl SemSpecConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading SEM spec {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing SEM spec {}", path.display()))
    }

    pub fn to_core(&self) -> Result<SemSpec> {
        let d = self.p + 1;
        let coefficients = match &self.coefficients {
            CoefficientsConfig::Fixed { matrix } => {
                anyhow::ensure!(
                    matrix.len() == d && matrix.iter().all(|row| row.len() == d),
                    "coefficient matrix must be {d}x{d}"
                );
                CoefficientSampler::Fixed(DMatrix::from_fn(d, d, |r, c| matrix[r][c]))
            }
            CoefficientsConfig::GaussianIid { scale } => {
                CoefficientSampler::GaussianIid { scale: *scale }
            }
        };
        let spec = SemSpec {
            p: self.p,
            coefficients,
            noise: NoiseSpec::Gaussian { sd: self.noise_sd },
            shifts: self
                .shifts
                .iter()
                .map(|s| DVector::from_column_slice(s))
                .collect(),
            zero_target_shift: self.zero_target_shift,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MomentsConfig {
    pub g: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub y2: f64,
}

impl MomentsConfig {
    pub fn to_core(&self) -> Result<EnvironmentMoments> {
        let p = self.z.len();
        anyhow::ensure!(
            self.g.len() == p && self.g.iter().all(|row| row.len() == p),
            "G must be {p}x{p}"
        );
        let g = DMatrix::from_fn(p, p, |r, c| self.g[r][c]);
        Ok(EnvironmentMoments::population(
            g,
            DVector::from_column_slice(&self.z),
            self.y2,
        )?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConsistencySpecConfig {
    /// Exact population moments per environment.
    pub environments: Vec<MomentsConfig>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub n_schedule: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl ConsistencySpecConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading consistency spec {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing consistency spec {}", path.display()))
    }

    pub fn scheme(&self) -> Result<WeightScheme> {
        let m = self.weights.len();
        anyhow::ensure!(m > 0, "weights matrix is empty");
        let k = self.weights[0].len();
        anyhow::ensure!(
            self.weights.iter().all(|row| row.len() == k),
            "weights rows have unequal lengths"
        );
        let w = DMatrix::from_fn(m, k, |r, c| self.weights[r][c]);
        Ok(WeightScheme::new(
            w,
            DVector::from_column_slice(&self.intercepts),
        )?)
    }
}
