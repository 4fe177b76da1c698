//! The machine-readable solution report.

use serde::{Deserialize, Serialize};

use riskset_core::pencil::PairFlag;
use riskset_core::solver::{CandidateSource, SolutionReport};
use riskset_core::Tolerances;

use crate::config::RunConfig;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceJson {
    Inflexion { form: usize },
    Intersection { i: usize, j: usize, lambda: f64 },
}

impl From<&CandidateSource> for SourceJson {
    fn from(source: &CandidateSource) -> Self {
        match source {
            CandidateSource::Inflexion { form } => SourceJson::Inflexion { form: *form },
            CandidateSource::Intersection { i, j, lambda } => {
                SourceJson::Intersection { i: *i, j: *j, lambda: *lambda }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CandidateJson {
    pub beta: Vec<f64>,
    pub source: SourceJson,
    pub f_value: f64,
    pub active: Vec<usize>,
    pub admissible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RejectedRootJson {
    pub lambda: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairJson {
    pub pair: (usize, usize),
    pub kept: usize,
    pub selected: usize,
    pub rejected: Vec<RejectedRootJson>,
    pub flags: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagnosticsJson {
    pub pairs: Vec<PairJson>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TolerancesEcho {
    pub tau_active: f64,
    pub tau_sing: f64,
    pub tau_lin: f64,
    pub tau_gap: f64,
    pub eps_trim: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConfigEcho {
    pub environments: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    /// Effective epsilon (resolved default when the config left it unset).
    pub epsilon: Option<f64>,
    pub tolerances: TolerancesEcho,
    pub c_n: u32,
    pub interval_budget: u64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportFile {
    pub version: u32,
    pub config_echo: ConfigEcho,
    pub candidates: Vec<CandidateJson>,
    pub chosen: Vec<usize>,
    pub epsilon_set: Vec<usize>,
    pub min_value: Option<f64>,
    pub diagnostics: DiagnosticsJson,
    pub timing_ms: u64,
}

fn flag_name(flag: &PairFlag) -> String {
    match flag {
        PairFlag::IdenticalForms => "identical_forms".into(),
        PairFlag::NonAttainedInfimum => "non_attained_infimum".into(),
    }
}

pub fn build_report(
    config: &RunConfig,
    tol: &Tolerances,
    solution: &SolutionReport,
    timing_ms: u64,
) -> ReportFile {
    let mut warnings = solution.diagnostics.warnings.clone();
    if let Some(reason) = &solution.degenerate {
        warnings.push(format!("degenerate instance: {reason}"));
    }
    let roots = config.solver_options().roots;
    ReportFile {
        version: REPORT_VERSION,
        config_echo: ConfigEcho {
            environments: config
                .environments
                .iter()
                .map(|e| e.csv.display().to_string())
                .collect(),
            weights: config.weights.clone(),
            intercepts: config.intercepts.clone(),
            epsilon: solution.epsilon,
            tolerances: TolerancesEcho {
                tau_active: tol.tau_active,
                tau_sing: tol.tau_sing,
                tau_lin: tol.tau_lin,
                tau_gap: tol.tau_gap,
                eps_trim: tol.eps_trim,
            },
            c_n: roots.c_n,
            interval_budget: roots.interval_budget,
            seed: config.seed,
        },
        candidates: solution
            .candidates
            .iter()
            .map(|c| CandidateJson {
                beta: c.beta.iter().cloned().collect(),
                source: (&c.source).into(),
                f_value: c.f_value,
                active: c.active.clone(),
                admissible: c.admissible,
            })
            .collect(),
        chosen: solution.chosen.clone(),
        epsilon_set: solution.epsilon_set.clone(),
        min_value: solution.min_value,
        diagnostics: DiagnosticsJson {
            pairs: solution
                .diagnostics
                .pairs
                .iter()
                .map(|p| PairJson {
                    pair: p.pair,
                    kept: p.kept,
                    selected: p.selected,
                    rejected: p
                        .rejected
                        .iter()
                        .map(|(lambda, reason)| RejectedRootJson {
                            lambda: *lambda,
                            reason: reason.clone(),
                        })
                        .collect(),
                    flags: p.flags.iter().map(flag_name).collect(),
                    error: p.error.clone(),
                })
                .collect(),
            warnings,
        },
        timing_ms,
    }
}
