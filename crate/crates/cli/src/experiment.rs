//! The experiment report: every number traces to a named artifact file, and
//! a rerun with the same seed root reproduces the report byte for byte
//! (wall-clock timings live in a separate meta file).

use serde::{Deserialize, Serialize};

use pekar_core::report::{FreeEnergySection, SolverSummary, TrendSection, TubeSection};
use pekar_core::sampler::TiResult;

use crate::config::MasterConfig;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClauseOutcome {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub clauses: Vec<ClauseOutcome>,
}

impl CriterionOutcome {
    pub fn new(id: u32, name: &str) -> Self {
        CriterionOutcome { id, name: name.into(), passed: true, clauses: Vec::new() }
    }

    pub fn clause(&mut self, label: &str, passed: bool, detail: String) {
        self.passed &= passed;
        self.clauses.push(ClauseOutcome { label: label.into(), passed, detail });
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderReport {
    pub t: f64,
    pub betas: Vec<f64>,
    pub swap_rates: Vec<f64>,
    pub mean_h_per_beta: Vec<f64>,
    pub se_h_per_beta: Vec<f64>,
    pub acceptance_interior_beta1: f64,
    pub acceptance_endpoint_beta1: f64,
    pub max_cache_gap: f64,
    pub samples_csv_beta0: String,
    pub samples_csv_beta1: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdeReport {
    pub l1_pekar: f64,
    pub l1_ou_control: f64,
    pub lambda: f64,
    pub far_field_hits: u64,
    pub recorded_samples: u64,
    pub seed: u64,
    pub histogram_csv: String,
    pub ou_histogram_csv: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeEnergyReport {
    pub section: FreeEnergySection,
    pub ti: Vec<TiResult>,
    pub integrand_csv: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalW1Report {
    /// Wasserstein-1 distances between the axis marginals of a synthetic
    /// psi0^2 sample (10^4 points, centered by its best shift) and the
    /// psi0^2 marginal: calibrates the sup-metric surrogate for Y.
    pub n_points: usize,
    pub per_axis: [f64; 3],
    pub best_shift: [f64; 3],
    pub orbit_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub report_schema_version: u32,
    pub version: String,
    pub seed_root: u64,
    pub config: MasterConfig,
    pub solver: SolverSummary,
    pub solver_artifacts: Vec<String>,
    pub ladders: Vec<LadderReport>,
    pub shift_law: TrendSection,
    pub endpoint_law: TrendSection,
    pub tube: TubeSection,
    pub free_energy: FreeEnergyReport,
    pub sde: SdeReport,
    pub marginal_w1: MarginalW1Report,
    pub criteria: Vec<CriterionOutcome>,
    pub all_criteria_passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_seconds: f64,
    pub budget_warning: Option<String>,
    pub threads: usize,
}
