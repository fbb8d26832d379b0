//! Result files: `design.json` and `summary.json`.

use std::path::Path;

use cloudpriv_core::infoflow::PrivacyReport;
use cloudpriv_core::maxdet::{zero_information_cost, CovariancePlan, MaxDetProblem, SolverStats};
use cloudpriv_core::model::ValidatedInstance;
use cloudpriv_core::simulate::MonteCarloSummary;
use cloudpriv_core::synthesis::FilterDesign;
use cloudpriv_core::{nats_to_bits, DMatrix};
use serde::{Deserialize, Serialize};

use crate::config::{matrix_from_rows, matrix_rows, InstanceSpec, SCHEMA_VERSION};

type Rows = Vec<Vec<f64>>;

fn rows_seq(v: &[DMatrix<f64>]) -> Vec<Rows> {
    v.iter().map(matrix_rows).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BudgetRecord {
    /// Budget `D` in the units of the estimation-cost constraint.
    #[serde(rename = "D")]
    pub d: f64,
    pub c2: f64,
    pub mean_cost: f64,
    pub zero_information_cost: f64,
    pub budget_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolverRecord {
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    pub duality_gap_bound_bits: f64,
    pub final_newton_decrement: f64,
    pub zero_information: bool,
    pub pi_tightness_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PlanRecord {
    #[serde(rename = "Pfilt")]
    pub p_filt: Vec<Rows>,
    #[serde(rename = "Pi")]
    pub pi: Vec<Rows>,
    #[serde(rename = "Ppred")]
    pub p_pred: Vec<Rows>,
    pub objective_bits: f64,
    pub solver: SolverRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FilterRecord {
    /// Sensor rank `r_t`; `C_t` is `r_t × n`.
    pub ranks: Vec<usize>,
    #[serde(rename = "C")]
    pub c: Vec<Rows>,
    #[serde(rename = "SigmaV")]
    pub sigma_v: Vec<Rows>,
    #[serde(rename = "L")]
    pub l: Vec<Rows>,
    #[serde(rename = "K")]
    pub k: Vec<Rows>,
    pub snr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PrivacyRecord {
    pub privacy_bits: f64,
    pub per_step_bits: Vec<f64>,
    #[serde(rename = "diXtoUBits")]
    pub di_x_to_u_bits: Option<f64>,
    #[serde(rename = "diXtoYgivenUBits")]
    pub di_x_to_y_given_u_bits: Option<f64>,
    pub distortion_rate_floor: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DesignFile {
    pub schema_version: u32,
    pub kind: String,
    pub instance: InstanceSpec,
    pub budget: BudgetRecord,
    pub plan: PlanRecord,
    pub filter: FilterRecord,
    pub privacy: PrivacyRecord,
}

pub const DESIGN_KIND: &str = "design";
pub const SUMMARY_KIND: &str = "monteCarloSummary";

impl DesignFile {
    pub fn new(instance: &ValidatedInstance, problem: &MaxDetProblem, design: &FilterDesign, report: &PrivacyReport) -> Self {
        let plan = &design.plan;
        let stats = &plan.stats;
        Self {
            schema_version: SCHEMA_VERSION,
            kind: DESIGN_KIND.into(),
            instance: InstanceSpec::from_instance(instance),
            budget: BudgetRecord {
                d: problem.budget,
                c2: problem.c2,
                mean_cost: problem.mean_cost,
                zero_information_cost: zero_information_cost(problem),
                budget_slack: stats.budget_slack,
            },
            plan: PlanRecord {
                p_filt: rows_seq(&plan.p_filt),
                pi: rows_seq(&plan.pi),
                p_pred: rows_seq(&plan.p_pred),
                objective_bits: plan.objective_bits(),
                solver: SolverRecord {
                    outer_iterations: stats.outer_iterations,
                    newton_iterations: stats.newton_iterations,
                    duality_gap_bound_bits: nats_to_bits(stats.duality_gap_bound),
                    final_newton_decrement: stats.final_newton_decrement,
                    zero_information: stats.zero_information,
                    pi_tightness_residual: stats.pi_tightness_residual,
                },
            },
            filter: FilterRecord {
                ranks: design.ranks(),
                c: rows_seq(&design.c),
                sigma_v: rows_seq(&design.sigma_v),
                l: rows_seq(&design.l),
                k: rows_seq(&design.k),
                snr: design.snr(),
            },
            privacy: PrivacyRecord {
                privacy_bits: report.total_bits,
                per_step_bits: report.per_step_bits.clone(),
                di_x_to_u_bits: report.di_x_to_u_bits,
                di_x_to_y_given_u_bits: report.di_x_to_y_given_u_bits,
                distortion_rate_floor: report.distortion_rate_floor.clone(),
            },
        }
    }

    /// Reads and schema-checks a design file. Errors are plain messages so
    /// callers can attach their own exit semantics.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let file: Self = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(format!("{}: unsupported schemaVersion {}", path.display(), file.schema_version));
        }
        if file.kind != DESIGN_KIND {
            return Err(format!("{}: kind {:?} is not a design", path.display(), file.kind));
        }
        Ok(file)
    }

    /// Rebuilds the design for `instance`; fails on any shape disagreement.
    pub fn to_design(&self, instance: &ValidatedInstance) -> Result<FilterDesign, String> {
        let n = instance.state_dim();
        let m = instance.input_dim();
        let horizon = instance.horizon();
        let f = &self.filter;
        let lengths = [
            f.ranks.len(),
            f.c.len(),
            f.sigma_v.len(),
            f.l.len(),
            f.k.len(),
            self.plan.p_filt.len(),
            self.plan.pi.len(),
            self.plan.p_pred.len(),
            self.privacy.per_step_bits.len(),
        ];
        if lengths.iter().any(|&len| len != horizon) {
            return Err(format!("design sequences do not all have length {horizon}"));
        }
        let shaped = |rows: &Rows, shape: (usize, usize), name: &str| -> Result<DMatrix<f64>, String> {
            let mat = matrix_from_rows(rows, shape.1, name).map_err(|e| e.to_string())?;
            if mat.shape() != shape {
                return Err(format!("{name} has shape {:?}, expected {shape:?}", mat.shape()));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(format!("{name} has a non-finite entry"));
            }
            Ok(mat)
        };
        let mut design = FilterDesign {
            c: Vec::with_capacity(horizon),
            sigma_v: Vec::with_capacity(horizon),
            l: Vec::with_capacity(horizon),
            k: Vec::with_capacity(horizon),
            plan: CovariancePlan {
                p_filt: Vec::with_capacity(horizon),
                pi: Vec::with_capacity(horizon),
                p_pred: Vec::with_capacity(horizon),
                objective_nats: self.plan.objective_bits * std::f64::consts::LN_2,
                stats: SolverStats {
                    outer_iterations: self.plan.solver.outer_iterations,
                    newton_iterations: self.plan.solver.newton_iterations,
                    duality_gap_bound: self.plan.solver.duality_gap_bound_bits * std::f64::consts::LN_2,
                    final_newton_decrement: self.plan.solver.final_newton_decrement,
                    budget_slack: self.budget.budget_slack,
                    zero_information: self.plan.solver.zero_information,
                    pi_tightness_residual: self.plan.solver.pi_tightness_residual,
                },
            },
            privacy_bits: self.privacy.privacy_bits,
            privacy_per_step_bits: self.privacy.per_step_bits.clone(),
        };
        for t in 0..horizon {
            let r = f.ranks[t];
            let step = t + 1;
            design.c.push(shaped(&f.c[t], (r, n), &format!("C[{step}]"))?);
            design.sigma_v.push(shaped(&f.sigma_v[t], (r, r), &format!("SigmaV[{step}]"))?);
            design.l.push(shaped(&f.l[t], (n, r), &format!("L[{step}]"))?);
            design.k.push(shaped(&f.k[t], (m, n), &format!("K[{step}]"))?);
            design.plan.p_filt.push(shaped(&self.plan.p_filt[t], (n, n), &format!("Pfilt[{step}]"))?);
            design.plan.pi.push(shaped(&self.plan.pi[t], (n, n), &format!("Pi[{step}]"))?);
            design.plan.p_pred.push(shaped(&self.plan.p_pred[t], (n, n), &format!("Ppred[{step}]"))?);
        }
        Ok(design)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub kind: String,
    pub trials: usize,
    pub seed: u64,
    pub mean_cost: f64,
    pub cost_std_error: f64,
    /// Includes `m1ᵀΦ_1m1`, which simulation always incurs.
    pub predicted_cost: f64,
    pub cost_consistent: bool,
    pub mean_squared_error: Vec<f64>,
    pub error_covariance: Vec<Rows>,
    pub design_snr: Vec<f64>,
    pub empirical_snr: Vec<f64>,
}

impl SummaryFile {
    pub fn new(summary: &MonteCarloSummary) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: SUMMARY_KIND.into(),
            trials: summary.trials,
            seed: summary.seed,
            mean_cost: summary.mean_cost,
            cost_std_error: summary.cost_std_error,
            predicted_cost: summary.predicted_cost,
            cost_consistent: summary.cost_consistent,
            mean_squared_error: summary.mean_squared_error.clone(),
            error_covariance: rows_seq(&summary.error_covariance),
            design_snr: summary.design_snr.clone(),
            empirical_snr: summary.empirical_snr.clone(),
        }
    }
}
