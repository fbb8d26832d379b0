//! Invariant suites behind `cloudpriv verify`.

use std::fmt;
use std::path::Path;

use cloudpriv_core::infoflow::{directed_info_from_plan, directed_info_joint_oracle, distortion_rate_floor};
use cloudpriv_core::leakage::{check_data_processing, leakage_logloss, DiscreteJoint, StatisticMap};
use cloudpriv_core::linalg::{logdet_eigen, scale};
use cloudpriv_core::maxdet::{build_problem, solve, verify_plan, MaxDetProblem, SolverTolerances};
use cloudpriv_core::model::ValidatedInstance;
use cloudpriv_core::riccati::backward_riccati;
use cloudpriv_core::scenario::{budget_at_fraction, navigation, random_instance};
use cloudpriv_core::simulate::GaussianStream;
use cloudpriv_core::synthesis::{design_from_plan, realized_covariances, FilterDesign};
use cloudpriv_core::{DMatrix, Error as CoreError};

use crate::artifacts::DesignFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    Maxdet,
    Infoflow,
    Leakage,
    Distortion,
    /// Only the design files given on the command line.
    Files,
}

impl Scope {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "all" => Self::All,
            "maxdet" => Self::Maxdet,
            "infoflow" => Self::Infoflow,
            "leakage" => Self::Leakage,
            "distortion" => Self::Distortion,
            "files" => Self::Files,
            _ => return None,
        })
    }

    fn includes(self, other: Scope) -> bool {
        self == Scope::All || self == other
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict}\t{}\t{}\t{}", self.suite, self.name, self.detail)
    }
}

#[derive(Debug, Default)]
pub struct Table {
    pub checks: Vec<Check>,
}

impl Table {
    fn push(&mut self, suite: &str, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { suite: suite.into(), name: name.into(), passed, detail: detail.into() });
    }

    /// `value ≤ bound`.
    fn at_most(&mut self, suite: &str, name: impl Into<String>, value: f64, bound: f64) {
        self.push(suite, name, value <= bound, format!("{value:.3e} <= {bound:.1e}"));
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn at_fraction(inst: &ValidatedInstance, fraction: f64) -> ValidatedInstance {
    inst.with_delta(budget_at_fraction(inst, fraction)).expect("positive budget")
}

fn formula_nats(pred: &[DMatrix<f64>], filt: &[DMatrix<f64>]) -> f64 {
    pred.iter().zip(filt).map(|(p, f)| 0.5 * (logdet_eigen(p).unwrap_or(f64::NAN) - logdet_eigen(f).unwrap_or(f64::NAN))).sum()
}

fn solve_design(inst: &ValidatedInstance) -> Result<(MaxDetProblem, FilterDesign), CoreError> {
    let riccati = backward_riccati(inst)?;
    let problem = build_problem(inst, &riccati);
    let plan = solve(&problem, SolverTolerances::default())?;
    let design = design_from_plan(inst, riccati.k, plan)?;
    Ok((problem, design))
}

fn maxdet_suite(table: &mut Table) {
    const SUITE: &str = "maxdet";
    let nav = navigation(1.0, 1.0);
    let mut cases: Vec<(String, ValidatedInstance)> =
        [0.05, 0.3, 0.7].iter().map(|f| (format!("navigation f={f}"), at_fraction(&nav, *f))).collect();
    for seed in 0..5u64 {
        let n = 1 + (seed % 3) as usize;
        let inst = random_instance(n, 1 + (seed % 2) as usize, 4 + 2 * seed as usize, seed);
        cases.push((format!("random seed={seed} n={n}"), at_fraction(&inst, 0.25 + 0.1 * seed as f64)));
    }
    for (label, inst) in cases {
        match solve_design(&inst) {
            Ok((problem, design)) => {
                let plan = &design.plan;
                let report = verify_plan(&problem, plan);
                let failed: Vec<String> = report.failures().map(|c| c.name.clone()).collect();
                table.push(SUITE, format!("{label} certificates"), failed.is_empty(), failed.join(" "));
                let gap = (plan.objective_nats - formula_nats(&plan.p_pred, &plan.p_filt)).abs();
                table.at_most(SUITE, format!("{label} objective identity (nats)"), gap, 1e-6);
                table.at_most(SUITE, format!("{label} tightness"), plan.stats.pi_tightness_residual, 1e-5);
            }
            Err(e) => table.push(SUITE, format!("{label} solve"), false, e.to_string()),
        }
    }
    let inst = nav.with_delta(1.0).expect("positive budget");
    let infeasible = matches!(solve_design(&inst), Err(CoreError::Infeasible(_)));
    table.push(SUITE, "budget below c2 is infeasible", infeasible, "");
    match solve_design(&at_fraction(&nav, 1.0)) {
        Ok((_, d)) => table.push(SUITE, "zero-information budget", d.privacy_bits == 0.0, format!("{} bits", d.privacy_bits)),
        Err(e) => table.push(SUITE, "zero-information budget", false, e.to_string()),
    }
}

fn infoflow_suite(table: &mut Table) {
    const SUITE: &str = "infoflow";
    let mut cases = Vec::new();
    for seed in 0..3u64 {
        cases.push((format!("scalar seed={seed}"), at_fraction(&random_instance(1, 1, 5, seed), 0.3)));
    }
    cases.push(("n=2 seed=3".to_string(), at_fraction(&random_instance(2, 1, 5, 3), 0.3)));
    for (label, inst) in cases {
        let design = match solve_design(&inst) {
            Ok((_, d)) => d,
            Err(e) => {
                table.push(SUITE, format!("{label} design"), false, e.to_string());
                continue;
            }
        };
        match directed_info_joint_oracle(&design, &inst) {
            Ok(o) => {
                table.at_most(SUITE, format!("{label} equality"), (o.di_x_to_u_bits - o.di_x_to_y_given_u_bits).abs(), 1e-6);
                table.at_most(
                    SUITE,
                    format!("{label} oracle vs plan"),
                    (o.di_x_to_y_given_u_bits - design.privacy_bits).abs(),
                    1e-6,
                );
            }
            Err(e) => table.push(SUITE, format!("{label} oracle"), false, e.to_string()),
        }
        let mut perturbed = design.clone();
        perturbed.l.iter_mut().for_each(|l| *l *= 1.1);
        match directed_info_joint_oracle(&perturbed, &inst) {
            Ok(o) => table.at_most(
                SUITE,
                format!("{label} feedback inequality (perturbed L)"),
                o.di_x_to_u_bits - o.di_x_to_y_given_u_bits,
                1e-9,
            ),
            Err(e) => table.push(SUITE, format!("{label} perturbed oracle"), false, e.to_string()),
        }
    }
}

fn random_pmf(rng: &mut GaussianStream, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| -rng.next_uniform().ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

fn leakage_suite(table: &mut Table) {
    const SUITE: &str = "leakage";
    let mut rng = GaussianStream::new(7, 0);
    let mut worst_identity: f64 = 0.0;
    let mut worst_dpi: f64 = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let rows = 2 + (rng.next_uniform() * 5.0) as usize;
        let cols = 2 + (rng.next_uniform() * 5.0) as usize;
        let p = random_pmf(&mut rng, rows * cols);
        let joint = DiscreteJoint::new(DMatrix::from_row_slice(rows, cols, &p)).expect("valid pmf");
        let l = leakage_logloss(&joint);
        worst_identity = worst_identity.max((l.envelope_difference - l.mutual_information).abs());
        let table_map = (0..rows).map(|_| (rng.next_uniform() * rows as f64) as usize).collect();
        let v = check_data_processing(&joint, &StatisticMap::new(table_map).expect("in range")).expect("shapes match");
        worst_dpi = worst_dpi.max(v.leakage_statistic - v.leakage_original);
    }
    table.at_most(SUITE, "envelope difference = mutual information", worst_identity, 1e-12);
    table.at_most(SUITE, "data-processing inequality", worst_dpi, 1e-12);

    let mut worst_sufficient: f64 = 0.0;
    let mut all_sufficient = true;
    for _ in 0..50 {
        let rows = 2 + (rng.next_uniform() * 5.0) as usize;
        let cols = 2 + (rng.next_uniform() * 5.0) as usize;
        let groups = 1 + (rng.next_uniform() * rows as f64) as usize;
        let label: Vec<usize> =
            (0..rows).map(|x| if x < groups { x } else { (rng.next_uniform() * groups as f64) as usize }).collect();
        let channel_rows: Vec<Vec<f64>> = (0..groups).map(|_| random_pmf(&mut rng, cols)).collect();
        let p_x = random_pmf(&mut rng, rows);
        let channel = DMatrix::from_fn(rows, cols, |x, y| channel_rows[label[x]][y]);
        let joint = DiscreteJoint::from_channel(&p_x, &channel).expect("valid pmf");
        let v = check_data_processing(&joint, &StatisticMap::new(label).expect("in range")).expect("shapes match");
        all_sufficient &= v.sufficiency_holds;
        worst_sufficient = worst_sufficient.max(v.gap.abs());
    }
    table.push(SUITE, "sufficient statistics detected", all_sufficient, "");
    table.at_most(SUITE, "sufficient statistics keep leakage", worst_sufficient, 1e-10);

    let channel = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.2, 0.8, 0.6, 0.4]);
    let joint = DiscreteJoint::from_channel(&[0.3, 0.3, 0.4], &channel).expect("valid pmf");
    let v = check_data_processing(&joint, &StatisticMap::new(vec![0, 1, 1]).expect("in range")).expect("shapes match");
    table.push(SUITE, "lossy merge decreases leakage", !v.sufficiency_holds && v.gap >= 1e-6, format!("gap {:.6e} bits", v.gap));
}

fn distortion_suite(table: &mut Table) {
    const SUITE: &str = "distortion";
    let nav = navigation(1.0, 1.0);
    for fraction in [0.05, 0.3, 0.7] {
        let label = format!("navigation f={fraction}");
        match solve_design(&at_fraction(&nav, fraction)) {
            Ok((_, d)) => {
                let worst = (0..d.horizon())
                    .map(|t| {
                        let filt = d.plan.p_filt[t][(0, 0)];
                        distortion_rate_floor(&d.plan, t).map_or(f64::INFINITY, |f| (f - filt).abs() / filt)
                    })
                    .fold(0.0, f64::max);
                table.at_most(SUITE, format!("{label} floor = P_t|t (relative)"), worst, 1e-9);
            }
            Err(e) => table.push(SUITE, label, false, e.to_string()),
        }
    }
}

/// Re-verifies a stored design without re-running the solver.
pub fn verify_design_file(table: &mut Table, path: &Path) {
    let suite = path.display().to_string();
    let suite = suite.as_str();
    let file = match DesignFile::load(path) {
        Ok(f) => f,
        Err(e) => return table.push(suite, "load", false, e),
    };
    let instance = match file.instance.instance() {
        Ok(i) => i,
        Err(e) => return table.push(suite, "instance", false, e.to_string()),
    };
    let design = match file.to_design(&instance) {
        Ok(d) => d,
        Err(e) => return table.push(suite, "shapes", false, e),
    };
    let riccati = match backward_riccati(&instance) {
        Ok(r) => r,
        Err(e) => return table.push(suite, "riccati", false, e.to_string()),
    };
    let gain_error =
        riccati.k.iter().zip(&design.k).map(|(want, got)| (want - got).abs().max() / scale(want)).fold(0.0, f64::max);
    table.at_most(suite, "feedback gains", gain_error, 1e-9);

    let problem = build_problem(&instance, &riccati);
    table.at_most(suite, "stored budget", (problem.budget - file.budget.d).abs(), 1e-9 * (1.0 + problem.budget.abs()));
    for check in verify_plan(&problem, &design.plan).checks {
        table.push(suite, check.name, check.passed, format!("{:.3e} <= {:.1e}", check.residual, check.threshold));
    }
    let realized = realized_covariances(&design, &instance);
    let filter_error =
        realized.iter().zip(&design.plan.p_filt).map(|(got, want)| (got - want).abs().max() / scale(want)).fold(0.0, f64::max);
    table.at_most(suite, "sensor reproduces plan", filter_error, 1e-7);
    match directed_info_from_plan(&design.plan) {
        Ok(steps) => {
            let worst = steps.iter().zip(&design.privacy_per_step_bits).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            table.at_most(suite, "per-step bits", worst, 1e-9);
            let total: f64 = steps.iter().sum();
            table.at_most(suite, "privacy bits", (total - file.privacy.privacy_bits).abs(), 1e-9);
            table.at_most(suite, "objective bits", (file.plan.objective_bits - file.privacy.privacy_bits).abs(), 1e-6);
        }
        Err(e) => table.push(suite, "per-step bits", false, e.to_string()),
    }
}

pub fn run(scope: Scope, design_files: &[&Path]) -> Table {
    let mut table = Table::default();
    if scope.includes(Scope::Maxdet) {
        maxdet_suite(&mut table);
    }
    if scope.includes(Scope::Infoflow) {
        infoflow_suite(&mut table);
    }
    if scope.includes(Scope::Leakage) {
        leakage_suite(&mut table);
    }
    if scope.includes(Scope::Distortion) {
        distortion_suite(&mut table);
    }
    for path in design_files {
        verify_design_file(&mut table, path);
    }
    table
}
