//! The `design`, `sweep` and `simulate` workflows.

use std::path::{Path, PathBuf};

use cloudpriv_core::infoflow::privacy_report;
use cloudpriv_core::maxdet::{build_problem, solve, SolverTolerances};
use cloudpriv_core::model::ValidatedInstance;
use cloudpriv_core::riccati::backward_riccati;
use cloudpriv_core::simulate::{monte_carlo, simulate_once, SimulationTrace};
use cloudpriv_core::synthesis::{design_from_plan, FilterDesign};
use cloudpriv_core::Error as CoreError;

use crate::artifacts::{DesignFile, SummaryFile};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{num, write_json, Csv};

pub const DESIGN_FILE: &str = "design.json";
pub const DESIGN_STEPS_FILE: &str = "design_steps.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// The joint oracle costs `O((nT)³)`; it is skipped beyond this `n·T`.
pub const ORACLE_LIMIT: usize = 240;

/// Largest privacy increase along a sweep tolerated as round-off, bits.
pub const SWEEP_MONOTONE_TOL: f64 = 1e-6;

const DEFAULT_TRIALS: usize = 1000;
const DEFAULT_SEED: u64 = 0;

fn tolerances(config: &RunConfig, override_gap: Option<f64>) -> CliResult<SolverTolerances> {
    let mut tol = SolverTolerances::default();
    if let Some(gap) = override_gap.or(config.tolerance) {
        if !(gap > 0.0 && gap.is_finite()) {
            return Err(CliError::InvalidConfig(format!("tolerance must be positive, got {gap}")));
        }
        tol.duality_gap = gap;
    }
    Ok(tol)
}

/// Design artifacts held in memory.
pub struct DesignRun {
    pub instance: ValidatedInstance,
    pub design: FilterDesign,
    pub file: DesignFile,
}

/// Full pipeline for one instance.
pub fn run_design(instance: ValidatedInstance, tol: SolverTolerances) -> CliResult<DesignRun> {
    let riccati = backward_riccati(&instance)?;
    let problem = build_problem(&instance, &riccati);
    let plan = solve(&problem, tol)?;
    let design = design_from_plan(&instance, riccati.k.clone(), plan)?;
    let with_oracle = instance.state_dim() * instance.horizon() <= ORACLE_LIMIT;
    let report = privacy_report(&design, &instance, with_oracle)?;
    let file = DesignFile::new(&instance, &problem, &design, &report);
    Ok(DesignRun { instance, design, file })
}

pub fn design_steps_csv(run: &DesignRun) -> Csv {
    let mut csv = Csv::new(&["t".into(), "r_t".into(), "snr".into(), "gamma_bits".into()]);
    let steps = run.design.c.iter().zip(run.design.snr()).zip(&run.design.privacy_per_step_bits);
    for (t, ((c, snr), gamma)) in steps.enumerate() {
        csv.row(&[(t + 1).to_string(), c.nrows().to_string(), num(snr), num(*gamma)]);
    }
    csv
}

fn write_design(run: &DesignRun, out_dir: &Path) -> CliResult<()> {
    write_json(&out_dir.join(DESIGN_FILE), &run.file)?;
    design_steps_csv(run).write(&out_dir.join(DESIGN_STEPS_FILE))
}

pub fn cmd_design(config_path: &Path, out_dir: &Path, tolerance: Option<f64>) -> CliResult<DesignRun> {
    let config = RunConfig::load(config_path)?;
    let tol = tolerances(&config, tolerance)?;
    let run = run_design(config.instance()?, tol)?;
    write_design(&run, out_dir)?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepStatus {
    Ok(f64),
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub delta: f64,
    pub status: SweepStatus,
}

pub fn sweep_csv(points: &[SweepPoint]) -> Csv {
    let mut csv = Csv::new(&["delta".into(), "status".into(), "privacy_bits".into()]);
    for p in points {
        let (status, bits) = match p.status {
            SweepStatus::Ok(bits) => ("ok", num(bits)),
            SweepStatus::Infeasible => ("infeasible", String::new()),
        };
        csv.row(&[num(p.delta), status.into(), bits]);
    }
    csv
}

/// Solves each budget; infeasible budgets become flagged points.
pub fn run_sweep(instance: &ValidatedInstance, grid: &[f64], tol: SolverTolerances) -> CliResult<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(CliError::InvalidConfig("delta grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
        return Err(CliError::InvalidConfig("delta grid must be strictly increasing".into()));
    }
    let riccati = backward_riccati(instance)?;
    let mut points = Vec::with_capacity(grid.len());
    for &delta in grid {
        let inst = instance.with_delta(delta)?;
        let problem = build_problem(&inst, &riccati);
        let status = match solve(&problem, tol) {
            Ok(plan) => SweepStatus::Ok(plan.objective_bits()),
            Err(CoreError::Infeasible(_)) => SweepStatus::Infeasible,
            Err(e) => return Err(e.into()),
        };
        points.push(SweepPoint { delta, status });
    }
    Ok(points)
}

/// Largest increase of privacy bits between consecutive feasible points.
pub fn worst_increase(points: &[SweepPoint]) -> f64 {
    let bits: Vec<f64> = points
        .iter()
        .filter_map(|p| match p.status {
            SweepStatus::Ok(b) => Some(b),
            SweepStatus::Infeasible => None,
        })
        .collect();
    bits.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

pub fn cmd_sweep(
    config_path: &Path,
    out_dir: &Path,
    grid: Option<Vec<f64>>,
    tolerance: Option<f64>,
) -> CliResult<Vec<SweepPoint>> {
    let config = RunConfig::load(config_path)?;
    let tol = tolerances(&config, tolerance)?;
    let instance = config.instance()?;
    let grid = grid
        .or_else(|| config.delta_grid.clone())
        .ok_or_else(|| CliError::InvalidConfig("no delta grid given (--delta-grid or deltaGrid)".into()))?;
    if grid.len() == 1 {
        let run = run_design(instance.with_delta(grid[0])?, tol)?;
        write_design(&run, out_dir)?;
        let points = vec![SweepPoint { delta: grid[0], status: SweepStatus::Ok(run.design.privacy_bits) }];
        sweep_csv(&points).write(&out_dir.join(SWEEP_FILE))?;
        return Ok(points);
    }
    let points = run_sweep(&instance, &grid, tol)?;
    sweep_csv(&points).write(&out_dir.join(SWEEP_FILE))?;
    let worst = worst_increase(&points);
    if worst > SWEEP_MONOTONE_TOL {
        return Err(CliError::SweepNotMonotone(format!("privacy bits rise by {worst:e} between consecutive budgets")));
    }
    Ok(points)
}

/// `t, x…, xhat…, u…, y…`, one row per step; `y` is blank-padded to the
/// largest sensor rank.
pub fn trace_csv(trace: &SimulationTrace) -> Csv {
    let n = trace.x[0].len();
    let m = trace.u.first().map_or(0, |u| u.len());
    let width_y = trace.y.iter().map(|y| y.len()).max().unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xhat{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend((1..=width_y).map(|i| format!("y{i}")));
    let mut csv = Csv::new(&header);
    for t in 0..trace.u.len() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(trace.x[t].iter().map(|v| num(*v)));
        row.extend(trace.xhat[t].iter().map(|v| num(*v)));
        row.extend(trace.u[t].iter().map(|v| num(*v)));
        row.extend((0..width_y).map(|i| trace.y[t].get(i).map_or(String::new(), |v| num(*v))));
        csv.row(&row);
    }
    csv
}

pub struct SimulationRun {
    pub trace: SimulationTrace,
    pub summary: SummaryFile,
}

pub fn cmd_simulate(
    config_path: &Path,
    design_path: &Path,
    out_dir: &Path,
    trials: Option<usize>,
    seed: Option<u64>,
) -> CliResult<SimulationRun> {
    let config = RunConfig::load(config_path)?;
    let instance = config.instance()?;
    let file = DesignFile::load(design_path).map_err(CliError::InvalidConfig)?;
    let embedded = file.instance.instance().map_err(|e| CliError::InvalidConfig(format!("{}: {e}", design_path.display())))?;
    if embedded.horizon() != instance.horizon()
        || embedded.state_dim() != instance.state_dim()
        || embedded.input_dim() != instance.input_dim()
    {
        return Err(CliError::InvalidConfig(format!(
            "{} was designed for n={}, m={}, T={} but the config has n={}, m={}, T={}",
            design_path.display(),
            embedded.state_dim(),
            embedded.input_dim(),
            embedded.horizon(),
            instance.state_dim(),
            instance.input_dim(),
            instance.horizon()
        )));
    }
    let design = file.to_design(&instance).map_err(|e| CliError::InvalidConfig(format!("{}: {e}", design_path.display())))?;
    let trials = trials.or(config.trials).unwrap_or(DEFAULT_TRIALS);
    if trials < 2 {
        return Err(CliError::InvalidConfig(format!("trials must be at least 2, got {trials}")));
    }
    let seed = seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    let trace = simulate_once(&design, &instance, seed)?;
    let summary = SummaryFile::new(&monte_carlo(&design, &instance, trials, seed)?);
    trace_csv(&trace).write(&out_dir.join(TRACE_FILE))?;
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(SimulationRun { trace, summary })
}

pub fn default_out_dir() -> PathBuf {
    PathBuf::from(".")
}
