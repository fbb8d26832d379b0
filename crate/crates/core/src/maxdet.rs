//! Determinant-maximization program over the filtered covariances
//! `P_{t|t}` and the auxiliary matrices `Π_t`:
//!
//! ```text
//! minimize   ½ Σ_t logdet Π_t⁻¹ + c1
//! subject to Σ_t tr(Θ_t P_{t|t}) + c2 ≤ D
//!            P_{1|1} ⪯ P_{1|0},  P_{T|T} = Π_T
//!            P_{t+1|t+1} ⪯ A_t P_{t|t} A_tᵀ + Σ^W_t              t < T
//!            [P_{t|t} − Π_t, P_{t|t}A_tᵀ; A_tP_{t|t}, A_tP_{t|t}A_tᵀ + Σ^W_t] ⪰ 0   t < T
//! ```
//!
//! The solver is a feasible-start barrier method. `Π_T` is replaced by
//! `P_{T|T}`; every remaining term (objective and constraints alike) is a
//! weighted `−logdet` of an affine matrix function of the packed variables,
//! so one routine assembles gradient and Hessian for all of them. Centering
//! uses damped Newton steps, which stay feasible for self-concordant
//! functions without a function-value line search.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::infoflow;
use crate::linalg::{
    block_diag, cholesky_lower, logdet_pd, min_eigenvalue, scale, schur_psd_check, spd_inverse, spectral_norm, symmetrize,
    SymMatrix,
};
use crate::model::{BudgetMode, ValidatedInstance};
use crate::riccati::RiccatiSolution;
use crate::{nats_to_bits, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MaxDetProblem {
    pub instance: ValidatedInstance,
    pub riccati: RiccatiSolution,
    /// `½ logdet P_{1|0} + ½ Σ_{t<T} logdet Σ^W_t` (nats).
    pub c1: f64,
    /// `tr(Φ_1 P_{1|0}) + Σ_t tr(Σ^W_t S_t)`.
    pub c2: f64,
    /// `m1ᵀ Φ_1 m1`, the cost of regulating the known initial mean.
    pub mean_cost: f64,
    /// Right-hand side `D` of the budget constraint.
    pub budget: f64,
}

impl MaxDetProblem {
    pub fn theta(&self) -> &[DMatrix<f64>] {
        &self.riccati.theta
    }

    /// `Σ_t tr(Θ_t P_t)`.
    pub fn estimation_cost(&self, p_filt: &[DMatrix<f64>]) -> f64 {
        self.riccati.theta.iter().zip(p_filt).map(|(th, p)| (th * p).trace()).sum()
    }

    /// Predicted closed-loop cost of a plan, including the mean term.
    pub fn predicted_cost(&self, p_filt: &[DMatrix<f64>]) -> f64 {
        self.estimation_cost(p_filt) + self.c2 + self.mean_cost
    }
}

pub fn build_problem(instance: &ValidatedInstance, riccati: &RiccatiSolution) -> MaxDetProblem {
    let model = instance.model();
    let horizon = instance.horizon();
    let logdet = |m: &DMatrix<f64>| logdet_pd(m).expect("validated matrices are positive definite");

    let c1 = 0.5 * logdet(&model.p10) + 0.5 * model.sigma_w[..horizon - 1].iter().map(logdet).sum::<f64>();
    let c2 =
        (&riccati.phi[0] * &model.p10).trace() + model.sigma_w.iter().zip(&riccati.s).map(|(w, s)| (w * s).trace()).sum::<f64>();
    let mean_cost = (model.m1.transpose() * &riccati.phi[0] * &model.m1)[(0, 0)];
    let cost = instance.cost();
    let budget = match cost.budget_mode {
        BudgetMode::Total if cost.include_mean_cost => cost.delta - mean_cost,
        BudgetMode::Total => cost.delta,
        BudgetMode::NetOfConstants => c2 + cost.delta,
    };
    MaxDetProblem { instance: instance.clone(), riccati: riccati.clone(), c1, c2, mean_cost, budget }
}

/// Covariances when nothing is disclosed: `P̄_1 = P_{1|0}`,
/// `P̄_{t+1} = A_t P̄_t A_tᵀ + Σ^W_t`.
pub fn zero_information_plan(problem: &MaxDetProblem) -> Vec<DMatrix<f64>> {
    let model = problem.instance.model();
    let mut out = Vec::with_capacity(model.horizon);
    out.push(model.p10.clone());
    for t in 0..model.horizon - 1 {
        let next = symmetrize(&(&model.a[t] * &out[t] * model.a[t].transpose() + &model.sigma_w[t]));
        out.push(next);
    }
    out
}

/// `Σ_t tr(Θ_t P̄_t)` for the zero-information plan.
pub fn zero_information_cost(problem: &MaxDetProblem) -> f64 {
    problem.estimation_cost(&zero_information_plan(problem))
}

/// `P_{t|t−1}` for every step given the filtered covariances.
pub fn predicted_covariances(instance: &ValidatedInstance, p_filt: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let model = instance.model();
    let mut out = Vec::with_capacity(p_filt.len());
    out.push(model.p10.clone());
    for t in 0..p_filt.len().saturating_sub(1) {
        out.push(symmetrize(&(&model.a[t] * &p_filt[t] * model.a[t].transpose() + &model.sigma_w[t])));
    }
    out
}

/// `(P⁻¹ + AᵀΣ⁻¹A)⁻¹`, the largest `Π` admitted by the block constraint.
pub fn tight_pi(p: &DMatrix<f64>, a: &DMatrix<f64>, sigma_w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let info = spd_inverse(p)? + a.transpose() * spd_inverse(sigma_w)? * a;
    spd_inverse(&symmetrize(&info))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    /// Target bound on the duality gap, in nats.
    pub duality_gap: f64,
    /// Centering stops when half the squared Newton decrement falls below this.
    pub newton_decrement: f64,
    /// Cap on the total number of Newton steps.
    pub max_iterations: usize,
    /// Barrier parameter growth factor between centering rounds.
    pub barrier_growth: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self { duality_gap: 1e-9, newton_decrement: 1e-10, max_iterations: 3000, barrier_growth: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverStats {
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    /// `θ / t` at termination, where `θ` is the total barrier degree.
    pub duality_gap_bound: f64,
    pub final_newton_decrement: f64,
    /// `D − c2 − Σ tr(Θ_t P_{t|t})`; nonnegative for a feasible plan.
    pub budget_slack: f64,
    /// The budget admitted the zero-information plan, so no iterations ran.
    pub zero_information: bool,
    /// `max_t ‖Π_t − (P_{t|t}⁻¹ + A_tᵀ(Σ^W_t)⁻¹A_t)⁻¹‖₂ / scale(P_{t|t})` for
    /// the solver's own `Π_t`, before they are replaced by the tight values.
    pub pi_tightness_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePlan {
    /// `P_{t|t}`.
    pub p_filt: Vec<DMatrix<f64>>,
    /// `Π_t`, with `Π_T = P_{T|T}`.
    pub pi: Vec<DMatrix<f64>>,
    /// `P_{t|t−1}`, starting from `P_{1|0}`.
    pub p_pred: Vec<DMatrix<f64>>,
    /// `½ Σ logdet Π_t⁻¹ + c1`.
    pub objective_nats: f64,
    pub stats: SolverStats,
}

impl CovariancePlan {
    pub fn objective_bits(&self) -> f64 {
        nats_to_bits(self.objective_nats)
    }
}

fn plan_objective(problem: &MaxDetProblem, pi: &[DMatrix<f64>]) -> Result<f64> {
    let mut acc = problem.c1;
    for p in pi {
        acc -= 0.5 * logdet_pd(p)?;
    }
    Ok(acc)
}

/// Completes a plan from filtered covariances: `Π_t` is set to its tight
/// value and the objective evaluated.
pub fn plan_from_filtered(problem: &MaxDetProblem, p_filt: Vec<DMatrix<f64>>, stats: SolverStats) -> Result<CovariancePlan> {
    let model = problem.instance.model();
    let horizon = model.horizon;
    let mut pi = Vec::with_capacity(horizon);
    for t in 0..horizon - 1 {
        pi.push(tight_pi(&p_filt[t], &model.a[t], &model.sigma_w[t])?);
    }
    pi.push(p_filt[horizon - 1].clone());
    let objective_nats = plan_objective(problem, &pi)?.max(0.0);
    let p_pred = predicted_covariances(&problem.instance, &p_filt);
    Ok(CovariancePlan { p_filt, pi, p_pred, objective_nats, stats })
}

// ---------------------------------------------------------------------------
// Conic program assembly

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TermKind {
    /// `−½ logdet` of a decision matrix, scaled by the barrier parameter.
    Objective,
    /// `−logdet` barrier of a linear matrix inequality `F(x) ⪰ 0`.
    Constraint,
}

#[derive(Debug, Clone)]
struct LogDetTerm {
    name: String,
    kind: TermKind,
    constant: DMatrix<f64>,
    coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl LogDetTerm {
    fn size(&self) -> usize {
        self.constant.nrows()
    }

    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for (v, c) in &self.coeffs {
            f += c * x[*v];
        }
        f
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    packed: usize,
    horizon: usize,
}

impl Layout {
    fn new(n: usize, horizon: usize) -> Self {
        Self { n, packed: SymMatrix::packed_len(n), horizon }
    }

    fn len(&self) -> usize {
        self.packed * (2 * self.horizon - 1)
    }

    fn p(&self, t: usize) -> usize {
        t * self.packed
    }

    fn pi(&self, t: usize) -> usize {
        debug_assert!(t + 1 < self.horizon);
        (self.horizon + t) * self.packed
    }

    fn pack(&self, x: &mut [f64], offset: usize, m: &DMatrix<f64>) {
        x[offset..offset + self.packed].copy_from_slice(SymMatrix::from_dense(m).packed());
    }

    fn unpack(&self, x: &[f64], offset: usize) -> DMatrix<f64> {
        SymMatrix::from_packed(self.n, &x[offset..offset + self.packed]).to_dense()
    }
}

struct Program {
    layout: Layout,
    terms: Vec<LogDetTerm>,
}

impl Program {
    fn barrier_degree(&self) -> usize {
        self.terms.iter().filter(|t| t.kind == TermKind::Constraint).map(LogDetTerm::size).sum()
    }
}

/// Per-step congruence used to precondition the program: the solver works
/// with `P̃_t`, `Π̃_t` where `P_t = S_t P̃_t S_tᵀ` and `Π_t = S_t Π̃_t S_tᵀ`, and
/// each constraint is rescaled by the inverse factors of the steps it couples.
/// Barrier values only shift by constants, so the central path is unchanged.
struct Scaling {
    factor: Vec<DMatrix<f64>>,
    inverse: Vec<DMatrix<f64>>,
    budget: f64,
}

impl Scaling {
    fn identity(n: usize, horizon: usize) -> Self {
        Self {
            factor: alloc::vec![DMatrix::identity(n, n); horizon],
            inverse: alloc::vec![DMatrix::identity(n, n); horizon],
            budget: 1.0,
        }
    }

    fn from_plan(plan: &[DMatrix<f64>], budget: f64) -> Result<Self> {
        let factor: Vec<DMatrix<f64>> = plan.iter().map(cholesky_lower).collect::<Result<_>>()?;
        let inverse = factor
            .iter()
            .map(|l| l.clone().try_inverse().ok_or_else(|| Error::NumericalBreakdown(String::from("singular scaling factor"))))
            .collect::<Result<_>>()?;
        Ok(Self { factor, inverse, budget })
    }

    fn lift(&self, t: usize, e: &DMatrix<f64>) -> DMatrix<f64> {
        &self.factor[t] * e * self.factor[t].transpose()
    }

    fn lower(&self, t: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.inverse[t] * m * self.inverse[t].transpose()
    }
}

fn congruence(term: &mut LogDetTerm, left: &DMatrix<f64>) {
    term.constant = symmetrize(&(left * &term.constant * left.transpose()));
    for (_, c) in &mut term.coeffs {
        *c = symmetrize(&(left * &*c * left.transpose()));
    }
}

fn assemble(problem: &MaxDetProblem, scaling: &Scaling) -> Program {
    let model = problem.instance.model();
    let n = model.p10.nrows();
    let horizon = model.horizon;
    let layout = Layout::new(n, horizon);
    let unit: Vec<DMatrix<f64>> = (0..layout.packed).map(|k| SymMatrix::basis(n, k)).collect();
    // Image of each packed coordinate of step t in the original variables.
    let basis = |t: usize| -> Vec<DMatrix<f64>> { unit.iter().map(|e| scaling.lift(t, e)).collect() };
    let mut terms = Vec::new();

    // Budget.
    let mut coeffs = Vec::new();
    for t in 0..horizon {
        for (k, e) in basis(t).iter().enumerate() {
            let c = -(&problem.riccati.theta[t] * e).trace() / scaling.budget;
            if c != 0.0 {
                coeffs.push((layout.p(t) + k, DMatrix::from_element(1, 1, c)));
            }
        }
    }
    terms.push(LogDetTerm {
        name: String::from("budget"),
        kind: TermKind::Constraint,
        constant: DMatrix::from_element(1, 1, (problem.budget - problem.c2) / scaling.budget),
        coeffs,
    });

    // P_{1|0} − P_{1|1} ⪰ 0.
    let mut term = LogDetTerm {
        name: String::from("prior_order"),
        kind: TermKind::Constraint,
        constant: model.p10.clone(),
        coeffs: basis(0).iter().enumerate().map(|(k, e)| (layout.p(0) + k, -e)).collect(),
    };
    congruence(&mut term, &scaling.inverse[0]);
    terms.push(term);

    for t in 0..horizon - 1 {
        let a = &model.a[t];
        let w = &model.sigma_w[t];
        let here = basis(t);
        let next = basis(t + 1);

        let mut coeffs = Vec::new();
        for (k, (e, f)) in here.iter().zip(&next).enumerate() {
            coeffs.push((layout.p(t) + k, a * e * a.transpose()));
            coeffs.push((layout.p(t + 1) + k, -f));
        }
        let mut term =
            LogDetTerm { name: format!("predictor_order[{}]", t + 1), kind: TermKind::Constraint, constant: w.clone(), coeffs };
        congruence(&mut term, &scaling.inverse[t + 1]);
        terms.push(term);

        let mut constant = DMatrix::zeros(2 * n, 2 * n);
        constant.view_mut((n, n), (n, n)).copy_from(w);
        let mut coeffs = Vec::new();
        for (k, e) in here.iter().enumerate() {
            let mut c = DMatrix::zeros(2 * n, 2 * n);
            let ea = e * a.transpose();
            c.view_mut((0, 0), (n, n)).copy_from(e);
            c.view_mut((0, n), (n, n)).copy_from(&ea);
            c.view_mut((n, 0), (n, n)).copy_from(&ea.transpose());
            c.view_mut((n, n), (n, n)).copy_from(&(a * &ea));
            coeffs.push((layout.p(t) + k, c));
            let mut c = DMatrix::zeros(2 * n, 2 * n);
            c.view_mut((0, 0), (n, n)).copy_from(&(-e));
            coeffs.push((layout.pi(t) + k, c));
        }
        let mut term = LogDetTerm { name: format!("schur_lmi[{}]", t + 1), kind: TermKind::Constraint, constant, coeffs };
        congruence(&mut term, &block_diag(&[scaling.inverse[t].clone(), scaling.inverse[t + 1].clone()]));
        terms.push(term);

        terms.push(LogDetTerm {
            name: format!("objective_pi[{}]", t + 1),
            kind: TermKind::Objective,
            constant: DMatrix::zeros(n, n),
            coeffs: unit.iter().enumerate().map(|(k, e)| (layout.pi(t) + k, e.clone())).collect(),
        });
    }

    terms.push(LogDetTerm {
        name: format!("objective_pi[{horizon}]"),
        kind: TermKind::Objective,
        constant: DMatrix::zeros(n, n),
        coeffs: unit.iter().enumerate().map(|(k, e)| (layout.p(horizon - 1) + k, e.clone())).collect(),
    });

    Program { layout, terms }
}

/// Plain-text listing of the assembled program for auditing with other
/// solvers.
///
/// ```text
/// maxdet-program v1
/// variables <N>
/// constant_objective <c1>
/// term <name> <objective|constraint> size <k> weight <w> nnz <m>
/// F0 <i> <j> <value>        (upper triangle, 0-based)
/// F <var> <i> <j> <value>
/// ```
///
/// The objective is `Σ_objective −w·logdet F(x)` plus the constant; every
/// constraint term requires `F(x) ⪰ 0`, where `F(x) = F0 + Σ x_var·F_var`.
/// Variables are the packed upper triangles of `P_{1|1}, …, P_{T|T}` followed
/// by those of `Π_1, …, Π_{T−1}`.
pub fn dump_program(problem: &MaxDetProblem) -> String {
    let model = problem.instance.model();
    let program = assemble(problem, &Scaling::identity(model.p10.nrows(), model.horizon));
    let mut out = String::new();
    let _ = writeln!(out, "maxdet-program v1");
    let _ = writeln!(out, "variables {}", program.layout.len());
    let _ = writeln!(out, "constant_objective {:.17e}", problem.c1);
    for term in &program.terms {
        let (kind, weight) = match term.kind {
            TermKind::Objective => ("objective", 0.5),
            TermKind::Constraint => ("constraint", 1.0),
        };
        let mut lines = String::new();
        let mut nnz = 0;
        let k = term.size();
        for i in 0..k {
            for j in i..k {
                let v = term.constant[(i, j)];
                if v != 0.0 {
                    let _ = writeln!(lines, "F0 {i} {j} {v:.17e}");
                    nnz += 1;
                }
            }
        }
        for (var, c) in &term.coeffs {
            for i in 0..k {
                for j in i..k {
                    let v = c[(i, j)];
                    if v != 0.0 {
                        let _ = writeln!(lines, "F {var} {i} {j} {v:.17e}");
                        nnz += 1;
                    }
                }
            }
        }
        let _ = writeln!(out, "term {} {kind} size {k} weight {weight} nnz {nnz}", term.name);
        out.push_str(&lines);
    }
    out
}

// ---------------------------------------------------------------------------
// Barrier method

struct Oracle {
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

/// Evaluates `t·f0 + φ` derivatives; `None` if some term is not positive
/// definite at `x`.
fn derivatives(program: &Program, x: &[f64], barrier_t: f64) -> Option<Oracle> {
    let dim = program.layout.len();
    let mut gradient = DVector::zeros(dim);
    let mut hessian = DMatrix::zeros(dim, dim);
    for term in &program.terms {
        let weight = match term.kind {
            TermKind::Objective => 0.5 * barrier_t,
            TermKind::Constraint => 1.0,
        };
        let f = term.eval(x);
        let inv = f.cholesky()?.inverse();
        let g: Vec<DMatrix<f64>> = term.coeffs.iter().map(|(_, c)| &inv * c).collect();
        for (a, (va, _)) in term.coeffs.iter().enumerate() {
            gradient[*va] -= weight * g[a].trace();
            for (b, (vb, _)) in term.coeffs.iter().enumerate().skip(a) {
                let tr = g[a].component_mul(&g[b].transpose()).sum();
                hessian[(*va, *vb)] += weight * tr;
                if a != b {
                    hessian[(*vb, *va)] += weight * tr;
                }
            }
        }
    }
    if gradient.iter().chain(hessian.iter()).all(|v: &f64| v.is_finite()) {
        Some(Oracle { gradient, hessian })
    } else {
        None
    }
}

fn strictly_feasible(program: &Program, x: &[f64], floor: f64) -> bool {
    let layout = &program.layout;
    for term in &program.terms {
        let mut f = term.eval(x);
        if term.kind == TermKind::Objective {
            for i in 0..f.nrows() {
                f[(i, i)] -= floor;
            }
        }
        if f.cholesky().is_none() {
            return false;
        }
    }
    // The floor applies to every decision matrix, not only those in the
    // objective.
    for t in 0..layout.horizon {
        let mut p = layout.unpack(x, layout.p(t));
        for i in 0..layout.n {
            p[(i, i)] -= floor;
        }
        if p.cholesky().is_none() {
            return false;
        }
    }
    true
}

fn newton_direction(oracle: &Oracle) -> Option<DVector<f64>> {
    let rhs = -&oracle.gradient;
    if let Some(chol) = oracle.hessian.clone().cholesky() {
        return Some(chol.solve(&rhs));
    }
    let dim = oracle.hessian.nrows();
    let mean_diag = oracle.hessian.trace() / dim.max(1) as f64;
    let mut jitter = 1e-14 * mean_diag.abs().max(1e-300);
    for _ in 0..12 {
        let h = &oracle.hessian + DMatrix::identity(dim, dim) * jitter;
        if let Some(chol) = h.cholesky() {
            return Some(chol.solve(&rhs));
        }
        jitter *= 10.0;
    }
    None
}

fn objective_value(program: &Program, x: &[f64]) -> f64 {
    program
        .terms
        .iter()
        .filter(|t| t.kind == TermKind::Objective)
        .map(|t| -0.5 * logdet_pd(&t.eval(x)).unwrap_or(f64::INFINITY))
        .sum()
}

/// `t·f0(x) + φ(x)`; `None` outside the domain.
fn merit(program: &Program, x: &[f64], barrier_t: f64) -> Option<f64> {
    let mut acc = 0.0;
    for term in &program.terms {
        let weight = match term.kind {
            TermKind::Objective => 0.5 * barrier_t,
            TermKind::Constraint => 1.0,
        };
        acc -= weight * logdet_pd(&term.eval(x)).ok()?;
    }
    Some(acc)
}

/// Newton centering for barrier parameter `barrier_t`. Returns the final
/// Newton decrement `λ`.
///
/// Far from the central path (`λ ≥ ¼`) steps are chosen by backtracking on the
/// merit function, falling back to the damped step `1/(1 + λ)`. Inside the
/// quadratic region full steps are taken. When the decrement stops shrinking
/// because slack evaluations have run out of precision, the point is accepted
/// as long as `λ < ¼`; the caller inflates the gap bound accordingly.
fn center(
    program: &Program,
    x: &mut [f64],
    barrier_t: f64,
    floor: f64,
    tol: SolverTolerances,
    stats: &mut SolverStats,
) -> Result<f64> {
    const MAX_STEPS: usize = 80;
    const STALL_WINDOW: usize = 6;
    let mut history: Vec<f64> = Vec::new();
    let mut trial = x.to_vec();
    for _ in 0..MAX_STEPS {
        if stats.newton_iterations >= tol.max_iterations {
            return Err(Error::MaxIterations { iterations: stats.newton_iterations, gap: stats.duality_gap_bound });
        }
        stats.newton_iterations += 1;
        let oracle = derivatives(program, x, barrier_t)
            .ok_or_else(|| Error::NumericalBreakdown(String::from("non-finite derivatives")))?;
        let dx = newton_direction(&oracle)
            .ok_or_else(|| Error::NumericalBreakdown(String::from("Newton system is not positive definite")))?;
        let decrement_sq = -oracle.gradient.dot(&dx);
        if decrement_sq.is_nan() {
            return Err(Error::NumericalBreakdown(String::from("Newton decrement is NaN")));
        }
        let lambda = libm::sqrt(decrement_sq.max(0.0));
        stats.final_newton_decrement = lambda;
        if 0.5 * decrement_sq <= tol.newton_decrement {
            return Ok(lambda);
        }
        history.push(lambda);
        if lambda < 0.25 && history.len() > STALL_WINDOW {
            let recent = history[history.len() - STALL_WINDOW..].iter().fold(f64::INFINITY, |a, v| a.min(*v));
            let earlier = history[..history.len() - STALL_WINDOW].iter().fold(f64::INFINITY, |a, v| a.min(*v));
            if recent >= 0.5 * earlier {
                return Ok(lambda);
            }
        }

        let step_to = |step: f64, trial: &mut [f64]| {
            for (i, v) in trial.iter_mut().enumerate() {
                *v = x[i] + step * dx[i];
            }
            strictly_feasible(program, trial, floor)
        };
        let mut accepted = false;
        if lambda < 0.25 {
            accepted = step_to(1.0, &mut trial);
        } else if let Some(current) = merit(program, x, barrier_t) {
            let mut step = 1.0;
            while step > 1e-8 {
                if step_to(step, &mut trial) {
                    if let Some(value) = merit(program, &trial, barrier_t) {
                        if value <= current - 0.01 * step * decrement_sq {
                            accepted = true;
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
        }
        if !accepted {
            let mut step = 1.0 / (1.0 + lambda);
            for _ in 0..40 {
                if step_to(step, &mut trial) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !accepted {
            break;
        }
        x.copy_from_slice(&trial);
    }
    let lambda = stats.final_newton_decrement;
    if lambda < 0.25 {
        Ok(lambda)
    } else {
        Err(Error::NumericalBreakdown(format!("centering stalled with Newton decrement {lambda:.3e}")))
    }
}

/// Largest certified gap (nats) accepted when the requested tolerance is out
/// of reach because centering stalls at large barrier parameters.
pub const STALL_ACCEPT_GAP: f64 = 1e-6;

/// Solves the program to the requested duality gap. If centering breaks down
/// numerically after a centered point with gap at most [`STALL_ACCEPT_GAP`] has
/// been found, that point is returned and `stats.duality_gap_bound` reports
/// its certified gap.
pub fn solve(problem: &MaxDetProblem, tol: SolverTolerances) -> Result<CovariancePlan> {
    let slack = problem.budget - problem.c2;
    if !(slack > 0.0) {
        return Err(Error::Infeasible(format!(
            "budget D = {:.6} does not exceed c2 = {:.6}; Σ tr(Θ_t P_t|t) ≥ 0 leaves no admissible plan",
            problem.budget, problem.c2
        )));
    }
    let zero_info = zero_information_plan(problem);
    let zero_cost = problem.estimation_cost(&zero_info);
    if zero_cost <= slack {
        let stats = SolverStats { budget_slack: slack - zero_cost, zero_information: true, ..SolverStats::default() };
        let mut plan = plan_from_filtered(problem, zero_info, stats)?;
        // Nothing is disclosed, so the directed information is exactly zero.
        plan.objective_nats = 0.0;
        return Ok(plan);
    }

    let model = problem.instance.model();
    let horizon = model.horizon;
    let scaling = Scaling::from_plan(&zero_info, slack)?;
    let program = assemble(problem, &scaling);
    let layout = program.layout;
    let floor = 1e-10;

    // Start from the zero-information plan shrunk into the interior; in
    // scaled coordinates that is a multiple of the identity.
    let alpha = 0.9_f64.min(0.9 * slack / zero_cost);
    let n = layout.n;
    let mut x = alloc::vec![0.0; layout.len()];
    for t in 0..horizon {
        layout.pack(&mut x, layout.p(t), &(DMatrix::identity(n, n) * alpha));
        if t + 1 < horizon {
            let pi = tight_pi(&(&zero_info[t] * alpha), &model.a[t], &model.sigma_w[t])? * 0.5;
            layout.pack(&mut x, layout.pi(t), &symmetrize(&scaling.lower(t, &pi)));
        }
    }
    if !strictly_feasible(&program, &x, floor) {
        return Err(Error::NumericalBreakdown(String::from("interior starting point is not strictly feasible")));
    }

    let degree = program.barrier_degree() as f64;
    // Objective of the unscaled program: −½logdet(SΠ̃Sᵀ) = −½logdet Π̃ − logdet S.
    let offset: f64 = scaling.factor.iter().map(|l| l.diagonal().iter().map(|d| libm::log(*d)).sum::<f64>()).sum();
    let mut barrier_t = (degree / (objective_value(&program, &x) - offset).max(1e-3)).max(2.0);
    let mut stats = SolverStats::default();
    // Last centered point, kept in case a later centering runs out of
    // floating-point precision.
    let mut last_good: Option<(Vec<f64>, f64)> = None;
    loop {
        stats.outer_iterations += 1;
        let decrement = match center(&program, &mut x, barrier_t, floor, tol, &mut stats) {
            Ok(d) => d,
            Err(Error::NumericalBreakdown(msg)) => match last_good.take() {
                Some((previous, gap)) if gap <= STALL_ACCEPT_GAP => {
                    x.copy_from_slice(&previous);
                    stats.duality_gap_bound = gap;
                    break;
                }
                _ => return Err(Error::NumericalBreakdown(msg)),
            },
            Err(e) => return Err(e),
        };
        // Suboptimality of an approximately centered point: (θ + λ√θ/(1 − λ))/t.
        stats.duality_gap_bound = (degree + decrement * libm::sqrt(degree) / (1.0 - decrement)) / barrier_t;
        if stats.duality_gap_bound <= tol.duality_gap {
            break;
        }
        last_good = Some((x.clone(), stats.duality_gap_bound));
        barrier_t *= tol.barrier_growth;
    }
    let p_filt: Vec<DMatrix<f64>> = (0..horizon).map(|t| symmetrize(&scaling.lift(t, &layout.unpack(&x, layout.p(t))))).collect();
    stats.budget_slack = slack - problem.estimation_cost(&p_filt);
    for t in 0..horizon - 1 {
        let raw = symmetrize(&scaling.lift(t, &layout.unpack(&x, layout.pi(t))));
        let tight = tight_pi(&p_filt[t], &model.a[t], &model.sigma_w[t])?;
        let residual = spectral_norm(&(raw - tight)) / scale(&p_filt[t]);
        stats.pi_tightness_residual = stats.pi_tightness_residual.max(residual);
    }
    plan_from_filtered(problem, p_filt, stats)
}

// ---------------------------------------------------------------------------
// Independent audit

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CertificateReport {
    pub checks: Vec<CertificateCheck>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CertificateCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Records `residual ≤ threshold`.
    fn at_most(&mut self, name: String, residual: f64, threshold: f64) {
        let passed = residual <= threshold;
        self.checks.push(CertificateCheck { name, residual, threshold, passed });
    }

    /// Records `λ_min ≥ −threshold`, reported as the residual `−λ_min`.
    fn psd(&mut self, name: String, m: &DMatrix<f64>, rel: f64) {
        let residual = -min_eigenvalue(m);
        self.at_most(name, residual, rel * scale(m));
    }
}

/// Recomputes every plan invariant by direct linear algebra.
pub fn verify_plan(problem: &MaxDetProblem, plan: &CovariancePlan) -> CertificateReport {
    let model = problem.instance.model();
    let horizon = model.horizon;
    let n = model.p10.nrows();
    let mut report = CertificateReport::default();

    let shapes_ok = plan.p_filt.len() == horizon
        && plan.pi.len() == horizon
        && plan.p_pred.len() == horizon
        && plan.p_filt.iter().chain(&plan.pi).chain(&plan.p_pred).all(|m| m.nrows() == n && m.ncols() == n);
    report.at_most(String::from("dimensions"), if shapes_ok { 0.0 } else { 1.0 }, 0.0);
    if !shapes_ok {
        return report;
    }

    for t in 0..horizon {
        for (label, m) in [("filtered_pd", &plan.p_filt[t]), ("pi_pd", &plan.pi[t])] {
            let lambda = min_eigenvalue(m);
            let passed = lambda > 0.0;
            report.checks.push(CertificateCheck {
                name: format!("{label}[{}]", t + 1),
                residual: -lambda,
                threshold: 0.0,
                passed,
            });
        }
    }

    report.psd(String::from("prior_order"), &(&model.p10 - &plan.p_filt[0]), 1e-9);
    for t in 0..horizon - 1 {
        let a = &model.a[t];
        let pred = a * &plan.p_filt[t] * a.transpose() + &model.sigma_w[t];
        report.psd(format!("predictor_order[{}]", t + 1), &(&pred - &plan.p_filt[t + 1]), 1e-9);

        let p = &plan.p_filt[t];
        let check = schur_psd_check(&(p - &plan.pi[t]), &(p * a.transpose()), &pred).expect("conformable blocks");
        report.at_most(format!("schur_lmi[{}]", t + 1), -check.min_eigenvalue, -check.threshold);
    }

    let terminal = &plan.pi[horizon - 1] - &plan.p_filt[horizon - 1];
    report.at_most(String::from("terminal_equality"), terminal.abs().max(), 1e-8 * scale(&plan.p_filt[horizon - 1]));

    let used = problem.estimation_cost(&plan.p_filt) + problem.c2;
    report.at_most(String::from("budget"), used - problem.budget, 1e-8 * (1.0 + problem.budget.abs()));

    let pred = predicted_covariances(&problem.instance, &plan.p_filt);
    let pred_err = pred.iter().zip(&plan.p_pred).map(|(a, b)| (a - b).abs().max()).fold(0.0, f64::max);
    let pred_scale = pred.iter().map(scale).fold(1.0, f64::max);
    report.at_most(String::from("predictor_consistency"), pred_err, 1e-10 * pred_scale);

    report.at_most(String::from("objective_nonnegative"), -plan.objective_nats, 1e-9);

    match plan_objective(problem, &plan.pi) {
        Ok(value) => report.at_most(
            String::from("objective_recompute"),
            (value.max(0.0) - plan.objective_nats).abs(),
            1e-8 * (1.0 + plan.objective_nats.abs()),
        ),
        Err(_) => report.at_most(String::from("objective_recompute"), f64::INFINITY, 0.0),
    }

    match infoflow::directed_info_from_plan(plan) {
        Ok(bits) => {
            let nats: f64 = bits.iter().sum::<f64>() * core::f64::consts::LN_2;
            report.at_most(String::from("directed_information_identity"), (nats - plan.objective_nats).abs(), 1e-6);
        }
        Err(_) => report.at_most(String::from("directed_information_identity"), f64::INFINITY, 0.0),
    }

    report
}
