mod common;

use cloudpriv_core::linalg::logdet_eigen;
use cloudpriv_core::maxdet::{build_problem, solve, verify_plan, zero_information_cost, CovariancePlan, SolverTolerances};
use cloudpriv_core::model::{validate, ValidatedInstance};
use cloudpriv_core::riccati::backward_riccati;
use cloudpriv_core::scenario::{budget_at_fraction, navigation, random_instance};
use cloudpriv_core::simulate::GaussianStream;
use cloudpriv_core::DMatrix;

fn solve_instance(inst: &ValidatedInstance) -> CovariancePlan {
    let ric = backward_riccati(inst).unwrap();
    solve(&build_problem(inst, &ric), SolverTolerances::default()).unwrap()
}

fn at_fraction(inst: &ValidatedInstance, fraction: f64) -> ValidatedInstance {
    inst.with_delta(budget_at_fraction(inst, fraction)).unwrap()
}

/// `½ Σ (logdet P_{t|t−1} − logdet P_{t|t})` through eigenvalues.
fn formula_nats(plan: &CovariancePlan) -> f64 {
    plan.p_pred
        .iter()
        .zip(&plan.p_filt)
        .map(|(pred, filt)| 0.5 * (logdet_eigen(pred).unwrap() - logdet_eigen(filt).unwrap()))
        .sum()
}

#[test]
fn random_instances_certify_identity_and_tightness() {
    for seed in 0..20u64 {
        let (n, m, horizon) = common::shape(seed, 3, 20);
        let fraction = 0.05 + 0.9 * GaussianStream::new(seed, 9).next_uniform();
        let inst = at_fraction(&random_instance(n, m, horizon, seed), fraction);
        let ric = backward_riccati(&inst).unwrap();
        let problem = build_problem(&inst, &ric);
        let plan = solve(&problem, SolverTolerances::default()).unwrap();
        let report = verify_plan(&problem, &plan);
        assert!(report.passed(), "seed {seed}: {:?}", report.failures().collect::<Vec<_>>());
        assert!((plan.objective_nats - formula_nats(&plan)).abs() <= 1e-6, "seed {seed}");
        assert!(plan.stats.pi_tightness_residual <= 1e-5, "seed {seed}: {}", plan.stats.pi_tightness_residual);
        assert!(plan.stats.budget_slack >= -1e-8 * (1.0 + problem.budget.abs()));
    }
}

/// Objective of the scalar program in terms of the filtered variances, with
/// `Π_t` at its tight value.
fn scalar_objective(a: f64, w: f64, p10: f64, p: &[f64]) -> f64 {
    let horizon = p.len();
    let mut value = 0.5 * p10.ln() + 0.5 * (horizon as f64 - 1.0) * w.ln();
    for (t, pt) in p.iter().enumerate() {
        let pi = if t + 1 < horizon { 1.0 / (1.0 / pt + a * a / w) } else { *pt };
        value -= 0.5 * pi.ln();
    }
    value
}

#[test]
fn scalar_grid_oracle_matches_solver() {
    // (T, a, b, w, p10, q, r, budget fraction)
    let cases = [
        (1, 1.0, 1.0, 0.3, 1.0, 1.0, 10.0, 0.4),
        (1, 0.8, 0.5, 1.0, 2.0, 2.0, 1.0, 0.1),
        (2, 1.0, 1.0, 0.3, 1.0, 1.0, 10.0, 0.3),
        (2, 1.2, 0.7, 0.5, 3.0, 1.5, 2.0, 0.5),
        (2, 0.5, 1.0, 2.0, 0.5, 1.0, 0.2, 0.15),
    ];
    const STEPS: usize = 1000;
    for (horizon, a, b, w, p10, q, r, fraction) in cases {
        let inst = at_fraction(&common::scalar_instance(horizon, a, b, w, p10, q, r, 1.0), fraction);
        let ric = backward_riccati(&inst).unwrap();
        let problem = build_problem(&inst, &ric);
        let plan = solve(&problem, SolverTolerances::default()).unwrap();
        let slack = problem.budget - problem.c2;
        let theta: Vec<f64> = problem.theta().iter().map(|m| m[(0, 0)]).collect();

        let mut best = f64::INFINITY;
        let top1 = p10.min(slack / theta[0]);
        for i in 1..=STEPS {
            let p1 = top1 * i as f64 / STEPS as f64;
            if horizon == 1 {
                best = best.min(scalar_objective(a, w, p10, &[p1]));
                continue;
            }
            let top2 = (a * a * p1 + w).min((slack - theta[0] * p1) / theta[1]);
            if top2 <= 0.0 {
                continue;
            }
            for j in 1..=STEPS {
                let p2 = top2 * j as f64 / STEPS as f64;
                best = best.min(scalar_objective(a, w, p10, &[p1, p2]));
            }
        }
        let solver = plan.objective_nats;
        assert!((best - solver).abs() <= 1e-3, "T={horizon}: grid {best} vs solver {solver}");
        assert!(best >= solver - 1e-6, "grid beats solver: {best} < {solver}");
    }
}

#[test]
fn objective_is_nonincreasing_and_convex_in_budget() {
    let base = navigation(1.0, 1.0);
    let fractions: Vec<f64> = (1..=13).map(|i| 0.08 * i as f64).collect();
    let values: Vec<f64> = fractions.iter().map(|f| solve_instance(&at_fraction(&base, *f)).objective_nats).collect();
    for pair in values.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-7, "{values:?}");
    }
    for triple in values.windows(3) {
        assert!(triple[0] - 2.0 * triple[1] + triple[2] >= -1e-6, "{values:?}");
    }
    assert_eq!(values.last().copied(), Some(0.0));
}

#[test]
fn state_coordinates_do_not_change_the_objective() {
    for seed in [3u64, 11, 27] {
        let inst = at_fraction(&random_instance(2, 1, 6, seed), 0.3);
        let m = DMatrix::from_row_slice(2, 2, &[1.5, 0.4, -0.3, 0.8]);
        let inv = m.clone().try_inverse().unwrap();
        let (mut model, mut cost) = inst.clone().into_parts();
        for t in 0..model.horizon {
            model.a[t] = &m * &model.a[t] * &inv;
            model.b[t] = &m * &model.b[t];
            model.sigma_w[t] = &m * &model.sigma_w[t] * m.transpose();
            cost.q[t] = inv.transpose() * &cost.q[t] * &inv;
        }
        model.m1 = &m * &model.m1;
        model.p10 = &m * &model.p10 * m.transpose();
        let moved = validate(model, cost).unwrap();
        let (x, y) = (solve_instance(&inst).objective_nats, solve_instance(&moved).objective_nats);
        assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()), "seed {seed}: {x} vs {y}");
    }
}

#[test]
fn zero_information_threshold_separates_regimes() {
    let inst = navigation(1.0, 1.0);
    let ric = backward_riccati(&inst).unwrap();
    let z = zero_information_cost(&build_problem(&inst, &ric));
    assert!(solve_instance(&at_fraction(&inst, 0.999)).objective_nats > 0.0);
    assert_eq!(solve_instance(&at_fraction(&inst, 1.0)).objective_nats, 0.0);
    assert!(z > 0.0);
}
