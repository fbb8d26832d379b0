//! Ready-made problem instances.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::maxdet;
use crate::model::{validate, BudgetMode, CostSpec, SystemModel, ValidatedInstance};
use crate::riccati::backward_riccati;
use crate::simulate::GaussianStream;

/// Scalar navigation example: `X_{t+1} = X_t + U_t + W_t`, `W_t ~ N(0, 0.3)`,
/// `X_1 ~ N(15, p10)`, `T = 40`, `Q_t = 1`, `R_t = 10`.
pub fn navigation(p10: f64, delta: f64) -> ValidatedInstance {
    navigation_with(p10, delta, false, BudgetMode::Total)
}

pub fn navigation_with(p10: f64, delta: f64, include_mean_cost: bool, budget_mode: BudgetMode) -> ValidatedInstance {
    let horizon = 40;
    let one = DMatrix::from_element(1, 1, 1.0);
    let model = SystemModel {
        horizon,
        a: vec![one.clone(); horizon],
        b: vec![one.clone(); horizon],
        sigma_w: vec![DMatrix::from_element(1, 1, 0.3); horizon],
        m1: DVector::from_element(1, 15.0),
        p10: DMatrix::from_element(1, 1, p10),
    };
    let cost = CostSpec {
        q: vec![one; horizon],
        r: vec![DMatrix::from_element(1, 1, 10.0); horizon],
        delta,
        include_mean_cost,
        budget_mode,
    };
    validate(model, cost).expect("navigation scenario is valid")
}

/// Spectral-radius cap applied to the drift of [`random_instance`].
pub const MAX_SPECTRAL_RADIUS: f64 = 1.05;

/// Time-invariant instance with entries drawn from a seeded stream.
pub fn random_instance(n: usize, m: usize, horizon: usize, seed: u64) -> ValidatedInstance {
    let mut rng = GaussianStream::new(seed, 0);
    let mut gauss = |rows: usize, cols: usize, sd: f64| DMatrix::from_fn(rows, cols, |_, _| sd * rng.next_normal());
    let mut a = gauss(n, n, 0.5) + DMatrix::identity(n, n) * 0.6;
    // Keep the open-loop growth mild so zero-information covariances stay
    // within a few orders of magnitude over the horizon.
    let radius = a.complex_eigenvalues().iter().map(|z| libm::hypot(z.re, z.im)).fold(0.0, f64::max);
    if radius > MAX_SPECTRAL_RADIUS {
        a *= MAX_SPECTRAL_RADIUS / radius;
    }
    let b = gauss(n, m, 0.7) + DMatrix::identity(n, m) * 0.5;
    let gw = gauss(n, n, 0.4);
    let sigma_w = &gw * gw.transpose() + DMatrix::identity(n, n) * 0.2;
    let gp = gauss(n, n, 0.6);
    let p10 = &gp * gp.transpose() + DMatrix::identity(n, n) * 0.3;
    let gq = gauss(n, n, 0.8);
    let q = &gq * gq.transpose() + DMatrix::identity(n, n) * 0.05;
    let gr = gauss(m, m, 0.5);
    let r = &gr * gr.transpose() + DMatrix::identity(m, m) * 0.5;
    let m1 = DVector::from_fn(n, |_, _| 2.0 * rng.next_normal());
    let model = SystemModel { horizon, a: vec![a; horizon], b: vec![b; horizon], sigma_w: vec![sigma_w; horizon], m1, p10 };
    let cost = CostSpec {
        q: vec![q; horizon],
        r: vec![r; horizon],
        delta: 1.0,
        include_mean_cost: false,
        budget_mode: BudgetMode::Total,
    };
    validate(model, cost).expect("random instance is valid")
}

/// Budget `c2 + fraction·Z`, where `Z` is the estimation cost of disclosing
/// nothing. Fractions in `(0, 1)` give budgets strictly between the
/// irreducible cost and the zero-information cost.
pub fn budget_at_fraction(instance: &ValidatedInstance, fraction: f64) -> f64 {
    let riccati = backward_riccati(instance).expect("validated instance");
    let problem = maxdet::build_problem(instance, &riccati);
    let z = maxdet::zero_information_cost(&problem);
    let d = problem.c2 + fraction * z;
    match instance.cost().budget_mode {
        BudgetMode::NetOfConstants => d - problem.c2,
        BudgetMode::Total if instance.cost().include_mean_cost => d + problem.mean_cost,
        BudgetMode::Total => d,
    }
}

/// Budgets for a sweep: `fractions` mapped through [`budget_at_fraction`].
pub fn budget_grid(instance: &ValidatedInstance, fractions: &[f64]) -> Vec<f64> {
    fractions.iter().map(|f| budget_at_fraction(instance, *f)).collect()
}
