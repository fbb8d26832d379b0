#![allow(dead_code)]

use cloudpriv_core::model::{validate, BudgetMode, CostSpec, SystemModel, ValidatedInstance};
use cloudpriv_core::{DMatrix, DVector};

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Time-invariant scalar instance.
#[allow(clippy::too_many_arguments)]
pub fn scalar_instance(horizon: usize, a: f64, b: f64, w: f64, p10: f64, q: f64, r: f64, delta: f64) -> ValidatedInstance {
    let model = SystemModel {
        horizon,
        a: vec![scalar(a); horizon],
        b: vec![scalar(b); horizon],
        sigma_w: vec![scalar(w); horizon],
        m1: DVector::from_element(1, 0.5),
        p10: scalar(p10),
    };
    let cost = CostSpec {
        q: vec![scalar(q); horizon],
        r: vec![scalar(r); horizon],
        delta,
        include_mean_cost: false,
        budget_mode: BudgetMode::Total,
    };
    validate(model, cost).unwrap()
}

/// Maps a seed and a count to `(n, m, T)` with `n, m ≤ max_dim`, `T ≤ max_horizon`.
pub fn shape(seed: u64, max_dim: usize, max_horizon: usize) -> (usize, usize, usize) {
    let n = 1 + (seed as usize) % max_dim;
    let m = 1 + (seed as usize / max_dim) % max_dim;
    let horizon = 1 + (seed as usize * 7 + 3) % max_horizon;
    (n, m, horizon)
}
