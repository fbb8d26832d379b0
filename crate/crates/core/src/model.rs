//! Plant, cost and horizon data, and instance validation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{asymmetry, max_abs, min_eigenvalue, scale, symmetrize};
use crate::{Error, Result};

/// Time-varying linear-Gaussian plant `X_{t+1} = A_t X_t + B_t U_t + W_t`
/// with `X_1 ~ N(m1, P10)` and `W_t ~ N(0, Σ^W_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub horizon: usize,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub sigma_w: Vec<DMatrix<f64>>,
    pub m1: DVector<f64>,
    pub p10: DMatrix<f64>,
}

/// How the configured budget `delta` maps to the right-hand side `D` of the
/// budget constraint `Σ tr(Θ_t P_{t|t}) + c2 ≤ D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BudgetMode {
    /// `delta` is the full expected cost bound (less the mean-regulation cost
    /// when `include_mean_cost` is set).
    #[default]
    Total,
    /// `delta` bounds only the estimation-dependent part: `D = c2 + delta`.
    NetOfConstants,
}

/// Quadratic cost `Σ_t E(‖X_{t+1}‖²_{Q_t} + ‖U_t‖²_{R_t}) ≤ delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub delta: f64,
    /// Count `m1ᵀ Φ_1 m1` against the budget.
    pub include_mean_cost: bool,
    pub budget_mode: BudgetMode,
}

/// A model/cost pair that passed [`validate`]. Matrices are symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedInstance {
    model: SystemModel,
    cost: CostSpec,
}

impl ValidatedInstance {
    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.model.p10.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.model.b[0].ncols()
    }

    /// Same instance with a different budget.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut cost = self.cost.clone();
        cost.delta = delta;
        validate(self.model.clone(), cost)
    }

    pub fn into_parts(self) -> (SystemModel, CostSpec) {
        (self.model, self.cost)
    }
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteEntry(String::from(name)))
    }
}

fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() == rows && m.ncols() == cols {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{name} is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols())))
    }
}

fn check_len<T>(name: &str, seq: &[T], horizon: usize) -> Result<()> {
    if seq.len() == horizon {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{name} has {} entries, horizon is {horizon}", seq.len())))
    }
}

fn symmetric(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = asymmetry(m);
    if asym > 1e-10 * (1.0 + max_abs(m)) {
        return Err(Error::NotSymmetric { name: String::from(name), asymmetry: asym });
    }
    Ok(symmetrize(m))
}

fn positive_definite(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = symmetric(name, m)?;
    let lambda = min_eigenvalue(&m);
    if lambda > 1e-12 * scale(&m) {
        Ok(m)
    } else {
        Err(Error::NotPositiveDefinite { name: String::from(name), min_eigenvalue: lambda })
    }
}

fn positive_semidefinite(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = symmetric(name, m)?;
    let lambda = min_eigenvalue(&m);
    if lambda >= -1e-12 * scale(&m) {
        Ok(m)
    } else {
        Err(Error::NotPositiveSemidefinite { name: String::from(name), min_eigenvalue: lambda })
    }
}

/// Checks every shape, finiteness and definiteness requirement of the
/// instance. Error messages use 1-based time indices.
pub fn validate(model: SystemModel, cost: CostSpec) -> Result<ValidatedInstance> {
    let horizon = model.horizon;
    if horizon == 0 {
        return Err(Error::DimensionMismatch(String::from("horizon must be positive")));
    }
    let n = model.p10.nrows();
    if n == 0 {
        return Err(Error::DimensionMismatch(String::from("state dimension must be positive")));
    }
    check_len("A", &model.a, horizon)?;
    check_len("B", &model.b, horizon)?;
    check_len("SigmaW", &model.sigma_w, horizon)?;
    check_len("Q", &cost.q, horizon)?;
    check_len("R", &cost.r, horizon)?;
    let m = model.b[0].ncols();
    if m == 0 {
        return Err(Error::DimensionMismatch(String::from("input dimension must be positive")));
    }

    check_shape("P10", &model.p10, n, n)?;
    check_finite("P10", &model.p10)?;
    if model.m1.len() != n {
        return Err(Error::DimensionMismatch(format!("m1 has length {}, expected {n}", model.m1.len())));
    }
    if !model.m1.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteEntry(String::from("m1")));
    }
    if !cost.delta.is_finite() {
        return Err(Error::NonFiniteEntry(String::from("delta")));
    }

    for k in 0..horizon {
        let t = k + 1;
        let tag = |s: &str| format!("{s}[{t}]");
        check_shape(&tag("A"), &model.a[k], n, n)?;
        check_shape(&tag("B"), &model.b[k], n, m)?;
        check_shape(&tag("SigmaW"), &model.sigma_w[k], n, n)?;
        check_shape(&tag("Q"), &cost.q[k], n, n)?;
        check_shape(&tag("R"), &cost.r[k], m, m)?;
        check_finite(&tag("A"), &model.a[k])?;
        check_finite(&tag("B"), &model.b[k])?;
        check_finite(&tag("SigmaW"), &model.sigma_w[k])?;
        check_finite(&tag("Q"), &cost.q[k])?;
        check_finite(&tag("R"), &cost.r[k])?;
    }

    if !(cost.delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {}", cost.delta)));
    }

    let p10 = positive_definite("P10", &model.p10)?;
    let mut sigma_w = Vec::with_capacity(horizon);
    let mut q = Vec::with_capacity(horizon);
    let mut r = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let t = k + 1;
        sigma_w.push(positive_definite(&format!("SigmaW[{t}]"), &model.sigma_w[k])?);
        q.push(positive_semidefinite(&format!("Q[{t}]"), &cost.q[k])?);
        r.push(positive_definite(&format!("R[{t}]"), &cost.r[k])?);
    }

    Ok(ValidatedInstance {
        model: SystemModel { horizon, a: model.a, b: model.b, sigma_w, m1: model.m1, p10 },
        cost: CostSpec { q, r, ..cost },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    #[test]
    fn navigation_scenario_is_valid() {
        let inst = scenario::navigation(1.0, 31.4);
        assert_eq!(inst.horizon(), 40);
        assert_eq!(inst.state_dim(), 1);
    }

    #[test]
    fn zero_noise_is_rejected() {
        let (mut model, cost) = scenario::navigation(1.0, 31.4).into_parts();
        model.sigma_w[2] = DMatrix::zeros(1, 1);
        match validate(model, cost) {
            Err(Error::NotPositiveDefinite { name, min_eigenvalue }) => {
                assert_eq!(name, "SigmaW[3]");
                assert_eq!(min_eigenvalue, 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_sequence_is_rejected() {
        let (mut model, cost) = scenario::navigation(1.0, 31.4).into_parts();
        model.a.pop();
        assert!(matches!(validate(model, cost), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn nonfinite_and_nonpositive_budget() {
        let (mut model, cost) = scenario::navigation(1.0, 31.4).into_parts();
        model.b[5][(0, 0)] = f64::NAN;
        assert_eq!(validate(model, cost), Err(Error::NonFiniteEntry("B[6]".into())));

        let (model, mut cost) = scenario::navigation(1.0, 31.4).into_parts();
        cost.delta = 0.0;
        assert!(matches!(validate(model, cost), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn rounded_symmetry_is_accepted_and_repaired() {
        let (mut model, cost) = scenario::random_instance(2, 1, 3, 4).into_parts();
        model.p10[(0, 1)] += 1e-13;
        let inst = validate(model, cost).unwrap();
        assert_eq!(inst.model().p10[(0, 1)], inst.model().p10[(1, 0)]);

        let (mut model, cost) = scenario::random_instance(2, 1, 3, 4).into_parts();
        model.p10[(0, 1)] += 1e-3;
        assert!(matches!(validate(model, cost), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn indefinite_weight_is_rejected() {
        let (model, mut cost) = scenario::random_instance(2, 2, 3, 9).into_parts();
        cost.q[1] = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(validate(model, cost), Err(Error::NotPositiveSemidefinite { .. })));
    }
}
