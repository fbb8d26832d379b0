//! Backward Riccati recursion for the finite-horizon LQ regulator with stage
//! cost `‖X_{t+1}‖²_{Q_t} + ‖U_t‖²_{R_t}`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::linalg::{spd_solve, symmetrize};
use crate::model::ValidatedInstance;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    /// `S_T = Q_T`, `S_t = Q_t + Φ_{t+1}`.
    pub s: Vec<DMatrix<f64>>,
    /// `Φ_t = A_tᵀ(S_t − S_tB_t(B_tᵀS_tB_t + R_t)⁻¹B_tᵀS_t)A_t`.
    pub phi: Vec<DMatrix<f64>>,
    /// `K_t = −(B_tᵀS_tB_t + R_t)⁻¹B_tᵀS_tA_t`.
    pub k: Vec<DMatrix<f64>>,
    /// `Θ_t = K_tᵀ(B_tᵀS_tB_t + R_t)K_t`.
    pub theta: Vec<DMatrix<f64>>,
}

pub fn backward_riccati(instance: &ValidatedInstance) -> Result<RiccatiSolution> {
    let model = instance.model();
    let cost = instance.cost();
    let horizon = instance.horizon();
    let n = instance.state_dim();

    let mut s = alloc::vec![DMatrix::zeros(n, n); horizon];
    let mut phi = alloc::vec![DMatrix::zeros(n, n); horizon];
    let mut k = alloc::vec![DMatrix::zeros(0, 0); horizon];
    let mut theta = alloc::vec![DMatrix::zeros(n, n); horizon];

    for step in (0..horizon).rev() {
        let a = &model.a[step];
        let b = &model.b[step];
        let s_t = if step + 1 == horizon { cost.q[step].clone() } else { symmetrize(&(&cost.q[step] + &phi[step + 1])) };
        let bt_s = b.transpose() * &s_t;
        let gram = symmetrize(&(&bt_s * b + &cost.r[step]));
        let gain = -spd_solve(&gram, &(&bt_s * a)).map_err(|_| Error::SingularInnovation { t: step + 1 })?;
        let at_s = a.transpose() * &s_t;
        phi[step] = symmetrize(&(&at_s * a + &at_s * b * &gain));
        theta[step] = symmetrize(&(gain.transpose() * &gram * &gain));
        k[step] = gain;
        s[step] = s_t;
    }

    Ok(RiccatiSolution { s, phi, k, theta })
}

/// Expected cost `Σ_t E(‖X_{t+1}‖²_Q + ‖U_t‖²_R)` of the full-information
/// policy `U_t = K_t X_t`, by exact second-moment propagation.
pub fn state_feedback_cost(instance: &ValidatedInstance, gains: &[DMatrix<f64>]) -> f64 {
    let model = instance.model();
    let cost = instance.cost();
    let mut second_moment = &model.p10 + &model.m1 * model.m1.transpose();
    let mut total = 0.0;
    for step in 0..instance.horizon() {
        let closed = &model.a[step] + &model.b[step] * &gains[step];
        let input_weight = gains[step].transpose() * &cost.r[step] * &gains[step];
        total += (&input_weight * &second_moment).trace();
        second_moment = symmetrize(&(&closed * &second_moment * closed.transpose() + &model.sigma_w[step]));
        total += (&cost.q[step] * &second_moment).trace();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, BudgetMode, CostSpec, SystemModel};
    use crate::scenario;
    use alloc::vec;
    use nalgebra::DVector;

    fn scalar_instance(horizon: usize, q: f64) -> ValidatedInstance {
        let one = DMatrix::from_element(1, 1, 1.0);
        validate(
            SystemModel {
                horizon,
                a: vec![one.clone(); horizon],
                b: vec![one.clone(); horizon],
                sigma_w: vec![DMatrix::from_element(1, 1, 0.3); horizon],
                m1: DVector::from_element(1, 15.0),
                p10: one,
            },
            CostSpec {
                q: vec![DMatrix::from_element(1, 1, q); horizon],
                r: vec![DMatrix::from_element(1, 1, 10.0); horizon],
                delta: 1.0,
                include_mean_cost: false,
                budget_mode: BudgetMode::Total,
            },
        )
        .unwrap()
    }

    #[test]
    fn single_step_closed_form() {
        let sol = backward_riccati(&scalar_instance(1, 1.0)).unwrap();
        assert!((sol.s[0][(0, 0)] - 1.0).abs() < 1e-15);
        assert!((sol.k[0][(0, 0)] + 1.0 / 11.0).abs() < 1e-15);
        assert!((sol.theta[0][(0, 0)] - 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_kills_recursion() {
        let sol = backward_riccati(&scalar_instance(6, 0.0)).unwrap();
        for t in 0..6 {
            assert_eq!(sol.s[t][(0, 0)], 0.0);
            assert_eq!(sol.phi[t][(0, 0)], 0.0);
            assert_eq!(sol.k[t][(0, 0)], 0.0);
            assert_eq!(sol.theta[t][(0, 0)], 0.0);
        }
    }

    #[test]
    fn navigation_value_matches_fixed_point() {
        // Oracle: iterate S ↦ 1 + 10S/(S + 10) to convergence.
        let mut fixed = 1.0_f64;
        for _ in 0..10_000 {
            fixed = 1.0 + 10.0 * fixed / (fixed + 10.0);
        }
        let sol = backward_riccati(&scenario::navigation(1.0, 31.4)).unwrap();
        assert!((sol.s[0][(0, 0)] - fixed).abs() < 1e-6);
        assert!((fixed - (1.0 + 41.0_f64.sqrt()) / 2.0).abs() < 1e-12);
        // Monotone backward growth.
        for t in 0..39 {
            assert!(sol.s[t][(0, 0)] >= sol.s[t + 1][(0, 0)] - 1e-15);
        }
    }

    #[test]
    fn theta_reconstructs_and_recursion_identity() {
        for seed in 0..10 {
            let inst = scenario::random_instance(3, 2, 7, seed);
            let sol = backward_riccati(&inst).unwrap();
            let model = inst.model();
            for t in 0..7 {
                let b = &model.b[t];
                let gram = b.transpose() * &sol.s[t] * b + &inst.cost().r[t];
                let rebuilt = sol.k[t].transpose() * gram * &sol.k[t];
                let scale = 1.0 + sol.theta[t].norm();
                assert!((rebuilt - &sol.theta[t]).abs().max() <= 1e-10 * scale);
                if t + 1 < 7 {
                    let expect = &inst.cost().q[t] + &sol.phi[t + 1];
                    assert!((expect - &sol.s[t]).abs().max() <= 1e-12 * (1.0 + sol.s[t].norm()));
                }
                for m in [&sol.s[t], &sol.phi[t], &sol.theta[t]] {
                    assert!(crate::linalg::min_eigenvalue(m) >= -1e-10 * (1.0 + m.norm()));
                }
            }
        }
    }

    #[test]
    fn optimal_cost_matches_value_function() {
        let inst = scenario::random_instance(2, 1, 5, 3);
        let sol = backward_riccati(&inst).unwrap();
        let model = inst.model();
        let m1 = &model.m1;
        let expected = (m1.transpose() * &sol.phi[0] * m1)[(0, 0)]
            + (&sol.phi[0] * &model.p10).trace()
            + (0..5).map(|t| (&model.sigma_w[t] * &sol.s[t]).trace()).sum::<f64>();
        let got = state_feedback_cost(&inst, &sol.k);
        assert!((got - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
    }
}
