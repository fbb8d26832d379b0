//! Directed-information accounting for linear-Gaussian designs and the
//! estimation limits it implies.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{cholesky_lower, logdet_pd, symmetrize};
use crate::maxdet::CovariancePlan;
use crate::model::ValidatedInstance;
use crate::synthesis::FilterDesign;
use crate::{nats_to_bits, Error, Result};

/// Privacy loss of a design, in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyReport {
    /// `γ = Σ_t γ_t`.
    pub total_bits: f64,
    /// `γ_t = I(X^t; Y_t | Y^{t−1}, U^{t−1})`.
    pub per_step_bits: Vec<f64>,
    /// `I(X^T → U^T)`, when the joint oracle was run.
    pub di_x_to_u_bits: Option<f64>,
    /// `I(X^T → Y^T ‖ U^{T−1})`, when the joint oracle was run.
    pub di_x_to_y_given_u_bits: Option<f64>,
    /// `D_t(γ_t)` for scalar states.
    pub distortion_rate_floor: Option<Vec<f64>>,
}

/// `γ_t = ½[logdet P_{t|t−1} − logdet P_{t|t}]` in bits.
pub fn directed_info_from_plan(plan: &CovariancePlan) -> Result<Vec<f64>> {
    plan.p_pred
        .iter()
        .zip(&plan.p_filt)
        .map(|(pred, filt)| Ok(nats_to_bits(0.5 * (logdet_pd(pred)? - logdet_pd(filt)?)).max(0.0)))
        .collect()
}

/// Gaussian distortion-rate bound `P_{t|t−1}·2^{−2γ_t}` for step index
/// `t` (0-based). Scalar states only.
pub fn distortion_rate_floor(plan: &CovariancePlan, t: usize) -> Result<f64> {
    let n = plan.p_pred[t].nrows();
    if n != 1 {
        return Err(Error::UnsupportedDimension(n));
    }
    let gamma = directed_info_from_plan(plan)?[t];
    Ok(plan.p_pred[t][(0, 0)] * libm::exp2(-2.0 * gamma))
}

fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * libm::log2(q) } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Smallest error probability `ε ∈ [0, 1 − 1/M]` compatible with Fano's
/// inequality `ε·log₂(M − 1) + h(ε) ≥ residual`.
pub fn fano_floor(residual_bits: f64, alphabet_size: usize) -> Result<f64> {
    if alphabet_size < 2 {
        return Err(Error::OutOfRange(format!("alphabet size {alphabet_size} < 2")));
    }
    let m = alphabet_size as f64;
    let max_bits = libm::log2(m);
    if !(0.0..=max_bits + 1e-12).contains(&residual_bits) {
        return Err(Error::OutOfRange(format!("residual {residual_bits} bits outside [0, {max_bits}]")));
    }
    let bound = |eps: f64| eps * libm::log2(m - 1.0) + binary_entropy(eps);
    let (mut lo, mut hi) = (0.0, 1.0 - 1.0 / m);
    if bound(lo) >= residual_bits {
        return Ok(0.0);
    }
    if bound(hi) <= residual_bits {
        return Ok(hi);
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if bound(mid) >= residual_bits {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Directed informations evaluated from the stacked joint covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOracle {
    /// `I(X^t; U_t | U^{t−1})` per step, bits.
    pub x_to_u_terms: Vec<f64>,
    /// `I(X^t; Y_t | Y^{t−1}, U^{t−1})` per step, bits.
    pub x_to_y_given_u_terms: Vec<f64>,
    pub di_x_to_u_bits: f64,
    pub di_x_to_y_given_u_bits: f64,
    /// `I(X^T; Y^T | U^T)`, the slack in the feedback inequality.
    pub residual_bits: f64,
}

/// Every closed-loop signal as a linear map of standardized primitive noise
/// `(X_1 − m1, W_1, …, W_{T−1}, V_1, …, V_T)`.
struct StackedSignals {
    x: Vec<DMatrix<f64>>,
    y: Vec<DMatrix<f64>>,
    u: Vec<DMatrix<f64>>,
}

fn stack_signals(design: &FilterDesign, instance: &ValidatedInstance) -> Result<StackedSignals> {
    let model = instance.model();
    let horizon = instance.horizon();
    let n = instance.state_dim();
    let ranks = design.ranks();
    let width = n * horizon + ranks.iter().sum::<usize>();
    let w_offset = |t: usize| n + t * n;
    let mut v_offset = Vec::with_capacity(horizon);
    let mut acc = n * horizon;
    for r in &ranks {
        v_offset.push(acc);
        acc += r;
    }

    let mut x = Vec::with_capacity(horizon);
    let mut y = Vec::with_capacity(horizon);
    let mut u = Vec::with_capacity(horizon);
    let mut first = DMatrix::zeros(n, width);
    first.view_mut((0, 0), (n, n)).copy_from(&cholesky_lower(&model.p10)?);
    x.push(first);
    let mut estimate: DMatrix<f64> = DMatrix::zeros(n, width);
    for t in 0..horizon {
        let pred = if t == 0 { DMatrix::zeros(n, width) } else { &model.a[t - 1] * &estimate + &model.b[t - 1] * &u[t - 1] };
        let c = &design.c[t];
        let r = c.nrows();
        let mut yt = c * &x[t];
        if r > 0 {
            let noise = cholesky_lower(&design.sigma_v[t])?;
            let mut block = yt.view_mut((0, v_offset[t]), (r, r));
            block += noise;
        }
        estimate = if r > 0 {
            let l = &design.l[t];
            (DMatrix::identity(n, n) - l * c) * &pred + l * &yt
        } else {
            pred
        };
        u.push(&design.k[t] * &estimate);
        y.push(yt);
        if t + 1 < horizon {
            let mut next = &model.a[t] * &x[t] + &model.b[t] * &u[t];
            let mut block = next.view_mut((0, w_offset(t)), (n, n));
            block += cholesky_lower(&model.sigma_w[t])?;
            x.push(next);
        }
    }
    Ok(StackedSignals { x, y, u })
}

fn vstack(blocks: &[&DMatrix<f64>], width: usize) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, width);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), width)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Orthonormal basis (as rows) of the row space of `m`, by modified
/// Gram–Schmidt with one reorthogonalization pass. Rows whose remainder falls
/// below `1e-10` of the largest row norm are treated as dependent.
fn row_space_basis(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let top = m.row_iter().map(|r| r.norm()).fold(0.0_f64, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for row in m.row_iter() {
        let mut v = row.transpose();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * top {
            basis.push(v / norm);
        }
    }
    basis
}

/// `logdet Cov(target | given)`; `given` may be rank deficient.
fn conditional_logdet(target: &DMatrix<f64>, given: &DMatrix<f64>) -> Result<f64> {
    let width = target.ncols();
    let mut residual = target.clone();
    for dir in row_space_basis(given) {
        let coeff = &residual * &dir;
        residual -= coeff * dir.transpose();
    }
    debug_assert_eq!(residual.ncols(), width);
    // logdet(RRᵀ) from the triangular factor of Rᵀ, avoiding the squared
    // condition number of the Gram matrix.
    let rows = residual.nrows();
    if rows > width {
        return Err(Error::NumericalBreakdown(String::from("conditional covariance is singular")));
    }
    let r = residual.transpose().qr().unpack_r();
    let top = (0..rows).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    let mut acc = 0.0;
    for i in 0..rows {
        let d = r[(i, i)].abs();
        if !(d > 1e-14 * top) {
            return Err(Error::NumericalBreakdown(String::from("conditional covariance is singular")));
        }
        acc += 2.0 * libm::log(d);
    }
    Ok(acc)
}

/// Evaluates `I(X^T → U^T)` and `I(X^T → Y^T ‖ U^{T−1})` from the exact
/// joint covariance of the closed loop. Cost grows with `(nT)³`; intended for
/// short horizons.
pub fn directed_info_joint_oracle(design: &FilterDesign, instance: &ValidatedInstance) -> Result<JointOracle> {
    let horizon = instance.horizon();
    let signals = stack_signals(design, instance)?;
    let width = signals.x[0].ncols();

    let all_x: Vec<&DMatrix<f64>> = signals.x.iter().collect();
    let x_cov = {
        let g = vstack(&all_x, width);
        symmetrize(&(&g * g.transpose()))
    };
    let values = x_cov.symmetric_eigenvalues();
    let hi = values.iter().fold(0.0_f64, |a, v| a.max(*v));
    let lo = values.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > 1e12 {
        return Err(Error::IllConditioned(condition));
    }

    let mut x_to_u_terms = Vec::with_capacity(horizon);
    let mut x_to_y_terms = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let xs = vstack(&all_x[..=t], width);
        let past_u: Vec<&DMatrix<f64>> = signals.u[..t].iter().collect();
        let mut with_u = past_u.clone();
        with_u.push(&signals.u[t]);
        let before = conditional_logdet(&xs, &vstack(&past_u, width))?;
        let after = conditional_logdet(&xs, &vstack(&with_u, width))?;
        x_to_u_terms.push(nats_to_bits(0.5 * (before - after)));

        let mut past: Vec<&DMatrix<f64>> = signals.y[..t].iter().collect();
        past.extend(signals.u[..t].iter());
        let mut with_y = past.clone();
        with_y.push(&signals.y[t]);
        let before = conditional_logdet(&xs, &vstack(&past, width))?;
        let after = conditional_logdet(&xs, &vstack(&with_y, width))?;
        x_to_y_terms.push(nats_to_bits(0.5 * (before - after)));
    }

    let xs = vstack(&all_x, width);
    let all_u: Vec<&DMatrix<f64>> = signals.u.iter().collect();
    let mut all_yu: Vec<&DMatrix<f64>> = signals.y.iter().collect();
    all_yu.extend(signals.u.iter());
    let residual_bits = nats_to_bits(
        0.5 * (conditional_logdet(&xs, &vstack(&all_u, width))? - conditional_logdet(&xs, &vstack(&all_yu, width))?),
    );

    Ok(JointOracle {
        di_x_to_u_bits: x_to_u_terms.iter().sum(),
        di_x_to_y_given_u_bits: x_to_y_terms.iter().sum(),
        x_to_u_terms,
        x_to_y_given_u_terms: x_to_y_terms,
        residual_bits,
    })
}

/// Assembles the privacy report of a design. The joint oracle runs only when
/// `with_oracle` is set.
pub fn privacy_report(design: &FilterDesign, instance: &ValidatedInstance, with_oracle: bool) -> Result<PrivacyReport> {
    let per_step_bits = directed_info_from_plan(&design.plan)?;
    let total_bits = per_step_bits.iter().sum();
    let (di_x_to_u_bits, di_x_to_y_given_u_bits) = if with_oracle {
        let oracle = directed_info_joint_oracle(design, instance)?;
        (Some(oracle.di_x_to_u_bits), Some(oracle.di_x_to_y_given_u_bits))
    } else {
        (None, None)
    };
    let distortion_rate_floor = if instance.state_dim() == 1 {
        Some(design.plan.p_pred.iter().zip(&per_step_bits).map(|(p, g)| p[(0, 0)] * libm::exp2(-2.0 * g)).collect())
    } else {
        None
    };
    Ok(PrivacyReport { total_bits, per_step_bits, di_x_to_u_bits, di_x_to_y_given_u_bits, distortion_rate_floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxdet::SolverStats;
    use alloc::vec;

    fn scalar_plan(pred: &[f64], filt: &[f64]) -> CovariancePlan {
        let m = |v: &f64| DMatrix::from_element(1, 1, *v);
        CovariancePlan {
            p_filt: filt.iter().map(m).collect(),
            pi: filt.iter().map(m).collect(),
            p_pred: pred.iter().map(m).collect(),
            objective_nats: 0.0,
            stats: SolverStats::default(),
        }
    }

    #[test]
    fn no_disclosure_no_information() {
        let plan = scalar_plan(&[2.0, 3.0], &[2.0, 3.0]);
        assert_eq!(directed_info_from_plan(&plan).unwrap(), vec![0.0, 0.0]);
        assert_eq!(distortion_rate_floor(&plan, 1).unwrap(), 3.0);
    }

    #[test]
    fn one_bit_step() {
        let plan = scalar_plan(&[4.0], &[1.0]);
        assert!((directed_info_from_plan(&plan).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((distortion_rate_floor(&plan, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distortion_rate_needs_scalar_state() {
        let plan = CovariancePlan {
            p_filt: vec![DMatrix::identity(2, 2)],
            pi: vec![DMatrix::identity(2, 2)],
            p_pred: vec![DMatrix::identity(2, 2)],
            objective_nats: 0.0,
            stats: SolverStats::default(),
        };
        assert_eq!(distortion_rate_floor(&plan, 0), Err(Error::UnsupportedDimension(2)));
    }

    #[test]
    fn fano_cases() {
        assert!((fano_floor(1.0, 2).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(fano_floor(0.0, 2).unwrap(), 0.0);
        // 0.75·log₂3 + h(0.75) = 2 exactly.
        assert!((0.75 * libm::log2(3.0) + binary_entropy(0.75) - 2.0).abs() < 1e-14);
        assert!((fano_floor(2.0, 4).unwrap() - 0.75).abs() < 1e-10);
        assert!(matches!(fano_floor(3.0, 4), Err(Error::OutOfRange(_))));
        assert!(matches!(fano_floor(0.5, 1), Err(Error::OutOfRange(_))));
        let mut last = 0.0;
        for i in 0..=50 {
            let eps = fano_floor(i as f64 * 0.06, 8).unwrap();
            assert!(eps >= last);
            last = eps;
        }
    }
}
