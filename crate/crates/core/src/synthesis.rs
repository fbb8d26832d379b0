//! Sensor factorization and Kalman gains: turns a covariance plan into the
//! privacy filter `Y_t = C_t X_t + V_t` and the cloud-side estimator.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::infoflow::directed_info_from_plan;
use crate::linalg::{sorted_eigen, spd_inverse, spd_solve, spectral_norm, symmetrize};
use crate::maxdet::{build_problem, solve, CovariancePlan, SolverTolerances};
use crate::model::ValidatedInstance;
use crate::riccati::backward_riccati;
use crate::{Error, Result};

/// Complete joint design: sensor, noise, Kalman gains, feedback gains.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDesign {
    /// `r_t × n`, rows are unit-norm; `r_t = 0` means nothing is sent.
    pub c: Vec<DMatrix<f64>>,
    /// `r_t × r_t` sensor noise covariance.
    pub sigma_v: Vec<DMatrix<f64>>,
    /// `n × r_t` Kalman gains.
    pub l: Vec<DMatrix<f64>>,
    /// `m × n` feedback gains.
    pub k: Vec<DMatrix<f64>>,
    pub plan: CovariancePlan,
    pub privacy_bits: f64,
    pub privacy_per_step_bits: Vec<f64>,
}

impl FilterDesign {
    pub fn horizon(&self) -> usize {
        self.c.len()
    }

    /// Sensor rank `r_t` per step.
    pub fn ranks(&self) -> Vec<usize> {
        self.c.iter().map(|c| c.nrows()).collect()
    }

    /// `tr(C_tᵀ (Σ^V_t)⁻¹ C_t)`; equals `C_t²/Σ^V_t` for scalar states.
    pub fn snr(&self) -> Vec<f64> {
        self.c
            .iter()
            .zip(&self.sigma_v)
            .map(|(c, v)| {
                if c.nrows() == 0 {
                    0.0
                } else {
                    let inv = spd_inverse(v).expect("sensor noise is positive definite");
                    (c.transpose() * inv * c).trace()
                }
            })
            .collect()
    }
}

/// Sensor matrices and noise covariances for each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    pub c: Vec<DMatrix<f64>>,
    pub sigma_v: Vec<DMatrix<f64>>,
}

/// `P_{t|t}⁻¹ − P_{t|t−1}⁻¹`, symmetrized.
pub fn information_increment(plan: &CovariancePlan, t: usize) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&(spd_inverse(&plan.p_filt[t])? - spd_inverse(&plan.p_pred[t])?)))
}

/// Factors each information increment as `C_tᵀ (Σ^V_t)⁻¹ C_t` from its
/// eigen-decomposition. Eigenvalues below `1e-9·(1 + ‖ΔΞ_t‖)` are dropped.
pub fn synthesize_sensor(plan: &CovariancePlan, instance: &ValidatedInstance) -> Result<Sensor> {
    let n = instance.state_dim();
    let horizon = instance.horizon();
    let mut c = Vec::with_capacity(horizon);
    let mut sigma_v = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let inv_filt = spd_inverse(&plan.p_filt[t])?;
        let inv_pred = spd_inverse(&plan.p_pred[t])?;
        let delta = symmetrize(&(&inv_filt - &inv_pred));
        let (values, vectors) = sorted_eigen(&delta);
        let keep_above = 1e-9 * (1.0 + spectral_norm(&delta));
        let negative_floor = -1e-9 * (1.0 + spectral_norm(&inv_filt) + spectral_norm(&inv_pred));
        if let Some(&lowest) = values.last() {
            if lowest < negative_floor {
                return Err(Error::NegativeIncrement { t: t + 1, min_eigenvalue: lowest });
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&i| values[i] > keep_above).collect();
        let rank = kept.len();
        let mut ct = DMatrix::zeros(rank, n);
        let mut noise = DVector::zeros(rank);
        for (row, &i) in kept.iter().enumerate() {
            ct.row_mut(row).copy_from(&vectors.column(i).transpose());
            noise[row] = 1.0 / values[i];
        }
        c.push(ct);
        sigma_v.push(DMatrix::from_diagonal(&noise));
    }
    Ok(Sensor { c, sigma_v })
}

/// `L_t = P_{t|t−1} C_tᵀ (C_t P_{t|t−1} C_tᵀ + Σ^V_t)⁻¹`.
pub fn kalman_gains(sensor: &Sensor, plan: &CovariancePlan) -> Result<Vec<DMatrix<f64>>> {
    let mut gains = Vec::with_capacity(sensor.c.len());
    for (t, (c, v)) in sensor.c.iter().zip(&sensor.sigma_v).enumerate() {
        let p = &plan.p_pred[t];
        if c.nrows() == 0 {
            gains.push(DMatrix::zeros(p.nrows(), 0));
            continue;
        }
        let innovation = symmetrize(&(c * p * c.transpose() + v));
        let gain = spd_solve(&innovation, &(c * p)).map_err(|_| Error::SingularInnovationCovariance { t: t + 1 })?.transpose();
        gains.push(gain);
    }
    Ok(gains)
}

/// Joseph-form measurement update `(I − LC)P(I − LC)ᵀ + LΣ^VLᵀ`.
pub fn joseph_update(p_pred: &DMatrix<f64>, c: &DMatrix<f64>, sigma_v: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    if c.nrows() == 0 {
        return p_pred.clone();
    }
    let n = p_pred.nrows();
    let i_lc = DMatrix::identity(n, n) - l * c;
    symmetrize(&(&i_lc * p_pred * i_lc.transpose() + l * sigma_v * l.transpose()))
}

/// Runs the Kalman covariance recursion forward from `P_{1|0}` with the
/// design's sensor and gains; returns the filtered covariances.
pub fn realized_covariances(design: &FilterDesign, instance: &ValidatedInstance) -> Vec<DMatrix<f64>> {
    let model = instance.model();
    let mut pred = model.p10.clone();
    let mut out = Vec::with_capacity(design.horizon());
    for t in 0..design.horizon() {
        let filt = joseph_update(&pred, &design.c[t], &design.sigma_v[t], &design.l[t]);
        if t + 1 < design.horizon() {
            pred = symmetrize(&(&model.a[t] * &filt * model.a[t].transpose() + &model.sigma_w[t]));
        }
        out.push(filt);
    }
    out
}

/// Packages a plan into a design.
pub fn design_from_plan(instance: &ValidatedInstance, k: Vec<DMatrix<f64>>, plan: CovariancePlan) -> Result<FilterDesign> {
    let sensor = synthesize_sensor(&plan, instance)?;
    let l = kalman_gains(&sensor, &plan)?;
    let privacy_per_step_bits = directed_info_from_plan(&plan)?;
    let privacy_bits = privacy_per_step_bits.iter().sum();
    Ok(FilterDesign { c: sensor.c, sigma_v: sensor.sigma_v, l, k, plan, privacy_bits, privacy_per_step_bits })
}

/// Full pipeline with default solver tolerances.
pub fn design(instance: &ValidatedInstance) -> Result<FilterDesign> {
    design_with(instance, SolverTolerances::default())
}

pub fn design_with(instance: &ValidatedInstance, tol: SolverTolerances) -> Result<FilterDesign> {
    let riccati = backward_riccati(instance)?;
    let problem = build_problem(instance, &riccati);
    let plan = solve(&problem, tol)?;
    design_from_plan(instance, riccati.k, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxdet::SolverStats;
    use crate::scenario;
    use alloc::vec;

    fn plan_of(p_pred: Vec<DMatrix<f64>>, p_filt: Vec<DMatrix<f64>>) -> CovariancePlan {
        CovariancePlan { pi: p_filt.clone(), p_filt, p_pred, objective_nats: 0.0, stats: SolverStats::default() }
    }

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn single_step_instance(n: usize) -> ValidatedInstance {
        scenario::random_instance(n, 1, 1, 0)
    }

    #[test]
    fn zero_increment_means_no_measurement() {
        let plan = plan_of(vec![scalar(4.0)], vec![scalar(4.0)]);
        let sensor = synthesize_sensor(&plan, &single_step_instance(1)).unwrap();
        assert_eq!(sensor.c[0].nrows(), 0);
        let gains = kalman_gains(&sensor, &plan).unwrap();
        assert_eq!(gains[0].shape(), (1, 0));
        assert_eq!(joseph_update(&plan.p_pred[0], &sensor.c[0], &sensor.sigma_v[0], &gains[0]), scalar(4.0));
    }

    #[test]
    fn scalar_factorization_and_gain() {
        let plan = plan_of(vec![scalar(4.0)], vec![scalar(1.0)]);
        let sensor = synthesize_sensor(&plan, &single_step_instance(1)).unwrap();
        assert!((sensor.c[0][(0, 0)] - 1.0).abs() < 1e-15);
        assert!((sensor.sigma_v[0][(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        // Measurement update: (1/4 + 3/4)⁻¹ = 1.
        let post = 1.0 / (0.25 + 1.0 / sensor.sigma_v[0][(0, 0)]);
        assert!((post - 1.0).abs() < 1e-14);
        let gains = kalman_gains(&sensor, &plan).unwrap();
        assert!((gains[0][(0, 0)] - 0.75).abs() < 1e-14);
        assert!(((1.0 - gains[0][(0, 0)]) * 4.0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn block_diagonal_reduces_to_scalar_case() {
        let p_pred = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 4.0]));
        let p_filt = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let plan = plan_of(vec![p_pred], vec![p_filt]);
        let sensor = synthesize_sensor(&plan, &single_step_instance(2)).unwrap();
        assert_eq!(sensor.c[0].shape(), (1, 2));
        assert!((sensor.c[0][(0, 0)] - 1.0).abs() < 1e-14);
        assert!(sensor.c[0][(0, 1)].abs() < 1e-14);
        assert!((sensor.sigma_v[0][(0, 0)] - 4.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn perfect_measurement_limit() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let sensor = Sensor { c: vec![DMatrix::identity(2, 2)], sigma_v: vec![DMatrix::identity(2, 2) * 1e-8] };
        let plan = plan_of(vec![p.clone()], vec![p]);
        let gains = kalman_gains(&sensor, &plan).unwrap();
        assert!((&gains[0] - DMatrix::identity(2, 2)).abs().max() < 1e-7);
    }

    #[test]
    fn negative_increment_is_rejected() {
        let plan = plan_of(vec![scalar(1.0)], vec![scalar(4.0)]);
        assert!(matches!(synthesize_sensor(&plan, &single_step_instance(1)), Err(Error::NegativeIncrement { t: 1, .. })));
    }

    #[test]
    fn generous_budget_yields_silent_sensor() {
        let inst = scenario::navigation(1.0, 1.0);
        let d = scenario::budget_at_fraction(&inst, 1.05);
        let design = design(&inst.with_delta(d).unwrap()).unwrap();
        assert!(design.ranks().iter().all(|&r| r == 0));
        assert_eq!(design.privacy_bits, 0.0);
    }
}
