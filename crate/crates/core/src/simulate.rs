//! Closed-loop Monte Carlo simulation of plant, privacy filter, cloud-side
//! Kalman filter and controller.
//!
//! Randomness is counter-based: trial `i` of base seed `s` draws from a
//! ChaCha8 generator keyed by `ChaCha8Rng::seed_from_u64(s)` on stream `i`,
//! so trials are reproducible in isolation and independent of run order.
//! A uniform variate is `((x >> 11) + 1)·2⁻⁵³ ∈ (0, 1]` for the next 64-bit
//! output `x`. Normals come in Box–Muller pairs from two consecutive uniforms
//! `(u₁, u₂)`: `√(−2 ln u₁)·cos(2πu₂)` first, then `√(−2 ln u₁)·sin(2πu₂)`.
//! Per trial the draw order is: `n` normals for `X_1`, then for each step
//! `r_t` normals for `V_t` followed by `n` normals for `W_t`; correlated
//! vectors are the lower Cholesky factor applied to standard normals.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use crate::linalg::{cholesky_lower, spd_inverse};
use crate::maxdet::build_problem;
use crate::model::ValidatedInstance;
use crate::riccati::backward_riccati;
use crate::synthesis::FilterDesign;
use crate::Result;

/// Standard normal variates from one ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    pub fn next_vector(&mut self, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| self.next_normal())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    /// `X_1, …, X_{T+1}`.
    pub x: Vec<DVector<f64>>,
    /// `Y_t`, length `r_t`.
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    /// `X̂_t = E(X_t | Y^t)`.
    pub xhat: Vec<DVector<f64>>,
    /// Process noise draws `W_t`.
    pub w: Vec<DVector<f64>>,
    /// Sensor noise draws `V_t`.
    pub v: Vec<DVector<f64>>,
    pub seed: u64,
    pub trial: u64,
    /// `Σ_t ‖X_{t+1}‖²_{Q_t} + ‖U_t‖²_{R_t}`.
    pub realized_cost: f64,
}

/// Per-design noise factors, computed once per Monte Carlo run.
struct NoiseFactors {
    p10: DMatrix<f64>,
    w: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
}

impl NoiseFactors {
    fn new(design: &FilterDesign, instance: &ValidatedInstance) -> Result<Self> {
        let model = instance.model();
        Ok(Self {
            p10: cholesky_lower(&model.p10)?,
            w: model.sigma_w.iter().map(cholesky_lower).collect::<Result<_>>()?,
            v: design.sigma_v.iter().map(cholesky_lower).collect::<Result<_>>()?,
        })
    }
}

fn run_trial(
    design: &FilterDesign,
    instance: &ValidatedInstance,
    factors: &NoiseFactors,
    seed: u64,
    trial: u64,
) -> SimulationTrace {
    let model = instance.model();
    let cost = instance.cost();
    let horizon = instance.horizon();
    let n = instance.state_dim();
    let mut rng = GaussianStream::new(seed, trial);

    let mut x = Vec::with_capacity(horizon + 1);
    let mut y = Vec::with_capacity(horizon);
    let mut u = Vec::with_capacity(horizon);
    let mut xhat: Vec<DVector<f64>> = Vec::with_capacity(horizon);
    let mut w = Vec::with_capacity(horizon);
    let mut v = Vec::with_capacity(horizon);
    let mut realized_cost = 0.0;

    x.push(&model.m1 + &factors.p10 * rng.next_vector(n));
    for t in 0..horizon {
        let r = design.c[t].nrows();
        let vt = &factors.v[t] * rng.next_vector(r);
        let wt = &factors.w[t] * rng.next_vector(n);
        let yt = &design.c[t] * &x[t] + &vt;
        let pred = if t == 0 { model.m1.clone() } else { &model.a[t - 1] * &xhat[t - 1] + &model.b[t - 1] * &u[t - 1] };
        let est = if r == 0 {
            pred
        } else {
            let l = &design.l[t];
            (DMatrix::identity(n, n) - l * &design.c[t]) * pred + l * &yt
        };
        let ut = &design.k[t] * &est;
        let next = &model.a[t] * &x[t] + &model.b[t] * &ut + &wt;
        realized_cost += (next.transpose() * &cost.q[t] * &next)[(0, 0)] + (ut.transpose() * &cost.r[t] * &ut)[(0, 0)];
        x.push(next);
        y.push(yt);
        u.push(ut);
        xhat.push(est);
        w.push(wt);
        v.push(vt);
    }
    SimulationTrace { x, y, u, xhat, w, v, seed, trial, realized_cost }
}

/// Trial `trial` of base seed `seed`.
pub fn simulate_trial(design: &FilterDesign, instance: &ValidatedInstance, seed: u64, trial: u64) -> Result<SimulationTrace> {
    let factors = NoiseFactors::new(design, instance)?;
    Ok(run_trial(design, instance, &factors, seed, trial))
}

/// One closed-loop run (trial 0 of `seed`).
pub fn simulate_once(design: &FilterDesign, instance: &ValidatedInstance, seed: u64) -> Result<SimulationTrace> {
    simulate_trial(design, instance, seed, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub seed: u64,
    pub mean_cost: f64,
    /// Sample standard deviation over `√trials`.
    pub cost_std_error: f64,
    /// `Σ tr(Θ_t P_{t|t}) + c2 + m1ᵀΦ_1m1`.
    pub predicted_cost: f64,
    /// `|mean_cost − predicted_cost| ≤ 3·cost_std_error`.
    pub cost_consistent: bool,
    /// Empirical `E[(X_t − X̂_t)(X_t − X̂_t)ᵀ]`.
    pub error_covariance: Vec<DMatrix<f64>>,
    /// Trace of `error_covariance`.
    pub mean_squared_error: Vec<f64>,
    /// `tr(C_tᵀ(Σ^V_t)⁻¹C_t)`.
    pub design_snr: Vec<f64>,
    /// `tr((Σ^V_t)⁻¹ C_t Cov(X_t) C_tᵀ)` with the sample covariance of `X_t`.
    pub empirical_snr: Vec<f64>,
}

pub fn monte_carlo(design: &FilterDesign, instance: &ValidatedInstance, trials: usize, seed: u64) -> Result<MonteCarloSummary> {
    assert!(trials >= 2, "Monte Carlo needs at least two trials");
    let horizon = instance.horizon();
    let n = instance.state_dim();
    let factors = NoiseFactors::new(design, instance)?;

    let mut costs = Vec::with_capacity(trials);
    let mut err_sum = alloc::vec![DMatrix::<f64>::zeros(n, n); horizon];
    let mut x_sum = alloc::vec![DVector::<f64>::zeros(n); horizon];
    let mut x_outer = alloc::vec![DMatrix::<f64>::zeros(n, n); horizon];
    for trial in 0..trials as u64 {
        let trace = run_trial(design, instance, &factors, seed, trial);
        costs.push(trace.realized_cost);
        for t in 0..horizon {
            let e = &trace.x[t] - &trace.xhat[t];
            err_sum[t] += &e * e.transpose();
            x_sum[t] += &trace.x[t];
            x_outer[t] += &trace.x[t] * trace.x[t].transpose();
        }
    }

    let count = trials as f64;
    let mean_cost = costs.iter().sum::<f64>() / count;
    let variance = costs.iter().map(|c| (c - mean_cost) * (c - mean_cost)).sum::<f64>() / (count - 1.0);
    let cost_std_error = libm::sqrt(variance / count);

    let riccati = backward_riccati(instance)?;
    let problem = build_problem(instance, &riccati);
    let predicted_cost = problem.predicted_cost(&design.plan.p_filt);

    let error_covariance: Vec<DMatrix<f64>> = err_sum.into_iter().map(|m| m / count).collect();
    let mean_squared_error = error_covariance.iter().map(|m| m.trace()).collect();
    let design_snr = design.snr();
    let mut empirical_snr = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mean = &x_sum[t] / count;
        let cov = (&x_outer[t] - &mean * mean.transpose() * count) / (count - 1.0);
        let c = &design.c[t];
        empirical_snr.push(if c.nrows() == 0 {
            0.0
        } else {
            (spd_inverse(&design.sigma_v[t])? * c * cov * c.transpose()).trace()
        });
    }

    Ok(MonteCarloSummary {
        trials,
        seed,
        mean_cost,
        cost_std_error,
        predicted_cost,
        cost_consistent: (mean_cost - predicted_cost).abs() <= 3.0 * cost_std_error,
        error_covariance,
        mean_squared_error,
        design_snr,
        empirical_snr,
    })
}
