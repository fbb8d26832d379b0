//! Single-stage leakage on finite alphabets under logarithmic loss.
//!
//! Leakage is the drop in Bayes envelope from observing `Y`:
//! `L = inf_Q E[−log Q(X)] − E_Y inf_Q E[−log Q(X) | Y]`. Under log loss
//! each infimum is attained by the true (posterior) pmf, so `L = I(X; Y)`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

fn validate_pmf(p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidDistribution(format!("negative or non-finite mass in {p:?}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!("mass sums to {total}")));
    }
    Ok(())
}

/// `Σ p log₂(1/q)` with `0·log 0 = 0`.
pub fn cross_entropy_bits(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| if *qi > 0.0 { -pi * libm::log2(*qi) } else { f64::INFINITY })
        .sum()
}

pub fn entropy_bits(p: &[f64]) -> f64 {
    cross_entropy_bits(p, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesEnvelope {
    pub bits: f64,
    /// The minimizing assumed distribution.
    pub minimizer: Vec<f64>,
}

/// `inf_Q E_P[log₂ 1/Q(X)]`, attained at `Q = P` (log loss is proper).
pub fn bayes_envelope_logloss(p: &[f64]) -> Result<BayesEnvelope> {
    validate_pmf(p)?;
    Ok(BayesEnvelope { bits: entropy_bits(p), minimizer: p.to_vec() })
}

/// Joint pmf `P_{X,Y}`; rows index `X`, columns index `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    p: DMatrix<f64>,
}

impl DiscreteJoint {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        validate_pmf(p.as_slice())?;
        Ok(Self { p })
    }

    /// Joint of `X` uniform-or-given and `Y` drawn from a row-stochastic channel.
    pub fn from_channel(p_x: &[f64], channel: &DMatrix<f64>) -> Result<Self> {
        Self::new(DMatrix::from_fn(channel.nrows(), channel.ncols(), |i, j| p_x[i] * channel[(i, j)]))
    }

    pub fn pmf(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn p_x(&self) -> Vec<f64> {
        self.p.row_iter().map(|r| r.sum()).collect()
    }

    pub fn p_y(&self) -> Vec<f64> {
        self.p.column_iter().map(|c| c.sum()).collect()
    }

    /// `P_{X|Y=y}`; `None` for a zero-probability column.
    pub fn posterior(&self, y: usize) -> Option<Vec<f64>> {
        let col = self.p.column(y);
        let mass = col.sum();
        (mass > 0.0).then(|| col.iter().map(|v| v / mass).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leakage {
    /// Prior envelope minus expected posterior envelope.
    pub envelope_difference: f64,
    /// `Σ p(x,y) log₂ p(x,y)/(p(x)p(y))`.
    pub mutual_information: f64,
}

pub fn leakage_logloss(joint: &DiscreteJoint) -> Leakage {
    let p_x = joint.p_x();
    let p_y = joint.p_y();
    let prior = entropy_bits(&p_x);
    let mut posterior = 0.0;
    for (y, mass) in p_y.iter().enumerate() {
        if let Some(post) = joint.posterior(y) {
            posterior += mass * entropy_bits(&post);
        }
    }
    let mut mi = 0.0;
    for i in 0..p_x.len() {
        for j in 0..p_y.len() {
            let pij = joint.p[(i, j)];
            if pij > 0.0 {
                mi += pij * libm::log2(pij / (p_x[i] * p_y[j]));
            }
        }
    }
    Leakage { envelope_difference: prior - posterior, mutual_information: mi }
}

/// Deterministic map `T: 𝒳 → 𝒳` given as a lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatisticMap {
    table: Vec<usize>,
}

impl StatisticMap {
    pub fn new(table: Vec<usize>) -> Result<Self> {
        let size = table.len();
        if let Some(bad) = table.iter().find(|&&v| v >= size) {
            return Err(Error::InvalidParameter(format!("statistic maps to {bad} outside alphabet of size {size}")));
        }
        Ok(Self { table })
    }

    pub fn apply(&self, x: usize) -> usize {
        self.table[x]
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataProcessingVerdict {
    /// Residual of `T(X) – X – Y`.
    pub residual_statistic_first: f64,
    /// Residual of `X – T(X) – Y`.
    pub residual_statistic_middle: f64,
    /// Both chains hold within `1e-10`.
    pub sufficiency_holds: bool,
    pub leakage_original: f64,
    pub leakage_statistic: f64,
    /// `L(P_{X,Y}) − L(P_{T(X),Y})`.
    pub gap: f64,
}

impl DataProcessingVerdict {
    pub fn leakage_equal(&self) -> bool {
        self.gap.abs() <= 1e-10
    }
}

/// `max |P(a,b,c)P(b) − P(a,b)P(b,c)|` over a three-way pmf indexed `[a][b][c]`.
fn markov_residual(p: &[Vec<Vec<f64>>]) -> f64 {
    let na = p.len();
    let nb = p[0].len();
    let nc = p[0][0].len();
    let mut worst: f64 = 0.0;
    for b in 0..nb {
        let pb: f64 = (0..na).map(|a| (0..nc).map(|c| p[a][b][c]).sum::<f64>()).sum();
        for a in 0..na {
            let pab: f64 = (0..nc).map(|c| p[a][b][c]).sum();
            for c in 0..nc {
                let pbc: f64 = (0..na).map(|k| p[k][b][c]).sum();
                worst = worst.max((p[a][b][c] * pb - pab * pbc).abs());
            }
        }
    }
    worst
}

pub fn check_data_processing(joint: &DiscreteJoint, statistic: &StatisticMap) -> Result<DataProcessingVerdict> {
    let nx = joint.p.nrows();
    let ny = joint.p.ncols();
    if statistic.len() != nx {
        return Err(Error::DimensionMismatch(format!("statistic defined on {} symbols, joint has {nx}", statistic.len())));
    }
    // P(x, s, y) = P(x, y)·1[s = T(x)].
    let mut x_s_y = alloc::vec![alloc::vec![alloc::vec![0.0; ny]; nx]; nx];
    let mut s_x_y = x_s_y.clone();
    let mut reduced = DMatrix::zeros(nx, ny);
    for x in 0..nx {
        let s = statistic.apply(x);
        for y in 0..ny {
            let v = joint.p[(x, y)];
            x_s_y[x][s][y] = v;
            s_x_y[s][x][y] = v;
            reduced[(s, y)] += v;
        }
    }
    let residual_statistic_first = markov_residual(&s_x_y);
    let residual_statistic_middle = markov_residual(&x_s_y);
    let leakage_original = leakage_logloss(joint).mutual_information;
    let leakage_statistic = leakage_logloss(&DiscreteJoint { p: reduced }).mutual_information;
    Ok(DataProcessingVerdict {
        residual_statistic_first,
        residual_statistic_middle,
        sufficiency_holds: residual_statistic_first <= 1e-10 && residual_statistic_middle <= 1e-10,
        leakage_original,
        leakage_statistic,
        gap: leakage_original - leakage_statistic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn binary_entropy(p: f64) -> f64 {
        -p * libm::log2(p) - (1.0 - p) * libm::log2(1.0 - p)
    }

    #[test]
    fn envelope_cases() {
        assert!((bayes_envelope_logloss(&[0.25; 4]).unwrap().bits - 2.0).abs() < 1e-15);
        assert_eq!(bayes_envelope_logloss(&[0.0, 1.0, 0.0]).unwrap().bits, 0.0);
        let e = bayes_envelope_logloss(&[0.9, 0.1]).unwrap();
        assert!((e.bits - 0.4689955935892812).abs() < 1e-12);
        assert_eq!(e.minimizer, vec![0.9, 0.1]);
        assert!(bayes_envelope_logloss(&[0.5, 0.6]).is_err());
    }

    #[test]
    fn leakage_cases() {
        let identity = DiscreteJoint::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5])).unwrap();
        let l = leakage_logloss(&identity);
        assert!((l.mutual_information - 1.0).abs() < 1e-15);
        assert!((l.envelope_difference - 1.0).abs() < 1e-15);

        let indep = DiscreteJoint::new(DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.1, 0.15, 0.3, 0.15])).unwrap();
        assert!(leakage_logloss(&indep).mutual_information.abs() < 1e-15);

        let bsc = DiscreteJoint::from_channel(&[0.5, 0.5], &DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9])).unwrap();
        let l = leakage_logloss(&bsc);
        assert!((l.mutual_information - (1.0 - binary_entropy(0.1))).abs() < 1e-12);
        assert!((l.mutual_information - 0.5310044064107188).abs() < 1e-12);
    }

    #[test]
    fn zero_columns_are_skipped() {
        let joint = DiscreteJoint::new(DMatrix::from_row_slice(2, 3, &[0.5, 0.0, 0.0, 0.0, 0.0, 0.5])).unwrap();
        assert!(joint.posterior(1).is_none());
        let l = leakage_logloss(&joint);
        assert!((l.envelope_difference - 1.0).abs() < 1e-15);
    }

    #[test]
    fn permutation_is_sufficient() {
        let joint = DiscreteJoint::new(DMatrix::from_row_slice(3, 2, &[0.3, 0.1, 0.05, 0.25, 0.2, 0.1])).unwrap();
        let verdict = check_data_processing(&joint, &StatisticMap::new(vec![2, 0, 1]).unwrap()).unwrap();
        assert!(verdict.sufficiency_holds);
        assert!(verdict.leakage_equal());
    }

    #[test]
    fn invalid_statistic_is_rejected() {
        assert!(StatisticMap::new(vec![0, 3, 1]).is_err());
    }
}
