//! JSON run configuration.
//!
//! Matrices are row-major nested arrays; a bare number stands for a 1×1
//! matrix. Every time-varying field takes either one matrix, broadcast over
//! the horizon, or an array of exactly `horizon` matrices.

use std::path::Path;

use cloudpriv_core::model::{validate, BudgetMode, CostSpec, SystemModel, ValidatedInstance};
use cloudpriv_core::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixValue {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSequence {
    One(MatrixValue),
    PerStep(Vec<MatrixValue>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorValue {
    Scalar(f64),
    Entries(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BudgetModeName {
    #[default]
    Total,
    NetOfConstants,
}

impl From<BudgetModeName> for BudgetMode {
    fn from(m: BudgetModeName) -> Self {
        match m {
            BudgetModeName::Total => BudgetMode::Total,
            BudgetModeName::NetOfConstants => BudgetMode::NetOfConstants,
        }
    }
}

impl From<BudgetMode> for BudgetModeName {
    fn from(m: BudgetMode) -> Self {
        match m {
            BudgetMode::Total => BudgetModeName::Total,
            BudgetMode::NetOfConstants => BudgetModeName::NetOfConstants,
        }
    }
}

/// The configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub horizon: usize,
    #[serde(rename = "A")]
    pub a: MatrixSequence,
    #[serde(rename = "B")]
    pub b: MatrixSequence,
    #[serde(rename = "SigmaW")]
    pub sigma_w: MatrixSequence,
    pub m1: VectorValue,
    /// Prior covariance of `X_1`; required, there is no default.
    #[serde(rename = "P10")]
    pub p10: MatrixValue,
    #[serde(rename = "Q")]
    pub q: MatrixSequence,
    #[serde(rename = "R")]
    pub r: MatrixSequence,
    pub delta: f64,
    #[serde(default)]
    pub include_mean_cost: bool,
    #[serde(default)]
    pub budget_mode: BudgetModeName,
    #[serde(default)]
    pub delta_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Duality-gap tolerance of the solver, nats.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

/// Fully expanded instance as embedded in result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InstanceSpec {
    pub horizon: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "SigmaW")]
    pub sigma_w: Vec<Vec<Vec<f64>>>,
    pub m1: Vec<f64>,
    #[serde(rename = "P10")]
    pub p10: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<Vec<f64>>>,
    pub delta: f64,
    pub include_mean_cost: bool,
    pub budget_mode: BudgetModeName,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::InvalidConfig(msg.into())
}

/// Builds a matrix from rows; `cols` fixes the width of an empty matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>], cols: usize, name: &str) -> CliResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, cols));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(invalid(format!("{name} has rows of unequal length")));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn value_matrix(v: &MatrixValue, name: &str) -> CliResult<DMatrix<f64>> {
    match v {
        MatrixValue::Scalar(x) => Ok(DMatrix::from_element(1, 1, *x)),
        MatrixValue::Rows(rows) if rows.is_empty() => Err(invalid(format!("{name} is empty"))),
        MatrixValue::Rows(rows) => matrix_from_rows(rows, 0, name),
    }
}

fn sequence(v: &MatrixSequence, horizon: usize, name: &str) -> CliResult<Vec<DMatrix<f64>>> {
    match v {
        MatrixSequence::One(m) => Ok(vec![value_matrix(m, name)?; horizon]),
        MatrixSequence::PerStep(items) => {
            if items.len() != horizon {
                return Err(invalid(format!("{name} has {} entries, horizon is {horizon}", items.len())));
            }
            items.iter().enumerate().map(|(t, m)| value_matrix(m, &format!("{name}[{}]", t + 1))).collect()
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!("unsupported schemaVersion {}", config.schema_version)));
        }
        Ok(config)
    }

    pub fn instance(&self) -> CliResult<ValidatedInstance> {
        let horizon = self.horizon;
        if horizon == 0 {
            return Err(invalid("horizon must be positive"));
        }
        let m1 = match &self.m1 {
            VectorValue::Scalar(x) => DVector::from_element(1, *x),
            VectorValue::Entries(v) => DVector::from_column_slice(v),
        };
        let model = SystemModel {
            horizon,
            a: sequence(&self.a, horizon, "A")?,
            b: sequence(&self.b, horizon, "B")?,
            sigma_w: sequence(&self.sigma_w, horizon, "SigmaW")?,
            m1,
            p10: value_matrix(&self.p10, "P10")?,
        };
        let cost = CostSpec {
            q: sequence(&self.q, horizon, "Q")?,
            r: sequence(&self.r, horizon, "R")?,
            delta: self.delta,
            include_mean_cost: self.include_mean_cost,
            budget_mode: self.budget_mode.into(),
        };
        Ok(validate(model, cost)?)
    }
}

impl InstanceSpec {
    pub fn from_instance(inst: &ValidatedInstance) -> Self {
        let model = inst.model();
        let cost = inst.cost();
        let seq = |v: &[DMatrix<f64>]| v.iter().map(matrix_rows).collect();
        Self {
            horizon: model.horizon,
            a: seq(&model.a),
            b: seq(&model.b),
            sigma_w: seq(&model.sigma_w),
            m1: model.m1.iter().copied().collect(),
            p10: matrix_rows(&model.p10),
            q: seq(&cost.q),
            r: seq(&cost.r),
            delta: cost.delta,
            include_mean_cost: cost.include_mean_cost,
            budget_mode: cost.budget_mode.into(),
        }
    }

    pub fn instance(&self) -> CliResult<ValidatedInstance> {
        let seq = |v: &[Vec<Vec<f64>>], name: &str| -> CliResult<Vec<DMatrix<f64>>> {
            v.iter().enumerate().map(|(t, m)| matrix_from_rows(m, 0, &format!("{name}[{}]", t + 1))).collect()
        };
        let model = SystemModel {
            horizon: self.horizon,
            a: seq(&self.a, "A")?,
            b: seq(&self.b, "B")?,
            sigma_w: seq(&self.sigma_w, "SigmaW")?,
            m1: DVector::from_column_slice(&self.m1),
            p10: matrix_from_rows(&self.p10, 0, "P10")?,
        };
        let cost = CostSpec {
            q: seq(&self.q, "Q")?,
            r: seq(&self.r, "R")?,
            delta: self.delta,
            include_mean_cost: self.include_mean_cost,
            budget_mode: self.budget_mode.into(),
        };
        Ok(validate(model, cost)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAVIGATION: &str = r#"{
        "schemaVersion": 1, "horizon": 40,
        "A": 1, "B": 1, "SigmaW": 0.3, "m1": 15, "P10": 1,
        "Q": 1, "R": 10, "delta": 100
    }"#;

    #[test]
    fn scalar_shorthand_broadcasts() {
        let inst = RunConfig::parse(NAVIGATION).unwrap().instance().unwrap();
        assert_eq!(inst.horizon(), 40);
        assert_eq!(inst.model().sigma_w[39][(0, 0)], 0.3);
        assert_eq!(inst.cost().budget_mode, BudgetMode::Total);
    }

    #[test]
    fn matrices_and_sequences() {
        let text = r#"{
            "schemaVersion": 1, "horizon": 2,
            "A": [[[1, 0.1], [0, 1]], [[1, 0.2], [0, 1]]], "B": [[0], [1]],
            "SigmaW": [[0.1, 0], [0, 0.1]], "m1": [1, 0], "P10": [[1, 0], [0, 1]],
            "Q": [[1, 0], [0, 0]], "R": 1, "delta": 5, "budgetMode": "netOfConstants"
        }"#;
        let inst = RunConfig::parse(text).unwrap().instance().unwrap();
        assert_eq!(inst.model().a[1][(0, 1)], 0.2);
        assert_eq!(inst.model().b[0].shape(), (2, 1));
        assert_eq!(inst.cost().budget_mode, BudgetMode::NetOfConstants);
        let spec = InstanceSpec::from_instance(&inst);
        assert_eq!(spec.instance().unwrap(), inst);
    }

    #[test]
    fn rejects_bad_documents() {
        let unknown = NAVIGATION.replace("\"delta\": 100", "\"delta\": 100, \"colour\": 1");
        assert!(matches!(RunConfig::parse(&unknown), Err(CliError::InvalidConfig(_))));
        let version = NAVIGATION.replace("\"schemaVersion\": 1", "\"schemaVersion\": 2");
        assert!(RunConfig::parse(&version).is_err());
        let no_prior = NAVIGATION.replace("\"P10\": 1,", "");
        assert!(RunConfig::parse(&no_prior).is_err());
        let text = NAVIGATION.replace("\"delta\": 100", "\"delta\": \"abc\"");
        assert!(RunConfig::parse(&text).is_err());
        let short = NAVIGATION.replace("\"A\": 1", "\"A\": [1, 1]");
        assert!(RunConfig::parse(&short).unwrap().instance().is_err());
        let indefinite = NAVIGATION.replace("\"SigmaW\": 0.3", "\"SigmaW\": 0");
        assert!(matches!(RunConfig::parse(&indefinite).unwrap().instance(), Err(CliError::InvalidConfig(_))));
    }
}
