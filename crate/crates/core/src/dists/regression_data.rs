use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use super::{rng, CopulaSpec};
use crate::error::{Error, Result};

/// Outliers added per contamination step.
pub const OUTLIERS_PER_STEP: usize = 4;

/// Synthetic regression designs: a Gumbel(5) copula sample with uniform marginals (A),
/// plus 4 (B) or 8 (C) independent uniform outliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RegressionModel {
    A,
    B,
    C,
}

impl RegressionModel {
    pub fn outliers(&self) -> usize {
        match self {
            RegressionModel::A => 0,
            RegressionModel::B => OUTLIERS_PER_STEP,
            RegressionModel::C => 2 * OUTLIERS_PER_STEP,
        }
    }
}

impl fmt::Display for RegressionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegressionModel::A => "A",
            RegressionModel::B => "B",
            RegressionModel::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for RegressionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(RegressionModel::A),
            "B" => Ok(RegressionModel::B),
            "C" => Ok(RegressionModel::C),
            other => Err(Error::BadSpec(format!("unknown regression model '{other}'"))),
        }
    }
}

/// Covariates and responses of `model` with `n` clean points.
///
/// Models share the clean sample for a given seed, and C extends B, so the three designs
/// are nested as in a contamination study.
pub fn regression_model(model: RegressionModel, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let clean = CopulaSpec::Gumbel { theta: 5.0, dim: 2 }.sample_uniforms(n, seed)?;
    let mut x: Vec<f64> = clean.column(0).iter().copied().collect();
    let mut y: Vec<f64> = clean.column(1).iter().copied().collect();
    let mut outlier_rng = rng(seed);
    outlier_rng.set_stream(1);
    for _ in 0..model.outliers() {
        x.push(outlier_rng.random::<f64>());
        y.push(outlier_rng.random::<f64>());
    }
    Ok((x, y))
}

/// Design matrix with a leading column of ones.
pub fn with_intercept(columns: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = columns.shape();
    DMatrix::from_fn(n, m + 1, |i, j| if j == 0 { 1.0 } else { columns[(i, j - 1)] })
}
