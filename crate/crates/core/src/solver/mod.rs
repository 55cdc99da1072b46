//! Outer minimisation of the worst-case expected score.

mod joint;
pub mod nelder_mead;
mod one_dim;
mod regression;

pub use joint::{ref_kd, ref_kd_with, JointOptions};
pub use one_dim::{j_derivative, ref_1d, worst_case_value};
pub use regression::{ols, regression_objective, robust_regression, RegressionFit};

/// Bookkeeping reported alongside every solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    pub derivative_evals: usize,
    pub converged: bool,
    /// Some evaluation fell into the regime where the worst case sits on the maximal score.
    pub degenerate_hit: bool,
    /// Joint solver only: the VaR component exceeds the ES component.
    pub quantile_crossing: bool,
    /// Joint solver only: largest relative distance between restart optima.
    pub restart_spread: f64,
}

/// Robust functional and the worst-case quantities at the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct REFResult {
    pub z_star: Vec<f64>,
    pub eta_star: f64,
    /// Worst-case expected score at `z_star`.
    pub value: f64,
    /// Classical (`eps = 0`) functional.
    pub baseline_value: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl REFResult {
    /// First component of the optimum.
    pub fn z(&self) -> f64 {
        self.z_star[0]
    }
}
