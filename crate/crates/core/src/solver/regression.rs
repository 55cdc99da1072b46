use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scores::ScoreFamily;
use crate::tilt::solve_tilt;

use super::nelder_mead::minimize;

const MAX_ITER: usize = 10_000;
const GRAD_TOL: f64 = 1e-8;
const ARMIJO: f64 = 1e-4;

/// Robust regression coefficients and in-sample fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub beta: Vec<f64>,
    pub epsilon: f64,
    /// Mean squared residual under the equally weighted sample.
    pub mse: f64,
    pub eta_star: f64,
    /// Worst-case expected score at `beta`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate_hit: bool,
}

fn check_shapes(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    let (n, m) = x.shape();
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput);
    }
    if n != y.len() {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if n <= m {
        return Err(Error::ShapeMismatch(format!("need more rows than columns, got {n}x{m}")));
    }
    Ok(())
}

/// Ordinary least squares.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    check_shapes(x, y)?;
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(min_sv > 1e-12 * max_sv) {
        return Err(Error::RankDeficient);
    }
    let beta = svd
        .solve(&DVector::from_column_slice(y), 0.0)
        .map_err(|e| Error::NonFinite(e.to_string()))?;
    Ok(beta.iter().copied().collect())
}

/// Worst-case expected score of the linear predictor `x beta` and its gradient in `beta`.
pub fn regression_objective(
    family: &ScoreFamily,
    x: &DMatrix<f64>,
    y: &[f64],
    beta: &[f64],
    epsilon: f64,
) -> Result<(f64, Vec<f64>)> {
    let eval = evaluate(family, x, y, beta, epsilon)?;
    Ok((eval.value, eval.grad))
}

struct Evaluation {
    value: f64,
    grad: Vec<f64>,
    magnitude: f64,
    eta: f64,
    degenerate: bool,
}

fn evaluate(
    family: &ScoreFamily,
    x: &DMatrix<f64>,
    y: &[f64],
    beta: &[f64],
    epsilon: f64,
) -> Result<Evaluation> {
    check_shapes(x, y)?;
    if family.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: family.dim() });
    }
    if beta.len() != x.ncols() {
        return Err(Error::LengthMismatch { left: beta.len(), right: x.ncols() });
    }
    let n = y.len();
    let pred = x * DVector::from_column_slice(beta);
    let mut scores = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    for (p, yi) in pred.iter().zip(y) {
        scores.push(family.eval_scalar(*p, *yi)?);
        slopes.push(family.grad_scalar(*p, *yi)?);
    }
    let tilt = solve_tilt(&scores, &vec![1.0 / n as f64; n], epsilon)?;
    let mut grad = vec![0.0; beta.len()];
    let mut magnitude = 0.0;
    for (i, (q, g)) in tilt.tilted_weights.iter().zip(&slopes).enumerate() {
        let row = x.row(i);
        for (j, gj) in grad.iter_mut().enumerate() {
            *gj += q * g * row[j];
        }
        magnitude += q * g.abs() * row.amax();
    }
    Ok(Evaluation {
        value: tilt.value,
        grad,
        magnitude,
        eta: tilt.eta_star,
        degenerate: tilt.degenerate,
    })
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Robust regression: gradient descent with Barzilai-Borwein steps and Armijo backtracking,
/// started from least squares. When descent stalls (typically on the non-smooth minimax
/// objective of the degenerate regime) a simplex search polishes the iterate.
pub fn robust_regression(
    family: &ScoreFamily,
    x: &DMatrix<f64>,
    y: &[f64],
    epsilon: f64,
) -> Result<RegressionFit> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::BadEpsilon(epsilon));
    }
    let mut beta = ols(x, y)?;
    let mut cur = evaluate(family, x, y, &beta, epsilon)?;
    let mut degenerate_hit = cur.degenerate && epsilon > 0.0;
    let mean_sq_row =
        x.row_iter().map(|r| r.norm_squared()).sum::<f64>() / x.nrows() as f64;
    let mut step = 1.0 / mean_sq_row.max(f64::MIN_POSITIVE);

    let mut iterations = 0;
    let mut converged = false;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    while iterations < MAX_ITER {
        let gnorm = sup_norm(&cur.grad);
        if gnorm <= GRAD_TOL * cur.magnitude.max(f64::MIN_POSITIVE) || gnorm == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        if let Some((b_prev, g_prev)) = &prev {
            let s: Vec<f64> = beta.iter().zip(b_prev).map(|(a, b)| a - b).collect();
            let d: Vec<f64> = cur.grad.iter().zip(g_prev).map(|(a, b)| a - b).collect();
            let sd: f64 = s.iter().zip(&d).map(|(a, b)| a * b).sum();
            let ss: f64 = s.iter().map(|a| a * a).sum();
            if sd > 0.0 && ss > 0.0 {
                step = ss / sd;
            }
        }
        let g2: f64 = cur.grad.iter().map(|g| g * g).sum();
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = beta.iter().zip(&cur.grad).map(|(b, g)| b - step * g).collect();
            // Predictions outside the action domain are rejected like a failed decrease.
            if let Ok(next) = evaluate(family, x, y, &trial, epsilon) {
                if next.value <= cur.value - ARMIJO * step * g2 {
                    accepted = Some((trial, next));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, next)) = accepted else { break };
        degenerate_hit |= next.degenerate && epsilon > 0.0;
        prev = Some((std::mem::replace(&mut beta, trial), std::mem::replace(&mut cur.grad, next.grad.clone())));
        cur = next;
    }

    if !converged {
        let scale = sup_norm(&beta).max(1e-3);
        let steps: Vec<f64> = beta.iter().map(|b| 0.05 * (b.abs() + 0.1 * scale)).collect();
        let objective = |b: &[f64]| evaluate(family, x, y, b, epsilon).map_or(f64::INFINITY, |e| e.value);
        let polished = minimize(objective, &beta, &steps, 1e-12 * scale, 20_000);
        iterations += polished.iterations;
        if polished.fx < cur.value {
            beta = polished.x;
            cur = evaluate(family, x, y, &beta, epsilon)?;
            degenerate_hit |= cur.degenerate && epsilon > 0.0;
        }
    }

    let pred = x * DVector::from_column_slice(&beta);
    let mse = pred.iter().zip(y).map(|(p, yi)| (yi - p).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(RegressionFit {
        beta,
        epsilon,
        mse,
        eta_star: cur.eta,
        value: cur.value,
        iterations,
        converged,
        degenerate_hit,
    })
}
