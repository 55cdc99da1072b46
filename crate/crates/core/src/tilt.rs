//! Inner worst case over a Kullback-Leibler ball.
//!
//! For a fixed prediction the supremum of `E_Q[S]` over `KL(Q || P) <= eps` is attained by
//! the exponential tilt `dQ/dP ∝ exp(eta * S)` whose divergence
//! `d(eta) = eta K'(eta) - K(eta)` equals `eps`, where `K` is the cumulant generating
//! function of the score under `P`. When `eps >= log(1/pi)`, with `pi` the baseline mass of
//! the maximal score, the worst case is degenerate and concentrates on the maximisers.
//!
//! All exponentials are evaluated as `exp(eta * (s - max s))`.

use crate::error::{Error, Result};
use crate::scores::ScoreFamily;

/// Relative tolerance used to decide which atoms attain the maximal score.
pub const ARGMAX_REL_TOL: f64 = 1e-12;

const WEIGHT_SUM_TOL: f64 = 1e-9;
const MAX_DOUBLINGS: usize = 2000;
const MAX_ROOT_ITERS: usize = 400;

/// Baseline measure: finitely many atoms with probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalDistribution {
    /// Weighted sample. Weights are checked to sum to one (within `1e-9`) and renormalised.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyInput);
        }
        if atoms.len() != weights.len() {
            return Err(Error::LengthMismatch { left: atoms.len(), right: weights.len() });
        }
        if let Some(bad) = atoms.iter().find(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("atom {bad}")));
        }
        let weights = normalise(weights)?;
        Ok(Self { atoms, weights })
    }

    /// Equally weighted sample.
    pub fn uniform(atoms: Vec<f64>) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Smallest atom carrying positive weight.
    pub fn min(&self) -> f64 {
        self.support().fold(f64::INFINITY, f64::min)
    }

    /// Largest atom carrying positive weight.
    pub fn max(&self) -> f64 {
        self.support().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when fewer than two distinct atoms carry positive weight.
    pub fn is_degenerate(&self) -> bool {
        self.min() == self.max()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Same weights, atoms multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { atoms: self.atoms.iter().map(|a| a * c).collect(), weights: self.weights.clone() }
    }

    /// Same weights, atoms shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self { atoms: self.atoms.iter().map(|a| a + c).collect(), weights: self.weights.clone() }
    }

    fn support(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().zip(&self.weights).filter(|(_, w)| **w > 0.0).map(|(a, _)| *a)
    }
}

pub(crate) fn normalise(weights: Vec<f64>) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::BadWeights("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::BadWeights(format!("weights sum to {total}, expected 1")));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Result of the inner maximisation at one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltSolution {
    /// Optimal tilting parameter; zero at `eps = 0`, infinite in spirit when degenerate.
    pub eta_star: f64,
    /// Worst-case probabilities `w_i dQ/dP(y_i)`.
    pub tilted_weights: Vec<f64>,
    /// `KL(Q* || P)`.
    pub kl_achieved: f64,
    /// Worst-case expected score `J = E_Q*[S]`.
    pub value: f64,
    /// Baseline mass of the atoms attaining the maximal score.
    pub pi_hat: f64,
    pub degenerate: bool,
    pub iterations: usize,
}

impl TiltSolution {
    /// Expectation of `values` under the worst-case measure.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.tilted_weights.iter().zip(values).map(|(q, v)| q * v).sum()
    }
}

fn check_inputs(scores: &[f64], weights: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if scores.len() != weights.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: weights.len() });
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {bad}")));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::BadSpec(format!("eta = {eta} must be finite and non-negative")));
    }
    Ok(())
}

/// Tilted moments at one `eta`, shifted by the maximal score.
#[derive(Debug, Clone, Copy)]
struct Moments {
    /// `log E[exp(eta (S - m))]`
    log_z: f64,
    /// `E_Q[S] - m`
    mean_shift: f64,
    /// `Var_Q[S]`
    var: f64,
}

struct Problem<'a> {
    scores: &'a [f64],
    weights: &'a [f64],
    max: f64,
}

impl<'a> Problem<'a> {
    fn new(scores: &'a [f64], weights: &'a [f64]) -> Self {
        let max = scores
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(s, _)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        Self { scores, weights, max }
    }

    fn moments(&self, eta: f64) -> Moments {
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (s, w) in self.scores.iter().zip(self.weights) {
            if *w == 0.0 {
                continue;
            }
            let x = s - self.max;
            let e = w * (eta * x).exp();
            z += e;
            m1 += e * x;
            m2 += e * x * x;
        }
        let mean_shift = m1 / z;
        Moments { log_z: z.ln(), mean_shift, var: (m2 / z - mean_shift * mean_shift).max(0.0) }
    }

    fn kl(&self, eta: f64, m: &Moments) -> f64 {
        (eta * m.mean_shift - m.log_z).max(0.0)
    }

    fn tilted(&self, eta: f64) -> Vec<f64> {
        let mut q: Vec<f64> = self
            .scores
            .iter()
            .zip(self.weights)
            .map(|(s, w)| if *w == 0.0 { 0.0 } else { w * (eta * (s - self.max)).exp() })
            .collect();
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        q
    }

    /// Atoms whose score is within `ARGMAX_REL_TOL` of the maximum.
    fn is_argmax(&self, s: f64) -> bool {
        (self.max - s) <= ARGMAX_REL_TOL * self.max.abs()
    }

    fn pi_hat(&self) -> f64 {
        self.scores
            .iter()
            .zip(self.weights)
            .filter(|(s, w)| **w > 0.0 && self.is_argmax(**s))
            .map(|(_, w)| *w)
            .sum::<f64>()
            .min(1.0)
    }

    fn range(&self) -> f64 {
        let min = self
            .scores
            .iter()
            .zip(self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(s, _)| *s)
            .fold(f64::INFINITY, f64::min);
        self.max - min
    }
}

/// Cumulant generating function `K(eta) = log sum w_i exp(eta s_i)` and its derivative.
pub fn cgf_and_prime(scores: &[f64], weights: &[f64], eta: f64) -> Result<(f64, f64)> {
    check_inputs(scores, weights)?;
    check_eta(eta)?;
    let problem = Problem::new(scores, weights);
    let m = problem.moments(eta);
    Ok((eta * problem.max + m.log_z, problem.max + m.mean_shift))
}

/// Divergence of the tilt at `eta`: `d(eta) = eta K'(eta) - K(eta)`.
pub fn kl_at(scores: &[f64], weights: &[f64], eta: f64) -> Result<f64> {
    check_inputs(scores, weights)?;
    check_eta(eta)?;
    let problem = Problem::new(scores, weights);
    Ok(problem.kl(eta, &problem.moments(eta)))
}

/// Solve the inner problem for a vector of score values.
pub fn solve_tilt(scores: &[f64], weights: &[f64], epsilon: f64) -> Result<TiltSolution> {
    solve_tilt_from(scores, weights, epsilon, None)
}

/// Like [`solve_tilt`], starting the root search from `eta_hint` when one is available.
pub fn solve_tilt_from(
    scores: &[f64],
    weights: &[f64],
    epsilon: f64,
    eta_hint: Option<f64>,
) -> Result<TiltSolution> {
    let (problem, outcome) = solve(scores, weights, epsilon, eta_hint)?;
    Ok(match outcome {
        Outcome::Baseline { value } => TiltSolution {
            eta_star: 0.0,
            tilted_weights: weights.to_vec(),
            kl_achieved: 0.0,
            value,
            pi_hat: problem.pi_hat(),
            degenerate: epsilon > 0.0,
            iterations: 0,
        },
        Outcome::Degenerate { pi_hat } => degenerate(&problem, pi_hat),
        Outcome::Tilted { eta, moments, pi_hat, iterations } => TiltSolution {
            eta_star: eta,
            tilted_weights: problem.tilted(eta),
            kl_achieved: problem.kl(eta, &moments),
            value: problem.max + moments.mean_shift,
            pi_hat,
            degenerate: false,
            iterations,
        },
    })
}

/// Worst-case value only, without materialising the tilted measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltValue {
    pub value: f64,
    pub eta_star: f64,
    pub degenerate: bool,
}

/// Value and tilt parameter of the inner problem; cheaper than [`solve_tilt_from`].
pub fn tilt_value(
    scores: &[f64],
    weights: &[f64],
    epsilon: f64,
    eta_hint: Option<f64>,
) -> Result<TiltValue> {
    let (problem, outcome) = solve(scores, weights, epsilon, eta_hint)?;
    Ok(match outcome {
        Outcome::Baseline { value } => {
            TiltValue { value, eta_star: 0.0, degenerate: epsilon > 0.0 }
        }
        Outcome::Degenerate { .. } => {
            TiltValue { value: problem.max, eta_star: f64::INFINITY, degenerate: true }
        }
        Outcome::Tilted { eta, moments, .. } => {
            TiltValue { value: problem.max + moments.mean_shift, eta_star: eta, degenerate: false }
        }
    })
}

enum Outcome {
    /// `eps = 0` or constant scores: the baseline itself.
    Baseline { value: f64 },
    Degenerate { pi_hat: f64 },
    Tilted { eta: f64, moments: Moments, pi_hat: f64, iterations: usize },
}

fn solve<'a>(
    scores: &'a [f64],
    weights: &'a [f64],
    epsilon: f64,
    eta_hint: Option<f64>,
) -> Result<(Problem<'a>, Outcome)> {
    check_inputs(scores, weights)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::BadEpsilon(epsilon));
    }
    let problem = Problem::new(scores, weights);
    if !problem.max.is_finite() {
        return Err(Error::BadWeights("no atom carries positive weight".into()));
    }
    let range = problem.range();
    if epsilon == 0.0 || range == 0.0 {
        let value = scores.iter().zip(weights).map(|(s, w)| s * w).sum();
        return Ok((problem, Outcome::Baseline { value }));
    }
    let pi_hat = problem.pi_hat();
    if epsilon >= (1.0 / pi_hat).ln() {
        return Ok((problem, Outcome::Degenerate { pi_hat }));
    }

    let target = epsilon;
    let tol = 1e-13 * target.max(1.0);

    // Safeguarded Newton on d(eta) - eps with d'(eta) = eta Var_Q[S]. The bracket starts
    // as (0, inf); while it is unbounded above, failed steps double eta.
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut eta = match eta_hint {
        Some(h) if h.is_finite() && h > 0.0 => h,
        _ => 1.0 / range,
    };
    let mut m = problem.moments(eta);
    let mut iterations = 1;
    let mut doublings = 0;
    for _ in 0..MAX_ROOT_ITERS + MAX_DOUBLINGS {
        let f = problem.kl(eta, &m) - target;
        if f.abs() <= tol {
            break;
        }
        if f > 0.0 {
            hi = eta;
        } else {
            lo = eta;
        }
        if hi.is_finite() && hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let slope = eta * m.var;
        let newton = eta - f / slope;
        eta = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                // Only reachable when eps sits within rounding of log(1/pi).
                return Ok((problem, Outcome::Degenerate { pi_hat }));
            }
            2.0 * eta
        };
        if !eta.is_finite() {
            return Ok((problem, Outcome::Degenerate { pi_hat }));
        }
        m = problem.moments(eta);
        iterations += 1;
    }

    if !(problem.max + m.mean_shift).is_finite() {
        return Err(Error::NonFinite(format!("tilted expectation at eta = {eta}")));
    }
    Ok((problem, Outcome::Tilted { eta, moments: m, pi_hat, iterations }))
}

fn degenerate(problem: &Problem<'_>, pi_hat: f64) -> TiltSolution {
    let tilted_weights = problem
        .scores
        .iter()
        .zip(problem.weights)
        .map(|(s, w)| if *w > 0.0 && problem.is_argmax(*s) { w / pi_hat } else { 0.0 })
        .collect();
    TiltSolution {
        eta_star: f64::INFINITY,
        tilted_weights,
        kl_achieved: (1.0 / pi_hat).ln(),
        value: problem.max,
        pi_hat,
        degenerate: true,
        iterations: 0,
    }
}

/// Score values `S(z, y_i)` at every atom.
pub fn score_values(family: &ScoreFamily, dist: &EmpiricalDistribution, z: &[f64]) -> Result<Vec<f64>> {
    match z.len() {
        1 if family.dim() == 1 => {
            dist.atoms().iter().map(|y| family.eval_scalar(z[0], *y)).collect()
        }
        2 if family.dim() == 2 => {
            dist.atoms().iter().map(|y| family.eval_pair(z[0], z[1], *y)).collect()
        }
        got => Err(Error::Dimension { expected: family.dim(), got }),
    }
}

/// Worst-case expected score `J(z)` and the measure attaining it.
pub fn worst_case_expectation(
    family: &ScoreFamily,
    dist: &EmpiricalDistribution,
    z: &[f64],
    epsilon: f64,
) -> Result<TiltSolution> {
    let scores = score_values(family, dist, z)?;
    solve_tilt(&scores, dist.weights(), epsilon)
}
