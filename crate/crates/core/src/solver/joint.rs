use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dists::var_es_pair;
use crate::error::{Error, Result};
use crate::scores::ScoreFamily;
use crate::tilt::{solve_tilt_from, tilt_value, EmpiricalDistribution, TiltSolution};

use super::nelder_mead::minimize;
use super::{Diagnostics, REFResult};

/// Tuning of the joint (VaR, ES) solver.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOptions {
    /// Random restarts in addition to the run from the initial point.
    pub restarts: usize,
    /// Relative half-width of the restart perturbation around the initial point.
    pub spread: f64,
    /// Relative simplex size at which a run stops.
    pub xtol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for JointOptions {
    fn default() -> Self {
        Self { restarts: 5, spread: 0.1, xtol: 1e-9, max_iter: 5_000, seed: 0x5eed }
    }
}

struct Objective2d<'a> {
    family: &'a ScoreFamily,
    dist: &'a EmpiricalDistribution,
    epsilon: f64,
    scores: Vec<f64>,
    hint: Option<f64>,
    evals: usize,
    degenerate_hit: bool,
}

impl Objective2d<'_> {
    fn tilt(&mut self, z1: f64, z2: f64) -> Result<TiltSolution> {
        self.family.eval_pair_batch(z1, z2, self.dist.atoms(), &mut self.scores)?;
        solve_tilt_from(&self.scores, self.dist.weights(), self.epsilon, self.hint)
    }

    fn eval(&mut self, z1: f64, z2: f64) -> Result<f64> {
        self.family.eval_pair_batch(z1, z2, self.dist.atoms(), &mut self.scores)?;
        let sol = tilt_value(&self.scores, self.dist.weights(), self.epsilon, self.hint)?;
        self.evals += 1;
        if sol.degenerate && self.epsilon > 0.0 {
            self.degenerate_hit = true;
        } else if sol.eta_star > 0.0 {
            self.hint = Some(sol.eta_star);
        }
        Ok(sol.value)
    }

    // Points outside the action domain count as +inf.
    fn value(&mut self, z: &[f64]) -> f64 {
        if !(z[1] > 0.0) {
            return f64::INFINITY;
        }
        self.eval(z[0], z[1]).unwrap_or(f64::INFINITY)
    }
}

/// Robust (VaR, ES) pair with default options.
pub fn ref_kd(
    family: &ScoreFamily,
    dist: &EmpiricalDistribution,
    epsilon: f64,
    init: Option<[f64; 2]>,
) -> Result<REFResult> {
    ref_kd_with(family, dist, epsilon, init, &JointOptions::default())
}

/// Robust (VaR, ES) pair: simplex descent on `J(z1, z2)` with random restarts around `init`
/// (by default the classical pair).
pub fn ref_kd_with(
    family: &ScoreFamily,
    dist: &EmpiricalDistribution,
    epsilon: f64,
    init: Option<[f64; 2]>,
    options: &JointOptions,
) -> Result<REFResult> {
    if family.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: family.dim() });
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::BadEpsilon(epsilon));
    }
    let alpha = family.alpha().unwrap_or(f64::NAN);
    let (var0, es0) = var_es_pair(dist.atoms(), dist.weights(), alpha)?;
    let baseline_value = vec![var0, es0];

    let mut obj = Objective2d {
        family,
        dist,
        epsilon,
        scores: Vec::with_capacity(dist.len()),
        hint: None,
        evals: 0,
        degenerate_hit: false,
    };

    if dist.is_degenerate() {
        let c = dist.min();
        let value = if c > 0.0 { obj.tilt(c, c)?.value } else { f64::NAN };
        return Ok(REFResult {
            z_star: vec![c, c],
            eta_star: 0.0,
            value,
            baseline_value,
            diagnostics: Diagnostics {
                converged: true,
                degenerate_hit: epsilon > 0.0,
                ..Diagnostics::default()
            },
        });
    }

    let scale = dist.atoms().iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let start = init.unwrap_or([var0, es0]);
    let start = [start[0], if start[1] > 0.0 { start[1] } else { 1e-3 * scale }];
    let step = |v: f64| if v != 0.0 { 0.05 * v.abs() } else { 0.05 * scale };
    let xtol = options.xtol * start[0].abs().max(start[1].abs());

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut optima: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut iterations = 0;
    let mut converged = true;
    for r in 0..=options.restarts {
        let mut x0 = start.to_vec();
        if r > 0 {
            for v in x0.iter_mut() {
                *v *= 1.0 + rng.random_range(-options.spread..options.spread);
            }
        }
        let steps = [step(x0[0]), step(x0[1])];
        let mut run = minimize(|z| obj.value(z), &x0, &steps, xtol, options.max_iter);
        iterations += run.iterations;
        // A fresh simplex at the optimum guards against premature collapse.
        let polish_steps = [step(run.x[0]) * 1e-2, step(run.x[1]) * 1e-2];
        let polish = minimize(|z| obj.value(z), &run.x, &polish_steps, xtol, options.max_iter);
        iterations += polish.iterations;
        if polish.fx <= run.fx {
            run.x = polish.x;
            run.fx = polish.fx;
        }
        converged &= polish.converged;
        optima.push((run.x, run.fx));
    }

    let (mut best, best_value) = optima
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("at least one run");
    if !best_value.is_finite() {
        return Err(Error::NonFinite("joint objective at every restart".into()));
    }
    // Exact candidates: the classical pair solves the problem without ambiguity, and at
    // (max, max) the score is constant in y so no tilt can raise it.
    let top = dist.max();
    let mut candidates = vec![[top, top]];
    if epsilon == 0.0 {
        candidates.push([var0, es0]);
    }
    let mut best_value = best_value;
    for c in candidates {
        let v = obj.value(&c);
        if v <= best_value + 1e-12 * best_value.abs() {
            best = c.to_vec();
            best_value = best_value.min(v);
        }
    }
    // Where J is flat in the VaR coordinate, move to the left end of the flat piece.
    while let Some(atom) = dist.atoms().iter().copied().filter(|a| *a < best[0]).max_by(f64::total_cmp) {
        if obj.value(&[atom, best[1]]) <= best_value + 1e-13 * best_value.abs() {
            best[0] = atom;
        } else {
            break;
        }
    }
    let norm = best[0].abs().max(best[1].abs()).max(f64::MIN_POSITIVE);
    let restart_spread = optima
        .iter()
        .map(|(x, _)| (x[0] - best[0]).abs().max((x[1] - best[1]).abs()) / norm)
        .fold(0.0, f64::max);

    let at_optimum = obj.tilt(best[0], best[1])?;
    Ok(REFResult {
        z_star: best.clone(),
        eta_star: at_optimum.eta_star,
        value: at_optimum.value,
        baseline_value,
        diagnostics: Diagnostics {
            iterations,
            derivative_evals: obj.evals,
            converged,
            degenerate_hit: obj.degenerate_hit,
            quantile_crossing: best[0] > best[1],
            restart_spread,
        },
    })
}
