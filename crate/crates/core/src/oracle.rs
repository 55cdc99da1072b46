//! Brute-force reference computations, deliberately independent of the tilt solution.
//!
//! The inner problem is solved by projected gradient ascent over the probability simplex
//! intersected with the divergence ball; the outer problem by exhaustive grid search.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scores::ScoreFamily;
use crate::tilt::{score_values, solve_tilt, EmpiricalDistribution};

pub const MAX_ATOMS: usize = 8;
pub const MIN_GRID: usize = 100;
const RESTARTS: usize = 50;
const ASCENT_STEPS: usize = 200;

/// Outcome of an oracle computation.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub value: f64,
    /// Maximising measure, for the inner problem.
    pub argmax_weights: Option<Vec<f64>>,
    /// Minimising prediction, for the outer problem.
    pub argmin_z: Option<f64>,
    /// Largest spacing of the grid; zero for the inner problem.
    pub grid_resolution: f64,
    pub runtime_ms: u128,
}

fn kl(q: &[f64], w: &[f64]) -> f64 {
    q.iter()
        .zip(w)
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, wi)| qi * (qi / wi).ln())
        .sum()
}

/// Euclidean projection onto the probability simplex (sort-based).
fn project_simplex(r: &[f64]) -> Vec<f64> {
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    r.iter().map(|v| (v - theta).max(0.0)).collect()
}

// Root of q + lam * ln q = c, in the variable t = ln q. Newton from the right of the root
// converges monotonically because the function is convex and increasing in t. Both c/lam
// and max(ln c, 0) lie right of the root; start from the closer one.
fn solve_component(c: f64, lam: f64) -> f64 {
    let mut t = if c > 0.0 { (c / lam).min(c.ln().max(0.0)) } else { c / lam };
    for _ in 0..200 {
        let e = t.exp();
        let step = (e + lam * t - c) / (e + lam);
        t -= step;
        if step.abs() <= 1e-15 * t.abs().max(1.0) {
            break;
        }
    }
    t.exp()
}

// For fixed lam, the components summing to one, searching the multiplier mu outwards from
// `mu_hint`. Returns the components and the multiplier.
fn components(r: &[f64], w: &[f64], lam: f64, mu_hint: f64) -> (Vec<f64>, f64) {
    let at = |mu: f64| -> Vec<f64> {
        r.iter()
            .zip(w)
            .map(|(ri, wi)| solve_component(ri - mu - lam + lam * wi.ln(), lam))
            .collect()
    };
    let total = |q: &[f64]| q.iter().sum::<f64>() - 1.0;
    // Sum of components decreases in mu.
    let mut width = 1.0;
    let (mut lo, mut hi) = (mu_hint - width, mu_hint + width);
    while total(&at(lo)) < 0.0 {
        width *= 2.0;
        hi = lo;
        lo = mu_hint - width;
    }
    while total(&at(hi)) > 0.0 {
        width *= 2.0;
        lo = hi;
        hi = mu_hint + width;
    }
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..200 {
        let q = at(mu);
        let f = total(&q);
        if f.abs() <= 1e-15 {
            break;
        }
        if f > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        // Newton step: d(sum)/d(mu) = -sum q/(q + lam).
        let slope: f64 = -q.iter().map(|qi| qi / (qi + lam)).sum::<f64>();
        let next = mu - f / slope;
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if next == mu {
            break;
        }
        mu = next;
    }
    (at(mu), mu)
}

/// Projection of `r` onto `{q in simplex : KL(q || w) <= eps}`.
fn project_ball(r: &[f64], w: &[f64], eps: f64) -> Vec<f64> {
    let plain = project_simplex(r);
    if kl(&plain, w) <= eps {
        return plain;
    }
    // The divergence of the projection decreases in the multiplier `lam`. Root search on
    // ln(lam): bisection while the bracket is wide, then Illinois false position.
    let mut mu = 0.0;
    let mut gap = |x: f64| {
        let (q, m) = components(r, w, x.exp(), mu);
        mu = m;
        (kl(&q, w) - eps, q)
    };
    let mut lo = -60.0_f64;
    let mut hi = 1.0_f64;
    let (mut f_lo, _) = gap(lo);
    let (mut f_hi, mut best) = gap(hi);
    while f_hi > 0.0 {
        hi += 2.0;
        (f_hi, best) = gap(hi);
    }
    let mut last_side = 0;
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            break;
        }
        let x = if hi - lo > 2.0 || f_lo <= f_hi {
            0.5 * (lo + hi)
        } else {
            (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        };
        let (f, q) = gap(x);
        if f > 0.0 {
            lo = x;
            f_lo = f;
            if last_side == -1 {
                f_hi *= 0.5;
            }
            last_side = -1;
        } else {
            hi = x;
            f_hi = f;
            best = q;
            if last_side == 1 {
                f_lo *= 0.5;
            }
            last_side = 1;
            if f >= -1e-15 * eps.max(1.0) {
                break;
            }
        }
    }
    best
}

/// Worst-case expectation of `scores` over the divergence ball, by projected gradient
/// ascent from random interior starts.
pub fn simplex_worst_case(scores: &[f64], weights: &[f64], epsilon: f64) -> Result<OracleReport> {
    let started = Instant::now();
    let n = scores.len();
    if n > MAX_ATOMS {
        return Err(Error::TooManyAtoms { max: MAX_ATOMS, got: n });
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n != weights.len() {
        return Err(Error::LengthMismatch { left: n, right: weights.len() });
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::BadEpsilon(epsilon));
    }
    let report = |value: f64, q: Vec<f64>| OracleReport {
        value,
        argmax_weights: Some(q),
        argmin_z: None,
        grid_resolution: 0.0,
        runtime_ms: started.elapsed().as_millis(),
    };
    let dot = |q: &[f64]| q.iter().zip(scores).map(|(a, b)| a * b).sum::<f64>();
    if epsilon == 0.0 {
        return Ok(report(dot(weights), weights.to_vec()));
    }
    // Atoms without baseline mass cannot receive any.
    let support: Vec<usize> = (0..n).filter(|i| weights[*i] > 0.0).collect();
    let s: Vec<f64> = support.iter().map(|i| scores[*i]).collect();
    let w: Vec<f64> = support.iter().map(|i| weights[*i]).collect();
    let range = s.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
        - s.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let expand = |q: Vec<f64>| {
        let mut full = vec![0.0; n];
        for (k, i) in support.iter().enumerate() {
            full[*i] = q[k];
        }
        full
    };
    if range == 0.0 {
        return Ok(report(dot(weights), weights.to_vec()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x0c1e);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..RESTARTS {
        let raw: Vec<f64> = (0..s.len()).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut p = project_ball(&raw.iter().map(|v| v / total).collect::<Vec<_>>(), &w, epsilon);
        let mut h = 1.0 / range;
        for _ in 0..ASCENT_STEPS {
            let target: Vec<f64> = p.iter().zip(&s).map(|(pi, si)| pi + h * si).collect();
            let next = project_ball(&target, &w, epsilon);
            let change = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            p = next;
            if change <= 1e-12 && h >= 1e6 / range {
                break;
            }
            h = (h * 4.0).min(1e6 / range);
        }
        let value: f64 = p.iter().zip(&s).map(|(a, b)| a * b).sum();
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, p));
        }
    }
    let (value, q) = best.expect("at least one restart");
    Ok(report(value, expand(q)))
}

/// Grid minimiser of the worst-case expected score; ties go to the leftmost point.
pub fn grid_ref(
    family: &ScoreFamily,
    dist: &EmpiricalDistribution,
    epsilon: f64,
    z_grid: &[f64],
) -> Result<OracleReport> {
    let started = Instant::now();
    if z_grid.len() < MIN_GRID {
        return Err(Error::GridTooCoarse { min: MIN_GRID, got: z_grid.len() });
    }
    let mut best: Option<(f64, f64)> = None;
    for z in z_grid {
        let scores = score_values(family, dist, &[*z])?;
        let value = solve_tilt(&scores, dist.weights(), epsilon)?.value;
        if best.is_none_or(|(_, v)| value < v) {
            best = Some((*z, value));
        }
    }
    let (z, value) = best.expect("non-empty grid");
    let grid_resolution = z_grid.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
    Ok(OracleReport {
        value,
        argmax_weights: None,
        argmin_z: Some(z),
        grid_resolution,
        runtime_ms: started.elapsed().as_millis(),
    })
}

/// Evenly spaced grid of `points` values on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points.max(2) - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

/// Expectile by bisection on its identification function.
pub fn brute_expectile(atoms: &[f64], weights: &[f64], tau: f64) -> Result<f64> {
    if atoms.is_empty() {
        return Err(Error::EmptyInput);
    }
    if atoms.len() != weights.len() {
        return Err(Error::LengthMismatch { left: atoms.len(), right: weights.len() });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Range { name: "tau", value: tau });
    }
    let ident = |e: f64| -> f64 {
        atoms
            .iter()
            .zip(weights)
            .map(|(y, w)| if *y > e { tau * w * (y - e) } else { -(1.0 - tau) * w * (e - y) })
            .sum()
    };
    let mut lo = atoms.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = atoms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ident(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simplex_projection_is_feasible() {
        let q = project_simplex(&[0.9, 0.6, -0.3]);
        assert_relative_eq!(q.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(q[0], 0.65, epsilon = 1e-15);
        assert_eq!(q[2], 0.0);
    }

    #[test]
    fn ball_projection_is_on_the_boundary() {
        let w = [0.25; 4];
        let q = project_ball(&[2.0, 0.0, 0.0, -1.0], &w, 0.1);
        assert_relative_eq!(q.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!((kl(&q, &w) - 0.1).abs() < 1e-10);
    }

    #[test]
    fn inner_examples() {
        let s = [3.0, 1.0, 2.0];
        let w = [0.2, 0.5, 0.3];
        let base = simplex_worst_case(&s, &w, 0.0).unwrap();
        assert_relative_eq!(base.value, 0.6 + 0.5 + 0.6, max_relative = 1e-14);
        let top = simplex_worst_case(&s, &w, 5f64.ln()).unwrap();
        assert_relative_eq!(top.value, 3.0, max_relative = 1e-8);
        let two = simplex_worst_case(&[0.0, 1.0], &[0.5, 0.5], 0.1).unwrap();
        let tilt = solve_tilt(&[0.0, 1.0], &[0.5, 0.5], 0.1).unwrap();
        assert_relative_eq!(two.value, tilt.value, max_relative = 1e-4);
        assert!(matches!(
            simplex_worst_case(&[0.0; 9], &[1.0 / 9.0; 9], 0.1),
            Err(Error::TooManyAtoms { .. })
        ));
    }

    #[test]
    fn grid_examples() {
        let fam = ScoreFamily::mean(2.0).unwrap();
        let dist = EmpiricalDistribution::uniform(vec![1.0, 2.0, 3.0]).unwrap();
        let r = grid_ref(&fam, &dist, 0.0, &linear_grid(0.0, 4.0, 4001)).unwrap();
        assert!((r.argmin_z.unwrap() - 2.0).abs() <= 1e-3);
        let skew = EmpiricalDistribution::uniform(vec![0.0, 1.0, 5.0]).unwrap();
        let r = grid_ref(&fam, &skew, 3f64.ln(), &linear_grid(0.0, 5.0, 5001)).unwrap();
        assert!((r.argmin_z.unwrap() - 2.5).abs() <= 1e-3);
        assert!(matches!(
            grid_ref(&fam, &dist, 0.0, &linear_grid(0.0, 1.0, 50)),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn expectile_examples() {
        let atoms = [1.0, 2.0, 3.0];
        let w = [1.0 / 3.0; 3];
        assert_relative_eq!(brute_expectile(&atoms, &w, 0.5).unwrap(), 2.0, max_relative = 1e-12);
        assert_eq!(brute_expectile(&[4.0; 3], &w, 0.7).unwrap(), 4.0);
        // Root in [2, 3]: 0.7 (3 - e) = 0.3 ((e - 1) + (e - 2)).
        let e = brute_expectile(&atoms, &w, 0.7).unwrap();
        assert_relative_eq!(e, (2.1 + 0.9) / 1.3, max_relative = 1e-12);
    }
}
