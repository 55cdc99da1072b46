use crate::dists::{empirical_functional, Functional};
use crate::error::{Error, Result};
use crate::scores::{ActionDomain, ScoreFamily, ScoreKind};
use crate::tilt::{solve_tilt_from, EmpiricalDistribution, TiltSolution};

use super::{Diagnostics, REFResult};

/// Relative tolerance on the derivative sign, against rounding in the weighted sums.
const SIGN_TOL: f64 = 1e-12;
const WIDTH_TOL: f64 = 1e-13;
const MAX_EXPANSIONS: usize = 200;
const MAX_BISECTIONS: usize = 400;
const POSITIVE_FLOOR: f64 = 1e-9;

/// Evaluates `J` and `J'` at scalar predictions, reusing buffers and the last tilt parameter.
pub(crate) struct Objective1d<'a> {
    family: &'a ScoreFamily,
    dist: &'a EmpiricalDistribution,
    epsilon: f64,
    scores: Vec<f64>,
    grads: Vec<f64>,
    hint: Option<f64>,
    pub evals: usize,
    pub degenerate_hit: bool,
}

pub(crate) struct Slope {
    pub derivative: f64,
    /// `sum q_i |dS/dz|`, the natural scale of the derivative.
    pub magnitude: f64,
}

impl<'a> Objective1d<'a> {
    pub fn new(family: &'a ScoreFamily, dist: &'a EmpiricalDistribution, epsilon: f64) -> Self {
        Self {
            family,
            dist,
            epsilon,
            scores: Vec::with_capacity(dist.len()),
            grads: Vec::with_capacity(dist.len()),
            hint: None,
            evals: 0,
            degenerate_hit: false,
        }
    }

    fn tilt(&mut self, z: f64, with_grads: bool) -> Result<TiltSolution> {
        self.scores.clear();
        self.grads.clear();
        for y in self.dist.atoms() {
            self.scores.push(self.family.eval_scalar(z, *y)?);
            if with_grads {
                self.grads.push(self.family.grad_scalar(z, *y)?);
            }
        }
        let sol = solve_tilt_from(&self.scores, self.dist.weights(), self.epsilon, self.hint)?;
        self.evals += 1;
        if sol.degenerate && self.epsilon > 0.0 {
            self.degenerate_hit = true;
        } else if sol.eta_star > 0.0 {
            self.hint = Some(sol.eta_star);
        }
        Ok(sol)
    }

    pub fn value(&mut self, z: f64) -> Result<TiltSolution> {
        self.tilt(z, false)
    }

    pub fn slope(&mut self, z: f64) -> Result<Slope> {
        let tilt = self.tilt(z, true)?;
        let (mut derivative, mut magnitude) = (0.0, 0.0);
        for (q, g) in tilt.tilted_weights.iter().zip(&self.grads) {
            derivative += q * g;
            magnitude += q * g.abs();
        }
        if !derivative.is_finite() {
            return Err(Error::NonFinite(format!("derivative at z = {z}")));
        }
        Ok(Slope { derivative, magnitude })
    }

    /// The point lies in the region where `J` no longer decreases.
    fn is_upper(&mut self, z: f64) -> Result<bool> {
        let s = self.slope(z)?;
        Ok(s.derivative >= -SIGN_TOL * s.magnitude)
    }
}

fn check_one_dim(family: &ScoreFamily, epsilon: f64) -> Result<()> {
    if family.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: family.dim() });
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::BadEpsilon(epsilon));
    }
    Ok(())
}

/// `dJ/dz`: the derivative of the score averaged under the worst-case measure at `z`.
pub fn j_derivative(
    family: &ScoreFamily,
    dist: &EmpiricalDistribution,
    z: f64,
    epsilon: f64,
) -> Result<f64> {
    check_one_dim(family, epsilon)?;
    Objective1d::new(family, dist, epsilon).slope(z).map(|s| s.derivative)
}

/// `J(z)`, the worst-case expected score at a scalar prediction.
pub fn worst_case_value(
    family: &ScoreFamily,
    dist: &EmpiricalDistribution,
    z: f64,
    epsilon: f64,
) -> Result<f64> {
    check_one_dim(family, epsilon)?;
    Objective1d::new(family, dist, epsilon).value(z).map(|s| s.value)
}

pub(crate) fn classical(family: &ScoreFamily, dist: &EmpiricalDistribution) -> Result<f64> {
    let kind = match family.kind() {
        ScoreKind::MeanPatton => Functional::Mean,
        ScoreKind::VarHomogeneous => Functional::VaR(family.alpha().unwrap_or(f64::NAN)),
        ScoreKind::Expectile => Functional::Expectile(family.tau().unwrap_or(f64::NAN)),
        ScoreKind::VarEsJoint => return Err(Error::Dimension { expected: 1, got: 2 }),
    };
    empirical_functional(kind, dist.atoms(), dist.weights())
}

/// Robust functional for a scalar score by bisection on the sign of `dJ/dz`.
///
/// `J'` is negative left of the minimiser and non-negative from it onwards; when the argmin
/// is an interval the left end is returned. For scores with kinks the result is snapped
/// onto the atom that the final bracket isolates.
pub fn ref_1d(
    family: &ScoreFamily,
    dist: &EmpiricalDistribution,
    epsilon: f64,
    bracket: Option<(f64, f64)>,
) -> Result<REFResult> {
    check_one_dim(family, epsilon)?;
    let baseline = classical(family, dist)?;
    let positive = family.action_domain() == ActionDomain::PositiveReals;

    if dist.is_degenerate() {
        let m = dist.min();
        family.check_scalar(m, m)?;
        return Ok(REFResult {
            z_star: vec![m],
            eta_star: 0.0,
            value: 0.0,
            baseline_value: vec![m],
            diagnostics: Diagnostics {
                converged: true,
                degenerate_hit: epsilon > 0.0,
                ..Diagnostics::default()
            },
        });
    }

    let (mut lo, mut hi) = bracket.unwrap_or((dist.min(), dist.max()));
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::BadSpec(format!("bracket ({lo}, {hi}) is not an interval")));
    }
    if positive {
        lo = lo.max(POSITIVE_FLOOR);
        hi = hi.max(2.0 * lo);
    }
    let mut obj = Objective1d::new(family, dist, epsilon);

    let (lo0, hi0) = (lo, hi);
    let mut expansions = 0;
    while obj.is_upper(lo)? {
        let width = hi - lo;
        hi = lo;
        lo = if positive { lo * 0.5 } else { lo - 2.0 * width };
        expansions += 1;
        if expansions > MAX_EXPANSIONS || (positive && lo < f64::MIN_POSITIVE) {
            return Err(Error::NoSignChange { lo: lo0, hi: hi0 });
        }
    }
    while !obj.is_upper(hi)? {
        let width = hi - lo;
        lo = hi;
        hi += 2.0 * width;
        expansions += 1;
        if expansions > MAX_EXPANSIONS || !hi.is_finite() {
            return Err(Error::NoSignChange { lo: lo0, hi: hi0 });
        }
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_BISECTIONS {
        let scale = lo.abs().max(hi.abs());
        let mid = 0.5 * (lo + hi);
        if hi - lo <= WIDTH_TOL * scale || mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        iterations += 1;
        if obj.is_upper(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let mut z = hi;
    if family.has_kinks() {
        if let Some(atom) = dist
            .atoms()
            .iter()
            .copied()
            .filter(|a| *a > lo && *a <= hi)
            .min_by(f64::total_cmp)
        {
            z = atom;
        }
    }

    // Without ambiguity the classical functional is the exact minimiser; prefer it over the
    // bisection end point when the two agree to bracket accuracy.
    if epsilon == 0.0 && (z - baseline).abs() <= 1e-9 * z.abs().max(baseline.abs()).max(1e-300) {
        z = baseline;
    }

    let at_optimum = obj.value(z)?;
    Ok(REFResult {
        z_star: vec![z],
        eta_star: at_optimum.eta_star,
        value: at_optimum.value,
        baseline_value: vec![baseline],
        diagnostics: Diagnostics {
            iterations,
            derivative_evals: obj.evals,
            converged,
            degenerate_hit: obj.degenerate_hit,
            ..Diagnostics::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform(v: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::uniform(v.to_vec()).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let fam = ScoreFamily::mean(2.0).unwrap();
        let dist = uniform(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(j_derivative(&fam, &dist, 2.0, 0.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(j_derivative(&fam, &dist, 3.0, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        let h = 1e-5;
        let fd = (worst_case_value(&fam, &dist, 2.0 + h, 0.1).unwrap()
            - worst_case_value(&fam, &dist, 2.0 - h, 0.1).unwrap())
            / (2.0 * h);
        let exact = j_derivative(&fam, &dist, 2.0, 0.1).unwrap();
        // Symmetric data: the derivative vanishes at the centre.
        assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-6), "{fd} vs {exact}");
    }

    #[test]
    fn ref_examples() {
        let fam = ScoreFamily::mean(2.0).unwrap();
        let r = ref_1d(&fam, &uniform(&[1.0, 2.0, 3.0]), 0.0, None).unwrap();
        assert_relative_eq!(r.z(), 2.0, max_relative = 1e-12);
        let skewed = uniform(&[0.0, 1.0, 5.0]);
        let minimax = ref_1d(&fam, &skewed, 3f64.ln(), None).unwrap();
        assert_relative_eq!(minimax.z(), 2.5, max_relative = 1e-10);
        assert!(minimax.diagnostics.degenerate_hit);
        let mid = ref_1d(&fam, &skewed, 0.2, None).unwrap();
        assert!(mid.z() > 2.0 && mid.z() < 2.5, "{}", mid.z());
    }

    #[test]
    fn constant_sample_returns_the_constant() {
        for fam in [ScoreFamily::mean(0.5).unwrap(), ScoreFamily::var(1.0, 0.9).unwrap()] {
            let r = ref_1d(&fam, &uniform(&[1.7; 5]), 0.4, None).unwrap();
            assert_eq!(r.z(), 1.7);
        }
    }

    #[test]
    fn var_at_zero_is_the_lower_quantile() {
        let fam = ScoreFamily::var(1.0, 0.5).unwrap();
        let r = ref_1d(&fam, &uniform(&[4.0, 1.0, 3.0, 2.0]), 0.0, None).unwrap();
        assert_eq!(r.z(), 2.0);
        let low = ScoreFamily::var(1.0, 0.1).unwrap();
        let r = ref_1d(&low, &uniform(&[4.0, 1.0, 3.0, 2.0]), 0.0, None).unwrap();
        assert_eq!(r.z(), 1.0);
    }

    #[test]
    fn dimension_is_checked() {
        let fam = ScoreFamily::var_es(0.5, 0.9).unwrap();
        assert!(matches!(
            ref_1d(&fam, &uniform(&[1.0, 2.0]), 0.1, None),
            Err(Error::Dimension { .. })
        ));
    }
}
