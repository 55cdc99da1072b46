//! Classical (non-robust) functionals of a weighted sample.

use crate::error::{Error, Result};

/// Tolerance on the cumulative weight when locating a quantile.
pub const QUANTILE_TOL: f64 = 1e-12;

/// Functional of a weighted sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    Mean,
    VaR(f64),
    ES(f64),
    Expectile(f64),
}

/// Evaluate `kind` on the weighted sample `(atoms, weights)`.
pub fn empirical_functional(kind: Functional, atoms: &[f64], weights: &[f64]) -> Result<f64> {
    if atoms.is_empty() {
        return Err(Error::EmptyInput);
    }
    if atoms.len() != weights.len() {
        return Err(Error::LengthMismatch { left: atoms.len(), right: weights.len() });
    }
    match kind {
        Functional::Mean => Ok(atoms.iter().zip(weights).map(|(a, w)| a * w).sum()),
        Functional::VaR(alpha) => {
            check_level("alpha", alpha)?;
            let sorted = sorted_support(atoms, weights);
            Ok(quantile_sorted(&sorted, alpha).0)
        }
        Functional::ES(alpha) => {
            check_level("alpha", alpha)?;
            let sorted = sorted_support(atoms, weights);
            Ok(es_sorted(&sorted, alpha))
        }
        Functional::Expectile(tau) => {
            check_level("tau", tau)?;
            let sorted = sorted_support(atoms, weights);
            Ok(expectile_sorted(&sorted, tau))
        }
    }
}

/// Equally weighted convenience wrapper.
pub fn empirical_uniform(kind: Functional, atoms: &[f64]) -> Result<f64> {
    let n = atoms.len();
    empirical_functional(kind, atoms, &vec![1.0 / n.max(1) as f64; n])
}

/// Empirical `(VaR_alpha, ES_alpha)` pair from one sort.
pub fn var_es_pair(atoms: &[f64], weights: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if atoms.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_level("alpha", alpha)?;
    let sorted = sorted_support(atoms, weights);
    Ok((quantile_sorted(&sorted, alpha).0, es_sorted(&sorted, alpha)))
}

fn check_level(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::Range { name, value });
    }
    Ok(())
}

fn sorted_support(atoms: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> =
        atoms.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(a, w)| (*a, *w)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Lower quantile and the cumulative weight up to and including it.
fn quantile_sorted(sorted: &[(f64, f64)], alpha: f64) -> (f64, f64) {
    let mut cum = 0.0;
    for (i, (a, w)) in sorted.iter().enumerate() {
        cum += w;
        let tie_follows = sorted.get(i + 1).is_some_and(|next| next.0 == *a);
        if cum >= alpha - QUANTILE_TOL && !tie_follows {
            return (*a, cum);
        }
    }
    let last = sorted.last().expect("non-empty support");
    (last.0, cum)
}

fn es_sorted(sorted: &[(f64, f64)], alpha: f64) -> f64 {
    let (q, f_q) = quantile_sorted(sorted, alpha);
    let tail: f64 = sorted.iter().filter(|(a, _)| *a > q).map(|(a, w)| a * w).sum();
    let split = (f_q - alpha).max(0.0);
    (tail + split * q) / (1.0 - alpha)
}

// The identification function is piecewise linear and decreasing; solve it on the segment
// that brackets its root.
fn expectile_sorted(sorted: &[(f64, f64)], tau: f64) -> f64 {
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for &(a, w) in sorted {
        match groups.last_mut() {
            Some(last) if last.0 == a => last.1 += w,
            _ => groups.push((a, w)),
        }
    }
    let total_w: f64 = groups.iter().map(|p| p.1).sum();
    let total_m: f64 = groups.iter().map(|p| p.0 * p.1).sum();
    let (mut below_w, mut below_m) = (0.0, 0.0);
    for k in 0..=groups.len() {
        let lower = if k == 0 { f64::NEG_INFINITY } else { groups[k - 1].0 };
        let upper = groups.get(k).map_or(f64::INFINITY, |g| g.0);
        let above_w = total_w - below_w;
        let above_m = total_m - below_m;
        let e = (tau * above_m + (1.0 - tau) * below_m) / (tau * above_w + (1.0 - tau) * below_w);
        if e >= lower && e <= upper {
            return e;
        }
        if let Some(g) = groups.get(k) {
            below_w += g.1;
            below_m += g.0 * g.1;
        }
    }
    // Rounding pushed the root just outside every segment; it then sits on an atom.
    groups
        .iter()
        .map(|g| g.0)
        .min_by(|a, b| {
            identification(sorted, tau, *a).abs().total_cmp(&identification(sorted, tau, *b).abs())
        })
        .expect("non-empty support")
}

fn identification(sorted: &[(f64, f64)], tau: f64, e: f64) -> f64 {
    sorted
        .iter()
        .map(|(y, w)| if *y > e { tau * w * (y - e) } else { -(1.0 - tau) * w * (e - y) })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn examples() {
        assert_eq!(empirical_uniform(Functional::Mean, &[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(empirical_uniform(Functional::VaR(0.5), &[4.0, 2.0, 3.0, 1.0]).unwrap(), 2.0);
        let data = [0.3, 5.0, 1.2, 7.7, 2.2];
        let mean = empirical_uniform(Functional::Mean, &data).unwrap();
        let e = empirical_uniform(Functional::Expectile(0.5), &data).unwrap();
        assert!((e - mean).abs() <= 1e-10);
        assert_eq!(empirical_uniform(Functional::VaR(0.3), &[]), Err(Error::EmptyInput));
    }

    #[test]
    fn es_splits_the_boundary_atom() {
        // Tail of mass 0.25 on {1..4}: the whole atom 4 (0.25).
        let es = empirical_uniform(Functional::ES(0.75), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(es, 4.0, max_relative = 1e-12);
        // Tail of mass 0.4: atom 4 plus 0.15 of atom 3.
        let es = empirical_uniform(Functional::ES(0.6), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(es, (0.25 * 4.0 + 0.15 * 3.0) / 0.4, max_relative = 1e-12);
    }

    #[test]
    fn var_handles_ties_and_weights() {
        let atoms = [1.0, 2.0, 2.0, 3.0];
        let w = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(empirical_functional(Functional::VaR(0.2), &atoms, &w).unwrap(), 2.0);
        assert_eq!(empirical_functional(Functional::VaR(0.6), &atoms, &w).unwrap(), 2.0);
        assert_eq!(empirical_functional(Functional::VaR(0.61), &atoms, &w).unwrap(), 3.0);
        let (v, e) = var_es_pair(&atoms, &w, 0.5).unwrap();
        assert_eq!(v, 2.0);
        assert_relative_eq!(e, (0.4 * 3.0 + 0.1 * 2.0) / 0.5, max_relative = 1e-12);
    }

    #[test]
    fn expectile_solves_identification() {
        for tau in [0.05, 0.3, 0.7, 0.99] {
            let atoms = [1.0, 2.0, 2.0, 3.0, 10.0];
            let e = empirical_uniform(Functional::Expectile(tau), &atoms).unwrap();
            let sorted: Vec<(f64, f64)> = atoms.iter().map(|a| (*a, 0.2)).collect();
            assert!(identification(&sorted, tau, e).abs() <= 1e-12, "tau {tau}");
        }
        assert_eq!(empirical_uniform(Functional::Expectile(0.8), &[4.0; 3]).unwrap(), 4.0);
    }
}
