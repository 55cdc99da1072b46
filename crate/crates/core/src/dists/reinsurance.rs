use nalgebra::DMatrix;

use super::{empirical_uniform, CopulaSpec, DistributionSpec, Functional, JointModel};
use crate::error::{Error, Result};

/// Excess-of-loss layer: pays `min((x - deductible)_+, limit)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub deductible: f64,
    pub limit: f64,
}

impl LayerSpec {
    pub fn new(deductible: f64, limit: f64) -> Result<Self> {
        if !(deductible.is_finite() && deductible >= 0.0 && limit.is_finite() && limit > 0.0) {
            return Err(Error::BadSpec(format!("layer ({deductible}, {limit}) is not admissible")));
        }
        Ok(Self { deductible, limit })
    }

    pub fn pay(&self, x: f64) -> f64 {
        (x - self.deductible).max(0.0).min(self.limit)
    }
}

/// Quantile levels `(deductible, limit)` of the three lines.
pub const LAYER_LEVELS: [(f64, f64); 3] = [(0.6, 0.8), (0.6, 0.8), (0.85, 0.95)];

/// Three lines of business: two lognormals and a Pareto, joined by a t copula with 4
/// degrees of freedom.
pub fn reinsurance_model() -> JointModel {
    let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 1.0, 0.8, 0.0, 0.8, 1.0]);
    JointModel {
        copula: CopulaSpec::StudentT { corr, df: 4 },
        marginals: vec![
            DistributionSpec::LogNormal { mu: 4.58, sigma: 0.19 },
            DistributionSpec::LogNormal { mu: 4.98, sigma: 0.23 },
            DistributionSpec::ParetoMM { mean: 150.0, std: 40.0 },
        ],
    }
}

/// Deductibles and limits from the empirical marginal quantiles of `x` (`n x 3`).
///
/// The limit of each line is the quantile value itself, so a line pays at most that amount.
pub fn layers_from_quantiles(x: &DMatrix<f64>) -> Result<Vec<LayerSpec>> {
    if x.ncols() != LAYER_LEVELS.len() {
        return Err(Error::ShapeMismatch(format!("expected 3 columns, got {}", x.ncols())));
    }
    LAYER_LEVELS
        .iter()
        .enumerate()
        .map(|(k, (d, l))| {
            let col: Vec<f64> = x.column(k).iter().copied().collect();
            LayerSpec::new(
                empirical_uniform(Functional::VaR(*d), &col)?,
                empirical_uniform(Functional::VaR(*l), &col)?,
            )
        })
        .collect()
}

/// Total reinsurance loss per row of `x`.
pub fn reinsurance_losses(x: &DMatrix<f64>, layers: &[LayerSpec]) -> Result<Vec<f64>> {
    if x.ncols() != layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} columns but {} layers",
            x.ncols(),
            layers.len()
        )));
    }
    Ok(x.row_iter()
        .map(|row| row.iter().zip(layers).map(|(v, layer)| layer.pay(*v)).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_examples() {
        let layers = vec![
            LayerSpec::new(10.0, 5.0).unwrap(),
            LayerSpec::new(20.0, 7.0).unwrap(),
            LayerSpec::new(30.0, 9.0).unwrap(),
        ];
        let x = DMatrix::from_row_slice(3, 3, &[10.0, 20.0, 30.0, 1e300, 1e300, 1e300, 12.0, 0.0, 35.0]);
        let y = reinsurance_losses(&x, &layers).unwrap();
        assert_eq!(y, vec![0.0, 21.0, 7.0]);
        assert!(LayerSpec::new(1.0, 0.0).is_err());
        assert!(reinsurance_losses(&DMatrix::zeros(2, 2), &layers).is_err());
    }

    #[test]
    fn losses_are_bounded_by_total_limit() {
        let x = reinsurance_model().sample(5_000, 4).unwrap();
        let layers = layers_from_quantiles(&x).unwrap();
        let cap: f64 = layers.iter().map(|l| l.limit).sum();
        let y = reinsurance_losses(&x, &layers).unwrap();
        assert!(y.iter().all(|v| *v >= 0.0 && *v <= cap));
    }
}
