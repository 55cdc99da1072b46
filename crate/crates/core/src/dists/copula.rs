use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{rng, DistributionSpec};
use crate::error::{Error, Result};

/// Dependence structure on the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub enum CopulaSpec {
    /// Gumbel copula in `dim` dimensions; `theta = 1` is independence.
    Gumbel { theta: f64, dim: usize },
    /// Student-t copula with correlation matrix `corr`.
    StudentT { corr: DMatrix<f64>, df: u32 },
}

impl CopulaSpec {
    pub fn dim(&self) -> usize {
        match self {
            CopulaSpec::Gumbel { dim, .. } => *dim,
            CopulaSpec::StudentT { corr, .. } => corr.nrows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CopulaSpec::Gumbel { theta, dim } => {
                if !(*theta >= 1.0 && theta.is_finite()) || *dim == 0 {
                    return Err(Error::BadSpec(format!("Gumbel copula needs theta >= 1, got {theta}")));
                }
            }
            CopulaSpec::StudentT { corr, df } => {
                self.cholesky(corr)?;
                if *df == 0 {
                    return Err(Error::BadSpec("t copula needs df > 0".into()));
                }
            }
        }
        Ok(())
    }

    fn cholesky(&self, corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = corr.nrows();
        if k == 0 || corr.ncols() != k {
            return Err(Error::BadSpec("correlation matrix must be square".into()));
        }
        for i in 0..k {
            if (corr[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::BadSpec("correlation matrix needs a unit diagonal".into()));
            }
            for j in 0..i {
                if (corr[(i, j)] - corr[(j, i)]).abs() > 1e-12 {
                    return Err(Error::BadSpec("correlation matrix must be symmetric".into()));
                }
            }
        }
        corr.clone()
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::BadSpec("correlation matrix is not positive definite".into()))
    }

    /// `n x dim` matrix of dependent uniforms.
    pub fn sample_uniforms(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let k = self.dim();
        let mut rng = rng(seed);
        let mut out = DMatrix::zeros(n, k);
        match self {
            CopulaSpec::Gumbel { theta, .. } => {
                // Marshall-Olkin: U_j = psi(E_j / V) with psi(t) = exp(-t^(1/theta)) and V
                // positive stable with Laplace transform psi (Kanter's representation).
                let a = 1.0 / theta;
                for i in 0..n {
                    let v = if a == 1.0 {
                        1.0
                    } else {
                        let t: f64 = rng.random_range(0.0..PI);
                        let w: f64 = Exp1.sample(&mut rng);
                        (a * t).sin() / t.sin().powf(1.0 / a)
                            * (((1.0 - a) * t).sin() / w).powf((1.0 - a) / a)
                    };
                    for j in 0..k {
                        let e: f64 = Exp1.sample(&mut rng);
                        out[(i, j)] = clamp_unit((-(e / v).powf(a)).exp());
                    }
                }
            }
            CopulaSpec::StudentT { corr, df } => {
                let l = self.cholesky(corr)?;
                let nu = f64::from(*df);
                let chi = ChiSquared::new(nu).map_err(|e| Error::BadSpec(e.to_string()))?;
                let t = StudentsT::new(0.0, 1.0, nu).map_err(|e| Error::BadSpec(e.to_string()))?;
                let mut z = vec![0.0; k];
                for i in 0..n {
                    for zj in z.iter_mut() {
                        *zj = StandardNormal.sample(&mut rng);
                    }
                    let scale = (chi.sample(&mut rng) / nu).sqrt();
                    for j in 0..k {
                        let x: f64 = (0..=j).map(|m| l[(j, m)] * z[m]).sum();
                        out[(i, j)] = clamp_unit(t.cdf(x / scale));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn clamp_unit(u: f64) -> f64 {
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Copula with marginals applied column-wise by inverse transform.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub copula: CopulaSpec,
    pub marginals: Vec<DistributionSpec>,
}

impl JointModel {
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        if self.marginals.len() != self.copula.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} marginals for a {}-dimensional copula",
                self.marginals.len(),
                self.copula.dim()
            )));
        }
        for m in &self.marginals {
            m.validate()?;
        }
        let mut u = self.copula.sample_uniforms(n, seed)?;
        for (j, m) in self.marginals.iter().enumerate() {
            for v in u.column_mut(j).iter_mut() {
                *v = m.quantile(*v);
            }
        }
        Ok(u)
    }
}
