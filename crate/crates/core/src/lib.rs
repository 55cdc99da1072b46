//! Robust elicitable functionals: the prediction minimising the worst-case expected score
//! over a Kullback-Leibler ball around an empirical baseline.

pub mod cli;
pub mod dists;
pub mod error;
pub mod oracle;
pub mod scores;
pub mod solver;
pub mod tilt;

pub use error::{Error, Result};
pub use scores::{ActionDomain, ScoreConstants, ScoreFamily, ScoreKind, ScoreParams};
pub use solver::{Diagnostics, REFResult, RegressionFit};
pub use tilt::{EmpiricalDistribution, TiltSolution};
