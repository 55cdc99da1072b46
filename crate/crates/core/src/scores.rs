//! Strictly consistent, positively homogeneous scoring functions.
//!
//! Four families are supported:
//!
//! * [`ScoreKind::MeanPatton`]: the Patton family for the mean,
//!   `(y^b - z^b) / (b(b-1)) - z^(b-1) (y - z) / (b-1)` with the `b = 0` and `b = 1`
//!   limits. At `b = 2` it is `(y - z)^2 / 2`.
//! * [`ScoreKind::VarHomogeneous`]: `(1{y <= z} - alpha) (g(z) - g(y))` with the
//!   increasing power/log transform `g`. At `b = 1` this is the pinball loss.
//! * [`ScoreKind::Expectile`]: the asymmetric Bregman score
//!   `|1{y <= z} - tau| * S_mean(z, y)`.
//! * [`ScoreKind::VarEsJoint`]: the joint (VaR, ES) score for upper tails,
//!   `1{y > z1} (G1(y) - G1(z1) + G2(z2)(y - z1)) + (1 - alpha)(G1(z1) - G2(z2)(z2 - z1) + G2cal(z2))`,
//!   homogeneous for `b in (-inf, 0) U (0, 1)`.
//!
//! All families satisfy `S(cz, cy) = c^b S(z, y)` for `c > 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which elicitable functional the score targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScoreKind {
    MeanPatton,
    VarHomogeneous,
    Expectile,
    VarEsJoint,
}

impl TryFrom<String> for ScoreKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScoreKind> for String {
    fn from(k: ScoreKind) -> String {
        k.to_string()
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" | "meanpatton" | "mean_patton" | "patton" => Ok(ScoreKind::MeanPatton),
            "var" | "quantile" | "varhomogeneous" | "var_homogeneous" => {
                Ok(ScoreKind::VarHomogeneous)
            }
            "expectile" => Ok(ScoreKind::Expectile),
            "vares" | "var_es" | "varesjoint" | "var_es_joint" | "var-es" => Ok(ScoreKind::VarEsJoint),
            other => Err(Error::BadSpec(format!("unknown score kind '{other}'"))),
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ScoreKind::MeanPatton => "mean",
            ScoreKind::VarHomogeneous => "var",
            ScoreKind::Expectile => "expectile",
            ScoreKind::VarEsJoint => "vares",
        };
        f.write_str(name)
    }
}

/// Admissible region for `(z, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionDomain {
    AllReals,
    /// Both prediction and observation strictly positive.
    PositiveReals,
    /// Only the ES component of a (VaR, ES) prediction must be positive.
    PositiveShortfall,
}

/// Constants of the homogeneous families. Defaults are `d = d1 = d2 = c1 = 1`, `c0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConstants {
    pub d: f64,
    pub d1: f64,
    pub d2: f64,
    pub c0: f64,
    pub c1: f64,
}

impl Default for ScoreConstants {
    fn default() -> Self {
        Self { d: 1.0, d1: 1.0, d2: 1.0, c0: 0.0, c1: 1.0 }
    }
}

/// Unvalidated parameters, as read from flags or a flat config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub kind: ScoreKind,
    pub b: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(flatten)]
    pub constants: ScoreConstants,
}

impl ScoreParams {
    pub fn new(kind: ScoreKind, b: f64) -> Self {
        Self { kind, b, alpha: None, tau: None, constants: ScoreConstants::default() }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn with_constants(mut self, constants: ScoreConstants) -> Self {
        self.constants = constants;
        self
    }

    /// Validate and build the family.
    pub fn build(&self) -> Result<ScoreFamily> {
        ScoreFamily::new(self)
    }
}

/// A validated scoring function. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreFamily {
    kind: ScoreKind,
    b: f64,
    alpha: f64,
    tau: f64,
    constants: ScoreConstants,
    domain: ActionDomain,
}

fn check_level(name: &'static str, value: Option<f64>) -> Result<f64> {
    let v = value.ok_or(Error::BadSpec(format!("{name} is required for this score")))?;
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Range { name, value: v });
    }
    Ok(v)
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::BadConstant { name, value });
    }
    Ok(())
}

fn check_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::BadConstant { name, value });
    }
    Ok(())
}

impl ScoreFamily {
    /// Validate parameters and build a family.
    pub fn new(params: &ScoreParams) -> Result<Self> {
        let b = params.b;
        if !b.is_finite() {
            return Err(Error::BadConstant { name: "b", value: b });
        }
        let c = params.constants;
        if !c.c0.is_finite() {
            return Err(Error::BadConstant { name: "c0", value: c.c0 });
        }
        let (alpha, tau, domain) = match params.kind {
            ScoreKind::MeanPatton => {
                let domain = if b == 2.0 { ActionDomain::AllReals } else { ActionDomain::PositiveReals };
                (f64::NAN, f64::NAN, domain)
            }
            ScoreKind::Expectile => {
                let tau = check_level("tau", params.tau)?;
                let domain = if b == 2.0 { ActionDomain::AllReals } else { ActionDomain::PositiveReals };
                (f64::NAN, tau, domain)
            }
            ScoreKind::VarHomogeneous => {
                let alpha = check_level("alpha", params.alpha)?;
                if b > 0.0 {
                    check_positive("d1", c.d1)?;
                    check_positive("d2", c.d2)?;
                    (alpha, f64::NAN, ActionDomain::AllReals)
                } else {
                    check_positive("d", c.d)?;
                    (alpha, f64::NAN, ActionDomain::PositiveReals)
                }
            }
            ScoreKind::VarEsJoint => {
                let alpha = check_level("alpha", params.alpha)?;
                if b == 0.0 || b >= 1.0 {
                    return Err(Error::UnsupportedDegree { b });
                }
                check_positive("c1", c.c1)?;
                if b > 0.0 {
                    check_nonnegative("d1", c.d1)?;
                    check_nonnegative("d2", c.d2)?;
                }
                (alpha, f64::NAN, ActionDomain::PositiveShortfall)
            }
        };
        Ok(Self { kind: params.kind, b, alpha, tau, constants: c, domain })
    }

    /// Patton mean score of degree `b` with unit scale.
    pub fn mean(b: f64) -> Result<Self> {
        ScoreParams::new(ScoreKind::MeanPatton, b).build()
    }

    /// Homogeneous VaR score with `d = d1 = d2 = 1`.
    pub fn var(b: f64, alpha: f64) -> Result<Self> {
        ScoreParams::new(ScoreKind::VarHomogeneous, b).with_alpha(alpha).build()
    }

    pub fn expectile(b: f64, tau: f64) -> Result<Self> {
        ScoreParams::new(ScoreKind::Expectile, b).with_tau(tau).build()
    }

    /// Joint (VaR, ES) score with `d1 = d2 = c1 = 1`, `c0 = 0`.
    pub fn var_es(b: f64, alpha: f64) -> Result<Self> {
        ScoreParams::new(ScoreKind::VarEsJoint, b).with_alpha(alpha).build()
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    /// Homogeneity degree.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// VaR/ES level, `None` for the mean and expectile families.
    pub fn alpha(&self) -> Option<f64> {
        (!self.alpha.is_nan()).then_some(self.alpha)
    }

    pub fn tau(&self) -> Option<f64> {
        (!self.tau.is_nan()).then_some(self.tau)
    }

    pub fn constants(&self) -> ScoreConstants {
        self.constants
    }

    pub fn action_domain(&self) -> ActionDomain {
        self.domain
    }

    /// Prediction dimension: 2 for the joint (VaR, ES) score, 1 otherwise.
    pub fn dim(&self) -> usize {
        match self.kind {
            ScoreKind::VarEsJoint => 2,
            _ => 1,
        }
    }

    /// Whether `z -> S(z, y)` has kinks at the observations (quantile-type scores).
    pub fn has_kinks(&self) -> bool {
        matches!(self.kind, ScoreKind::VarHomogeneous | ScoreKind::VarEsJoint)
    }

    /// Whether `S(y, y) = 0` for every admissible `y`.
    pub fn vanishes_on_diagonal(&self) -> bool {
        self.dim() == 1
    }

    /// `S(z, y)` for a prediction of length [`dim`](Self::dim).
    pub fn eval(&self, z: &[f64], y: f64) -> Result<f64> {
        self.check_dim(z)?;
        match self.kind {
            ScoreKind::VarEsJoint => self.eval_pair(z[0], z[1], y),
            _ => self.eval_scalar(z[0], y),
        }
    }

    /// `dS/dz` (one entry per prediction coordinate).
    pub fn grad(&self, z: &[f64], y: f64) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        match self.kind {
            ScoreKind::VarEsJoint => self.grad_pair(z[0], z[1], y).map(|g| g.to_vec()),
            _ => self.grad_scalar(z[0], y).map(|g| vec![g]),
        }
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: z.len() });
        }
        Ok(())
    }

    /// Domain check for scalar predictions.
    pub fn check_scalar(&self, z: f64, y: f64) -> Result<()> {
        if !(z.is_finite() && y.is_finite()) {
            return Err(Error::Domain { z, y, reason: "non-finite argument" });
        }
        if self.domain == ActionDomain::PositiveReals && !(z > 0.0 && y > 0.0) {
            return Err(Error::Domain { z, y, reason: "z and y must be positive" });
        }
        Ok(())
    }

    /// Scalar score; errors for the joint family.
    pub fn eval_scalar(&self, z: f64, y: f64) -> Result<f64> {
        self.check_scalar(z, y)?;
        let b = self.b;
        Ok(match self.kind {
            ScoreKind::MeanPatton => patton(b, z, y),
            ScoreKind::Expectile => {
                let w = if y <= z { 1.0 - self.tau } else { self.tau };
                w * patton(b, z, y)
            }
            ScoreKind::VarHomogeneous => {
                let ind = if y <= z { 1.0 } else { 0.0 };
                (ind - self.alpha) * self.g_diff(z, y)
            }
            ScoreKind::VarEsJoint => return Err(Error::Dimension { expected: 2, got: 1 }),
        })
    }

    /// Scalar `dS/dz`. At the kink `y = z` the right derivative is returned.
    pub fn grad_scalar(&self, z: f64, y: f64) -> Result<f64> {
        self.check_scalar(z, y)?;
        let b = self.b;
        Ok(match self.kind {
            ScoreKind::MeanPatton => patton_grad(b, z, y),
            ScoreKind::Expectile => {
                let w = if y <= z { 1.0 - self.tau } else { self.tau };
                w * patton_grad(b, z, y)
            }
            ScoreKind::VarHomogeneous => {
                let ind = if y <= z { 1.0 } else { 0.0 };
                (ind - self.alpha) * self.g_prime(z)
            }
            ScoreKind::VarEsJoint => return Err(Error::Dimension { expected: 2, got: 1 }),
        })
    }

    fn check_pair(&self, z1: f64, z2: f64, y: f64) -> Result<()> {
        if self.kind != ScoreKind::VarEsJoint {
            return Err(Error::Dimension { expected: 1, got: 2 });
        }
        if !(z1.is_finite() && z2.is_finite() && y.is_finite()) {
            return Err(Error::Domain { z: z2, y, reason: "non-finite argument" });
        }
        if !(z2 > 0.0) {
            return Err(Error::Domain { z: z2, y, reason: "ES prediction must be positive" });
        }
        Ok(())
    }

    /// Joint (VaR, ES) score at `(z1, z2)`.
    pub fn eval_pair(&self, z1: f64, z2: f64, y: f64) -> Result<f64> {
        self.check_pair(z1, z2, y)?;
        let p = 1.0 - self.alpha;
        let g2 = self.es_g2(z2);
        let tail = if y > z1 { self.es_g1(y) - self.es_g1(z1) + g2 * (y - z1) } else { 0.0 };
        Ok(tail + p * (self.es_g1(z1) - g2 * (z2 - z1) + self.es_g2_antideriv(z2)))
    }

    /// Joint scores at `(z1, z2)` for every atom, written into `out`.
    pub fn eval_pair_batch(&self, z1: f64, z2: f64, ys: &[f64], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let p = 1.0 - self.alpha;
        let g2 = self.es_g2(z2);
        let g1z = self.es_g1(z1);
        let base = p * (g1z - g2 * (z2 - z1) + self.es_g2_antideriv(z2));
        for y in ys {
            self.check_pair(z1, z2, *y)?;
            let tail = if *y > z1 { self.es_g1(*y) - g1z + g2 * (y - z1) } else { 0.0 };
            out.push(tail + base);
        }
        Ok(())
    }

    /// Gradient of the joint score; right derivative in `z1` at `y = z1`.
    pub fn grad_pair(&self, z1: f64, z2: f64, y: f64) -> Result<[f64; 2]> {
        self.check_pair(z1, z2, y)?;
        let ind = if y <= z1 { 1.0 } else { 0.0 };
        let d1 = (self.es_g1_prime(z1) + self.es_g2(z2)) * (ind - self.alpha);
        let excess = if y > z1 { y - z1 } else { 0.0 };
        let d2 = self.es_g2_prime(z2) * (excess - (1.0 - self.alpha) * (z2 - z1));
        Ok([d1, d2])
    }

    // Increasing transform of the VaR family.
    fn g(&self, x: f64) -> f64 {
        let (b, c) = (self.b, &self.constants);
        if b > 0.0 {
            if x > 0.0 {
                c.d1 * x.powf(b)
            } else if x < 0.0 {
                -c.d2 * (-x).powf(b)
            } else {
                0.0
            }
        } else if b == 0.0 {
            c.d * x.ln()
        } else {
            -c.d * x.powf(b)
        }
    }

    // g(z) - g(y), with the log branch taken as a single ratio.
    fn g_diff(&self, z: f64, y: f64) -> f64 {
        if self.b == 0.0 {
            self.constants.d * (z / y).ln()
        } else {
            self.g(z) - self.g(y)
        }
    }

    // Right derivative of `g`.
    fn g_prime(&self, x: f64) -> f64 {
        let (b, c) = (self.b, &self.constants);
        if b > 0.0 {
            if b == 1.0 {
                if x >= 0.0 {
                    c.d1
                } else {
                    c.d2
                }
            } else if x >= 0.0 {
                c.d1 * b * x.powf(b - 1.0)
            } else {
                c.d2 * b * (-x).powf(b - 1.0)
            }
        } else if b == 0.0 {
            c.d / x
        } else {
            -c.d * b * x.powf(b - 1.0)
        }
    }

    fn es_g1(&self, x: f64) -> f64 {
        let c = &self.constants;
        if self.b > 0.0 {
            let scale = if x >= 0.0 { c.d1 } else { -c.d2 };
            scale * x.abs().powf(self.b) - c.c0
        } else {
            -c.c0
        }
    }

    fn es_g1_prime(&self, x: f64) -> f64 {
        let c = &self.constants;
        if self.b > 0.0 {
            let scale = if x >= 0.0 { c.d1 } else { c.d2 };
            scale * self.b * x.abs().powf(self.b - 1.0)
        } else {
            0.0
        }
    }

    // Strictly increasing, strictly concave antiderivative of `es_g2`.
    fn es_g2_antideriv(&self, x: f64) -> f64 {
        let c = &self.constants;
        if self.b > 0.0 {
            c.c1 * x.powf(self.b) + c.c0
        } else {
            -c.c1 * x.powf(self.b) + c.c0
        }
    }

    fn es_g2(&self, x: f64) -> f64 {
        let sign = if self.b > 0.0 { 1.0 } else { -1.0 };
        sign * self.constants.c1 * self.b * x.powf(self.b - 1.0)
    }

    fn es_g2_prime(&self, x: f64) -> f64 {
        let sign = if self.b > 0.0 { 1.0 } else { -1.0 };
        sign * self.constants.c1 * self.b * (self.b - 1.0) * x.powf(self.b - 2.0)
    }
}

/// Patton score for the mean; requires `z, y > 0` unless `b = 2`.
fn patton(b: f64, z: f64, y: f64) -> f64 {
    if b == 2.0 {
        return 0.5 * (y - z) * (y - z);
    }
    if y == 0.0 {
        return if b == 1.0 {
            z
        } else {
            -z.powf(b) / (b * (b - 1.0)) + z.powf(b) / (b - 1.0)
        };
    }
    // Relative form in u = y/z - 1 keeps precision when y is close to z.
    let u = (y - z) / z;
    let l = u.ln_1p();
    if b == 0.0 {
        u - l
    } else if b == 1.0 {
        z * ((1.0 + u) * l - u)
    } else {
        z.powf(b) * ((b * l).exp_m1() / b - u) / (b - 1.0)
    }
}

/// `z^(b-2) (z - y)`, valid for all three branches.
fn patton_grad(b: f64, z: f64, y: f64) -> f64 {
    if b == 2.0 {
        z - y
    } else {
        z.powf(b - 2.0) * (z - y)
    }
}
