//! Centered, identity-covariance Levy drivers and their mixed moments.
//!
//! A driver of dimension `r` has independent, identically distributed
//! components, so its Levy measure lives on the coordinate axes and the
//! mixed moment tensors are diagonal.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Law of a single compound-Poisson jump before standardization.
#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpLaw {
    /// `+1` or `-1` with probability one half.
    Rademacher,
    /// Standard normal jumps.
    Normal,
    /// `Exp(1)` jumps; skewed, so the compensator is non-trivial.
    Exponential,
    /// A user sampler without closed-form moments.
    #[serde(skip)]
    Custom(Arc<dyn Fn(&mut RandomStream) -> f64 + Send + Sync>),
}

impl fmt::Debug for JumpLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl PartialEq for JumpLaw {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (JumpLaw::Custom(a), JumpLaw::Custom(b)) => Arc::ptr_eq(a, b),
            _ => self.id() == other.id(),
        }
    }
}

impl JumpLaw {
    pub fn id(&self) -> &'static str {
        match self {
            JumpLaw::Rademacher => "rademacher",
            JumpLaw::Normal => "normal",
            JumpLaw::Exponential => "exponential",
            JumpLaw::Custom(_) => "custom",
        }
    }

    /// Raw moments `E[Z^m]` for `m = 1..=4`.
    fn raw_moments(&self) -> Option<[f64; 4]> {
        match self {
            JumpLaw::Rademacher => Some([0.0, 1.0, 0.0, 1.0]),
            JumpLaw::Normal => Some([0.0, 1.0, 0.0, 3.0]),
            JumpLaw::Exponential => Some([1.0, 2.0, 6.0, 24.0]),
            JumpLaw::Custom(_) => None,
        }
    }

    #[inline]
    fn sample(&self, rng: &mut RandomStream) -> f64 {
        match self {
            JumpLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            JumpLaw::Normal => StandardNormal.sample(rng),
            JumpLaw::Exponential => -(1.0 - rng.random::<f64>()).ln(),
            JumpLaw::Custom(f) => f(rng),
        }
    }
}

/// Kind of a driver, tagged by `kind` in configuration files:
/// `{"kind":"nig","delta":10.0}`, `{"kind":"wiener"}`,
/// `{"kind":"cp","lambda":1.0,"jump":"rademacher"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DriverKind {
    Wiener,
    #[serde(rename = "cp")]
    CompoundPoisson {
        lambda: f64,
        jump: JumpLaw,
    },
    Nig {
        delta: f64,
    },
}

/// A centered Levy process with `E[J_1 J_1^T] = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DriverConfig", into = "DriverConfig")]
pub struct LevyDriver {
    kind: DriverKind,
    dim: usize,
    /// Compound-Poisson jump scale making the unit-time variance one.
    cp_scale: Option<f64>,
    cp_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DriverConfig {
    #[serde(flatten)]
    kind: DriverKind,
    #[serde(default = "one")]
    dim: usize,
}

impl TryFrom<DriverConfig> for LevyDriver {
    type Error = Error;

    fn try_from(c: DriverConfig) -> Result<Self> {
        Self { kind: c.kind, dim: c.dim, cp_scale: None, cp_mean: 0.0 }.validated()
    }
}

impl From<LevyDriver> for DriverConfig {
    fn from(d: LevyDriver) -> Self {
        DriverConfig { kind: d.kind, dim: d.dim }
    }
}

fn one() -> usize {
    1
}

impl LevyDriver {
    pub fn wiener(dim: usize) -> Self {
        Self { kind: DriverKind::Wiener, dim, cp_scale: None, cp_mean: 0.0 }
    }

    /// Symmetric NIG with `L(J_t) = NIG(delta, 0, delta t, 0)`.
    pub fn nig(delta: f64, dim: usize) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("NIG needs delta > 0, got {delta}")));
        }
        Ok(Self { kind: DriverKind::Nig { delta }, dim, cp_scale: None, cp_mean: 0.0 })
    }

    /// Compound Poisson with intensity `lambda`. For laws with known second
    /// moment the jumps are rescaled to unit variance; a custom law is used
    /// as given and must already satisfy `lambda * E[Z^2] = 1` and be centered.
    pub fn compound_poisson(lambda: f64, jump: JumpLaw, dim: usize) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("compound Poisson needs lambda > 0, got {lambda}")));
        }
        let mut d = Self { kind: DriverKind::CompoundPoisson { lambda, jump }, dim, cp_scale: None, cp_mean: 0.0 };
        d.normalize();
        Ok(d)
    }

    fn validated(mut self) -> Result<Self> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("driver dimension must be positive".into()));
        }
        match &self.kind {
            DriverKind::Wiener => {}
            DriverKind::Nig { delta } => {
                Self::nig(*delta, self.dim)?;
            }
            DriverKind::CompoundPoisson { lambda, .. } => {
                if !(*lambda > 0.0) {
                    return Err(Error::InvalidArgument(format!("compound Poisson needs lambda > 0, got {lambda}")));
                }
            }
        }
        self.normalize();
        Ok(self)
    }

    fn normalize(&mut self) {
        if let DriverKind::CompoundPoisson { lambda, jump } = &self.kind {
            match jump.raw_moments() {
                Some(m) => {
                    let var = m[1];
                    self.cp_scale = Some(1.0 / (lambda * var).sqrt());
                    self.cp_mean = m[0];
                }
                None => {
                    self.cp_scale = Some(1.0);
                    self.cp_mean = 0.0;
                }
            }
        }
    }

    pub fn kind(&self) -> &DriverKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_dim(&self, dim: usize) -> Self {
        let mut d = self.clone();
        d.dim = dim;
        d
    }

    pub fn label(&self) -> String {
        match &self.kind {
            DriverKind::Wiener => "wiener".to_string(),
            DriverKind::Nig { delta } => format!("nig(delta={delta})"),
            DriverKind::CompoundPoisson { lambda, jump } => format!("cp(lambda={lambda},{})", jump.id()),
        }
    }

    /// Draws `J_h` into `out` (length `dim`).
    pub fn sample_increment(&self, h: f64, rng: &mut RandomStream, out: &mut [f64]) -> Result<()> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidDuration(h));
        }
        self.sample_increment_unchecked(h, rng, out);
        Ok(())
    }

    #[inline]
    pub(crate) fn sample_increment_unchecked(&self, h: f64, rng: &mut RandomStream, out: &mut [f64]) {
        match &self.kind {
            DriverKind::Wiener => {
                let s = h.sqrt();
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = s * z;
                }
            }
            DriverKind::Nig { delta } => {
                let shape = (delta * h) * (delta * h);
                for o in out.iter_mut() {
                    let s = inverse_gaussian(h, shape, rng);
                    let z: f64 = StandardNormal.sample(rng);
                    *o = s.sqrt() * z;
                }
            }
            DriverKind::CompoundPoisson { lambda, jump } => {
                let scale = self.cp_scale.unwrap_or(1.0);
                let rate = lambda * h;
                let poisson = Poisson::new(rate).expect("positive Poisson rate");
                for o in out.iter_mut() {
                    let count: f64 = poisson.sample(rng);
                    let mut acc = 0.0;
                    for _ in 0..count as u64 {
                        acc += jump.sample(rng);
                    }
                    *o = scale * (acc - rate * self.cp_mean);
                }
            }
        }
    }

    /// Exact third and fourth mixed moments of the Levy measure.
    pub fn nu_moments(&self) -> Result<NuMoments> {
        let (nu3, nu4) = match &self.kind {
            DriverKind::Wiener => (0.0, 0.0),
            DriverKind::Nig { delta } => (0.0, 3.0 / (delta * delta)),
            DriverKind::CompoundPoisson { lambda, jump } => {
                let m = jump.raw_moments().ok_or_else(|| Error::MomentsUnavailable(jump.id().to_string()))?;
                let s = self.cp_scale.unwrap_or(1.0);
                // Levy measure is lambda * law(s Z): nu(m) = lambda s^m E[Z^m]
                (lambda * s.powi(3) * m[2], lambda * s.powi(4) * m[3])
            }
        };
        Ok(NuMoments::diagonal(self.dim, nu3, nu4))
    }
}

/// Inverse Gaussian draw with the given mean and shape (Michael, Schucany and
/// Haas transform). The root is taken in a cancellation-free form, which
/// matters when `mean / shape` is large (heavy-tailed NIG on fine grids).
#[inline]
pub fn inverse_gaussian(mean: f64, shape: f64, rng: &mut RandomStream) -> f64 {
    let v: f64 = StandardNormal.sample(rng);
    let y = v * v;
    let u: f64 = rng.random();
    if y == 0.0 {
        return mean;
    }
    let my = mean * y;
    let root = (my * my + 4.0 * mean * shape * y).sqrt();
    let denom = root + my;
    let x = 4.0 * mean * mean * shape * y / (denom * denom);
    if u <= mean / (mean + x) {
        x
    } else {
        mean * mean / x
    }
}

/// Third and fourth mixed moment tensors, stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuMoments {
    pub dim: usize,
    pub nu3: Vec<f64>,
    pub nu4: Vec<f64>,
}

impl NuMoments {
    pub fn diagonal(dim: usize, nu3: f64, nu4: f64) -> Self {
        let mut t3 = vec![0.0; dim.pow(3)];
        let mut t4 = vec![0.0; dim.pow(4)];
        for i in 0..dim {
            t3[i + dim * (i + dim * i)] = nu3;
            t4[i + dim * (i + dim * (i + dim * i))] = nu4;
        }
        Self { dim, nu3: t3, nu4: t4 }
    }

    #[inline]
    pub fn nu3(&self, i: usize, j: usize, k: usize) -> f64 {
        let r = self.dim;
        self.nu3[i + r * (j + r * k)]
    }

    #[inline]
    pub fn nu4(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let r = self.dim;
        self.nu4[i + r * (j + r * (k + r * l))]
    }

    pub fn nu3_is_zero(&self) -> bool {
        self.nu3.iter().all(|v| *v == 0.0)
    }

    pub fn nu4_is_zero(&self) -> bool {
        self.nu4.iter().all(|v| *v == 0.0)
    }
}
