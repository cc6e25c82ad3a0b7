//! Parametric SDE `dX = a(X, alpha) dt + b(X, beta) dW + c(X-, beta) dJ`.
//!
//! Coefficients are plain callables writing into caller-owned column-major
//! buffers: `f(x, param, out)`. Matrix-valued outputs follow these layouts:
//!
//! | callable        | shape                 | index of entry                 |
//! |-----------------|-----------------------|--------------------------------|
//! | `drift`         | `d`                   | `i`                            |
//! | `drift_dalpha`  | `d x p_a`             | `i + d*k`                      |
//! | `drift_dalpha2` | `d x p_a x p_a`       | `i + d*(k + p_a*l)`            |
//! | `diffusion`     | `d x r'`              | `i + d*k`                      |
//! | `jump_coef`     | `d x r''`             | `i + d*k`                      |
//! | `dbeta_v`       | `p_b` blocks `d x d`  | `i + d*j + d*d*k`              |
//! | `dbeta2_v`      | `p_b x p_b` blocks    | `i + d*j + d*d*(k + p_b*l)`    |
//!
//! Missing derivative callables are replaced by central differences and the
//! substitution is reported by [`ModelSpec::finite_difference_flags`].

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub type CoefFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Relative step of the central-difference fallback: `1e-6 * (1 + |theta_k|)`.
pub const FD_STEP: f64 = 1e-6;
/// Outer step used when a second derivative is differenced from a first
/// derivative that is itself differenced.
const FD_STEP_NESTED: f64 = 1e-4;

/// Hyper-rectangular parameter domain over the stacked vector `(alpha, beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    split: usize,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, split: usize) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if split == 0 || split >= lower.len() {
            return Err(Error::Dimension(format!(
                "alpha block size {split} invalid for a box of dimension {}",
                lower.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidArgument("box requires finite lower < upper componentwise".into()));
        }
        Ok(Self { lower, upper, split })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn dim_alpha(&self) -> usize {
        self.split
    }

    /// Closed-box membership.
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(self.lower.iter().zip(&self.upper)).all(|(t, (l, u))| *t >= *l && *t <= *u)
    }

    pub fn project(&self, theta: &mut [f64]) {
        for (t, (l, u)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *t = t.clamp(*l, *u);
        }
    }

    /// True when some coordinate sits within `rel_tol * width` of a face.
    pub fn on_boundary(&self, theta: &[f64], rel_tol: f64) -> bool {
        theta.iter().zip(self.lower.iter().zip(&self.upper)).any(|(t, (l, u))| {
            let tol = rel_tol * (u - l);
            *t - *l <= tol || *u - *t <= tol
        })
    }

    /// Maps a point of the unit cube onto the box.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(s, (l, u))| l + s * (u - l))
            .collect()
    }
}

/// A parameter value split into drift and dispersion blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ThetaPoint {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Self {
        Self { alpha, beta }
    }

    pub fn from_stacked(theta: &[f64], dim_alpha: usize) -> Self {
        Self { alpha: theta[..dim_alpha].to_vec(), beta: theta[dim_alpha..].to_vec() }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn dim(&self) -> usize {
        self.alpha.len() + self.beta.len()
    }
}

/// Which derivatives are computed by central differences instead of analytic callables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FiniteDifferenceFlags {
    pub drift_dalpha: bool,
    pub drift_dalpha2: bool,
    pub dbeta_v: bool,
    pub dbeta2_v: bool,
}

impl FiniteDifferenceFlags {
    pub fn any(&self) -> bool {
        self.drift_dalpha || self.drift_dalpha2 || self.dbeta_v || self.dbeta2_v
    }
}

/// The coefficient triple `(a, b, c)`, its dimensions and parameter box.
///
/// Immutable once built; evaluation only touches a caller-owned
/// [`ModelWorkspace`], so one model can be shared across threads.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim_x: usize,
    dim_w: usize,
    dim_j: usize,
    dim_alpha: usize,
    dim_beta: usize,
    drift: CoefFn,
    drift_dalpha: Option<CoefFn>,
    drift_dalpha2: Option<CoefFn>,
    diffusion: Option<CoefFn>,
    jump_coef: Option<CoefFn>,
    dbeta_v: Option<CoefFn>,
    dbeta2_v: Option<CoefFn>,
    param_box: ParamBox,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim_x", &self.dim_x)
            .field("dim_w", &self.dim_w)
            .field("dim_j", &self.dim_j)
            .field("dim_alpha", &self.dim_alpha)
            .field("dim_beta", &self.dim_beta)
            .field("finite_differences", &self.finite_difference_flags())
            .field("param_box", &self.param_box)
            .finish()
    }
}

pub struct ModelBuilder {
    name: String,
    dim_x: usize,
    dim_alpha: usize,
    dim_beta: usize,
    dim_w: usize,
    dim_j: usize,
    drift: Option<CoefFn>,
    drift_dalpha: Option<CoefFn>,
    drift_dalpha2: Option<CoefFn>,
    diffusion: Option<CoefFn>,
    jump_coef: Option<CoefFn>,
    dbeta_v: Option<CoefFn>,
    dbeta2_v: Option<CoefFn>,
    param_box: Option<ParamBox>,
}

impl ModelBuilder {
    pub fn drift(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn drift_dalpha(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift_dalpha = Some(Arc::new(f));
        self
    }

    pub fn drift_dalpha2(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift_dalpha2 = Some(Arc::new(f));
        self
    }

    /// Wiener coefficient `b` with `dim_w` columns.
    pub fn diffusion(
        mut self,
        dim_w: usize,
        f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.dim_w = dim_w;
        self.diffusion = Some(Arc::new(f));
        self
    }

    /// Jump coefficient `c` with `dim_j` columns.
    pub fn jumps(mut self, dim_j: usize, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.dim_j = dim_j;
        self.jump_coef = Some(Arc::new(f));
        self
    }

    pub fn dbeta_v(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.dbeta_v = Some(Arc::new(f));
        self
    }

    pub fn dbeta2_v(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.dbeta2_v = Some(Arc::new(f));
        self
    }

    pub fn param_box(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        self.param_box = Some(ParamBox::new(lower, upper, self.dim_alpha)?);
        Ok(self)
    }

    pub fn build(self) -> Result<ModelSpec> {
        let drift = self.drift.ok_or_else(|| Error::InvalidArgument("model needs a drift".into()))?;
        let param_box =
            self.param_box.ok_or_else(|| Error::InvalidArgument("model needs a parameter box".into()))?;
        if self.dim_x == 0 || self.dim_alpha == 0 || self.dim_beta == 0 {
            return Err(Error::Dimension("dim_x, dim_alpha and dim_beta must be positive".into()));
        }
        if param_box.dim() != self.dim_alpha + self.dim_beta || param_box.dim_alpha() != self.dim_alpha {
            return Err(Error::Dimension("parameter box does not match (dim_alpha, dim_beta)".into()));
        }
        if self.jump_coef.is_none() && self.diffusion.is_none() {
            return Err(Error::InvalidArgument("model needs a diffusion or a jump coefficient".into()));
        }
        Ok(ModelSpec {
            name: self.name,
            dim_x: self.dim_x,
            dim_w: if self.diffusion.is_some() { self.dim_w } else { 0 },
            dim_j: if self.jump_coef.is_some() { self.dim_j } else { 0 },
            dim_alpha: self.dim_alpha,
            dim_beta: self.dim_beta,
            drift,
            drift_dalpha: self.drift_dalpha,
            drift_dalpha2: self.drift_dalpha2,
            diffusion: self.diffusion,
            jump_coef: self.jump_coef,
            dbeta_v: self.dbeta_v,
            dbeta2_v: self.dbeta2_v,
            param_box,
        })
    }
}

/// Scratch buffers for coefficient evaluation. One per thread.
#[derive(Debug, Clone)]
pub struct ModelWorkspace {
    pub(crate) a: Vec<f64>,
    pub(crate) da: Vec<f64>,
    pub(crate) da2: Vec<f64>,
    pub(crate) b: Vec<f64>,
    pub(crate) c: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) chol: Vec<f64>,
    pub(crate) vinv: Vec<f64>,
    pub(crate) dv: Vec<f64>,
    pub(crate) dv2: Vec<f64>,
    param: Vec<f64>,
    plus: Vec<f64>,
    minus: Vec<f64>,
    inner_plus: Vec<f64>,
    inner_minus: Vec<f64>,
}

impl ModelSpec {
    pub fn builder(name: impl Into<String>, dim_x: usize, dim_alpha: usize, dim_beta: usize) -> ModelBuilder {
        ModelBuilder {
            name: name.into(),
            dim_x,
            dim_alpha,
            dim_beta,
            dim_w: 0,
            dim_j: 0,
            drift: None,
            drift_dalpha: None,
            drift_dalpha2: None,
            diffusion: None,
            jump_coef: None,
            dbeta_v: None,
            dbeta2_v: None,
            param_box: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim_x(&self) -> usize {
        self.dim_x
    }
    pub fn dim_w(&self) -> usize {
        self.dim_w
    }
    pub fn dim_j(&self) -> usize {
        self.dim_j
    }
    pub fn dim_alpha(&self) -> usize {
        self.dim_alpha
    }
    pub fn dim_beta(&self) -> usize {
        self.dim_beta
    }
    pub fn dim_theta(&self) -> usize {
        self.dim_alpha + self.dim_beta
    }
    pub fn param_box(&self) -> &ParamBox {
        &self.param_box
    }

    /// Same coefficients on a different box.
    pub fn with_param_box(&self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let mut m = self.clone();
        m.param_box = ParamBox::new(lower, upper, self.dim_alpha)?;
        Ok(m)
    }

    pub fn finite_difference_flags(&self) -> FiniteDifferenceFlags {
        FiniteDifferenceFlags {
            drift_dalpha: self.drift_dalpha.is_none(),
            drift_dalpha2: self.drift_dalpha2.is_none(),
            dbeta_v: self.dbeta_v.is_none(),
            dbeta2_v: self.dbeta2_v.is_none(),
        }
    }

    pub fn check_theta(&self, theta: &ThetaPoint) -> Result<()> {
        if theta.alpha.len() != self.dim_alpha || theta.beta.len() != self.dim_beta {
            return Err(Error::Dimension(format!(
                "theta has blocks ({}, {}), model expects ({}, {})",
                theta.alpha.len(),
                theta.beta.len(),
                self.dim_alpha,
                self.dim_beta
            )));
        }
        Ok(())
    }

    pub fn workspace(&self) -> ModelWorkspace {
        let (d, pa, pb) = (self.dim_x, self.dim_alpha, self.dim_beta);
        let big = (d * d * pb * pb).max(d * pa * pa).max(d * d * pb).max(d * pa).max(d * d);
        ModelWorkspace {
            a: vec![0.0; d],
            da: vec![0.0; d * pa],
            da2: vec![0.0; d * pa * pa],
            b: vec![0.0; d * self.dim_w.max(1)],
            c: vec![0.0; d * self.dim_j.max(1)],
            v: vec![0.0; d * d],
            chol: vec![0.0; d * d],
            vinv: vec![0.0; d * d],
            dv: vec![0.0; d * d * pb],
            dv2: vec![0.0; d * d * pb * pb],
            param: vec![0.0; pa.max(pb)],
            plus: vec![0.0; big],
            minus: vec![0.0; big],
            inner_plus: vec![0.0; big],
            inner_minus: vec![0.0; big],
        }
    }

    // Raw coefficient calls.

    #[inline]
    pub fn drift_into(&self, x: &[f64], alpha: &[f64], out: &mut [f64]) {
        (self.drift)(x, alpha, out)
    }

    #[inline]
    pub fn diffusion_into(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Some(f) => f(x, beta, out),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    #[inline]
    pub fn jump_coef_into(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        match &self.jump_coef {
            Some(f) => f(x, beta, out),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    fn v_raw(&self, x: &[f64], beta: &[f64], b: &mut [f64], c: &mut [f64], out: &mut [f64]) {
        let d = self.dim_x;
        if d == 1 {
            let mut v = 0.0;
            if let Some(f) = &self.diffusion {
                f(x, beta, &mut b[..self.dim_w]);
                v += b[..self.dim_w].iter().map(|e| e * e).sum::<f64>();
            }
            if let Some(f) = &self.jump_coef {
                f(x, beta, &mut c[..self.dim_j]);
                v += c[..self.dim_j].iter().map(|e| e * e).sum::<f64>();
            }
            out[0] = v;
            return;
        }
        out[..d * d].iter_mut().for_each(|v| *v = 0.0);
        if let Some(f) = &self.diffusion {
            f(x, beta, &mut b[..d * self.dim_w]);
            linalg::add_outer_self(b, d, self.dim_w, out, true);
        }
        if let Some(f) = &self.jump_coef {
            f(x, beta, &mut c[..d * self.dim_j]);
            linalg::add_outer_self(c, d, self.dim_j, out, true);
        }
        // exact symmetry
        for i in 0..d {
            for j in (i + 1)..d {
                let m = 0.5 * (out[i + j * d] + out[j + i * d]);
                out[i + j * d] = m;
                out[j + i * d] = m;
            }
        }
    }

    /// Drift into `ws.a`.
    #[inline]
    pub fn eval_drift(&self, x: &[f64], alpha: &[f64], ws: &mut ModelWorkspace) {
        (self.drift)(x, alpha, &mut ws.a);
    }

    /// `V(x, beta) = b b^T + c c^T` into `ws.v`; also leaves `b`, `c` in `ws.b`, `ws.c`.
    #[inline]
    pub fn eval_v_into(&self, x: &[f64], beta: &[f64], ws: &mut ModelWorkspace) {
        self.v_raw(x, beta, &mut ws.b, &mut ws.c, &mut ws.v);
    }

    /// Factorizes `ws.v`, filling `ws.chol`, `ws.vinv`; returns `log |V|`.
    pub fn factor_v(&self, x: &[f64], beta: &[f64], ws: &mut ModelWorkspace) -> Result<f64> {
        let d = self.dim_x;
        if d == 1 {
            let v = ws.v[0];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveDefinite { x: x.to_vec(), beta: beta.to_vec() });
            }
            ws.chol[0] = v.sqrt();
            ws.vinv[0] = 1.0 / v;
            return Ok(v.ln());
        }
        ws.chol.copy_from_slice(&ws.v);
        if !linalg::cholesky_in_place(&mut ws.chol, d) {
            return Err(Error::NonPositiveDefinite { x: x.to_vec(), beta: beta.to_vec() });
        }
        linalg::chol_inverse(&ws.chol, d, &mut ws.vinv);
        Ok(linalg::chol_logdet(&ws.chol, d))
    }

    /// `d a / d alpha` into `ws.da`.
    pub fn eval_drift_dalpha(&self, x: &[f64], alpha: &[f64], ws: &mut ModelWorkspace) {
        match &self.drift_dalpha {
            Some(f) => f(x, alpha, &mut ws.da),
            None => {
                let d = self.dim_x;
                let ModelWorkspace { da, param, plus, minus, .. } = ws;
                fd_jacobian(&*self.drift, x, alpha, d, FD_STEP, param, plus, minus, da);
            }
        }
    }

    /// Second drift derivatives into `ws.da2`.
    pub fn eval_drift_dalpha2(&self, x: &[f64], alpha: &[f64], ws: &mut ModelWorkspace) {
        if let Some(f) = &self.drift_dalpha2 {
            f(x, alpha, &mut ws.da2);
            return;
        }
        let d = self.dim_x;
        let pa = self.dim_alpha;
        let n = d * pa;
        let ModelWorkspace { da2, param, plus, minus, inner_plus, inner_minus, .. } = ws;
        param[..pa].copy_from_slice(alpha);
        let step_base = if self.drift_dalpha.is_some() { FD_STEP } else { FD_STEP_NESTED };
        for l in 0..pa {
            let h = step_base * (1.0 + alpha[l].abs());
            param[l] = alpha[l] + h;
            self.first_drift_derivative(x, &param[..pa], &mut plus[..n], inner_plus, inner_minus);
            param[l] = alpha[l] - h;
            self.first_drift_derivative(x, &param[..pa], &mut minus[..n], inner_plus, inner_minus);
            param[l] = alpha[l];
            for m in 0..n {
                da2[m + n * l] = (plus[m] - minus[m]) / (2.0 * h);
            }
        }
    }

    fn first_drift_derivative(&self, x: &[f64], alpha: &[f64], out: &mut [f64], sp: &mut [f64], sm: &mut [f64]) {
        match &self.drift_dalpha {
            Some(f) => f(x, alpha, out),
            None => {
                let mut p = alpha.to_vec();
                fd_jacobian(&*self.drift, x, alpha, self.dim_x, FD_STEP, &mut p, sp, sm, out);
            }
        }
    }

    /// `d V / d beta` into `ws.dv`.
    pub fn eval_dbeta_v(&self, x: &[f64], beta: &[f64], ws: &mut ModelWorkspace) {
        match &self.dbeta_v {
            Some(f) => f(x, beta, &mut ws.dv),
            None => {
                let d = self.dim_x;
                let pb = self.dim_beta;
                let ModelWorkspace { dv, param, plus, minus, b, c, .. } = ws;
                param[..pb].copy_from_slice(beta);
                for k in 0..pb {
                    let h = FD_STEP * (1.0 + beta[k].abs());
                    param[k] = beta[k] + h;
                    self.v_raw(x, &param[..pb], b, c, plus);
                    param[k] = beta[k] - h;
                    self.v_raw(x, &param[..pb], b, c, minus);
                    param[k] = beta[k];
                    for m in 0..d * d {
                        dv[m + d * d * k] = (plus[m] - minus[m]) / (2.0 * h);
                    }
                }
            }
        }
    }

    /// Second `beta` derivatives of `V` into `ws.dv2`.
    pub fn eval_dbeta2_v(&self, x: &[f64], beta: &[f64], ws: &mut ModelWorkspace) {
        if let Some(f) = &self.dbeta2_v {
            f(x, beta, &mut ws.dv2);
            return;
        }
        let d = self.dim_x;
        let pb = self.dim_beta;
        let n = d * d * pb;
        let mut p = beta.to_vec();
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        let step_base = if self.dbeta_v.is_some() { FD_STEP } else { FD_STEP_NESTED };
        for l in 0..pb {
            let h = step_base * (1.0 + beta[l].abs());
            p[l] = beta[l] + h;
            self.first_v_derivative(x, &p, &mut plus);
            p[l] = beta[l] - h;
            self.first_v_derivative(x, &p, &mut minus);
            p[l] = beta[l];
            for m in 0..n {
                ws.dv2[m + n * l] = (plus[m] - minus[m]) / (2.0 * h);
            }
        }
    }

    fn first_v_derivative(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        match &self.dbeta_v {
            Some(f) => f(x, beta, out),
            None => {
                let mut ws = self.workspace();
                self.eval_dbeta_v(x, beta, &mut ws);
                out.copy_from_slice(&ws.dv);
            }
        }
    }

    // Allocating convenience API.

    pub fn eval_a(&self, x: &[f64], alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x];
        (self.drift)(x, alpha, &mut out);
        out
    }

    /// `V(x, beta)`, checked for positive definiteness.
    pub fn eval_v(&self, x: &[f64], beta: &[f64]) -> Result<DMatrix<f64>> {
        let mut ws = self.workspace();
        self.eval_v_into(x, beta, &mut ws);
        self.factor_v(x, beta, &mut ws)?;
        Ok(DMatrix::from_column_slice(self.dim_x, self.dim_x, &ws.v))
    }

    /// `(V^{-1}, log |V|)` via Cholesky.
    pub fn eval_v_inverse_and_logdet(&self, x: &[f64], beta: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        let mut ws = self.workspace();
        self.eval_v_into(x, beta, &mut ws);
        let logdet = self.factor_v(x, beta, &mut ws)?;
        Ok((DMatrix::from_column_slice(self.dim_x, self.dim_x, &ws.vinv), logdet))
    }

    /// `d a / d alpha` as a `d x p_a` matrix.
    pub fn eval_da(&self, x: &[f64], alpha: &[f64]) -> DMatrix<f64> {
        let mut ws = self.workspace();
        self.eval_drift_dalpha(x, alpha, &mut ws);
        DMatrix::from_column_slice(self.dim_x, self.dim_alpha, &ws.da)
    }

    /// `d V / d beta_k` for each `k`.
    pub fn eval_dv(&self, x: &[f64], beta: &[f64]) -> Vec<DMatrix<f64>> {
        let mut ws = self.workspace();
        self.eval_dbeta_v(x, beta, &mut ws);
        let d = self.dim_x;
        ws.dv.chunks(d * d).map(|c| DMatrix::from_column_slice(d, d, c)).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn fd_jacobian(
    f: &(dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync),
    x: &[f64],
    param: &[f64],
    out_dim: usize,
    step: f64,
    tmp: &mut [f64],
    plus: &mut [f64],
    minus: &mut [f64],
    out: &mut [f64],
) {
    let p = param.len();
    tmp[..p].copy_from_slice(param);
    for k in 0..p {
        let h = step * (1.0 + param[k].abs());
        tmp[k] = param[k] + h;
        f(x, &tmp[..p], &mut plus[..out_dim]);
        tmp[k] = param[k] - h;
        f(x, &tmp[..p], &mut minus[..out_dim]);
        tmp[k] = param[k];
        for i in 0..out_dim {
            out[i + out_dim * k] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
}

/// Identifiers of the built-in models.
pub const BUILTIN_MODELS: [&str; 4] = ["nig-hyperbolic", "diffusion-hyperbolic", "ou-levy", "ou-scalar"];

/// Looks up a built-in model by id.
///
/// * `nig-hyperbolic`: `dX = -alpha X / sqrt(1 + X^2) dt + sqrt(beta) dJ`.
/// * `diffusion-hyperbolic`: the same drift with `sqrt(beta) dW` and `c = 0`.
/// * `ou-levy`: `dX = -alpha X dt + beta1 dW + beta2 dJ`.
/// * `ou-scalar`: `dX = -alpha X dt + sqrt(beta) dJ`.
///
/// All use the box `[0.1, 5]` in every coordinate.
pub fn builtin(id: &str) -> Result<ModelSpec> {
    match id {
        "nig-hyperbolic" => ModelSpec::builder(id, 1, 1, 1)
            .drift(|x, a, out| out[0] = -a[0] * x[0] / (1.0 + x[0] * x[0]).sqrt())
            .drift_dalpha(|x, _a, out| out[0] = -x[0] / (1.0 + x[0] * x[0]).sqrt())
            .drift_dalpha2(|_x, _a, out| out[0] = 0.0)
            .jumps(1, |_x, b, out| out[0] = b[0].max(0.0).sqrt())
            .dbeta_v(|_x, _b, out| out[0] = 1.0)
            .dbeta2_v(|_x, _b, out| out[0] = 0.0)
            .param_box(vec![0.1, 0.1], vec![5.0, 5.0])?
            .build(),
        "diffusion-hyperbolic" => ModelSpec::builder(id, 1, 1, 1)
            .drift(|x, a, out| out[0] = -a[0] * x[0] / (1.0 + x[0] * x[0]).sqrt())
            .drift_dalpha(|x, _a, out| out[0] = -x[0] / (1.0 + x[0] * x[0]).sqrt())
            .drift_dalpha2(|_x, _a, out| out[0] = 0.0)
            .diffusion(1, |_x, b, out| out[0] = b[0].max(0.0).sqrt())
            .jumps(1, |_x, _b, out| out[0] = 0.0)
            .dbeta_v(|_x, _b, out| out[0] = 1.0)
            .dbeta2_v(|_x, _b, out| out[0] = 0.0)
            .param_box(vec![0.1, 0.1], vec![5.0, 5.0])?
            .build(),
        "ou-levy" => ModelSpec::builder(id, 1, 1, 2)
            .drift(|x, a, out| out[0] = -a[0] * x[0])
            .drift_dalpha(|x, _a, out| out[0] = -x[0])
            .drift_dalpha2(|_x, _a, out| out[0] = 0.0)
            .diffusion(1, |_x, b, out| out[0] = b[0])
            .jumps(1, |_x, b, out| out[0] = b[1])
            .dbeta_v(|_x, b, out| {
                out[0] = 2.0 * b[0];
                out[1] = 2.0 * b[1];
            })
            .dbeta2_v(|_x, _b, out| {
                out[0] = 2.0;
                out[1] = 0.0;
                out[2] = 0.0;
                out[3] = 2.0;
            })
            .param_box(vec![0.1, 0.1, 0.1], vec![5.0, 5.0, 5.0])?
            .build(),
        "ou-scalar" => ModelSpec::builder(id, 1, 1, 1)
            .drift(|x, a, out| out[0] = -a[0] * x[0])
            .drift_dalpha(|x, _a, out| out[0] = -x[0])
            .drift_dalpha2(|_x, _a, out| out[0] = 0.0)
            .jumps(1, |_x, b, out| out[0] = b[0].max(0.0).sqrt())
            .dbeta_v(|_x, _b, out| out[0] = 1.0)
            .dbeta2_v(|_x, _b, out| out[0] = 0.0)
            .param_box(vec![0.1, 0.1], vec![5.0, 5.0])?
            .build(),
        other => Err(Error::Unknown { kind: "model", name: other.to_string() }),
    }
}
