//! Gaussian quasi-likelihood `Q_n`, quasi-score `G_n`, contrast `M_n` and the
//! random field `Z_n`.
//!
//! With `chi_j(alpha) = X_{t_j} - X_{t_{j-1}} - Delta_j t * a(X_{t_{j-1}}, alpha)`
//! and `V_{j-1}(beta) = V(X_{t_{j-1}}, beta)`:
//!
//! ```text
//! Q_n(theta)   = -sum_j { log|V_{j-1}| + V_{j-1}^{-1}[chi_j, chi_j] / Delta_j t }
//! G^a_n(theta) =  sum_j d_alpha a_{j-1}^T V_{j-1}^{-1} chi_j
//! G^b_n(theta) =  sum_j { -d_beta V_{j-1}^{-1}[chi_j, chi_j] - Delta_j t trace(V_{j-1}^{-1} d_beta V_{j-1}) }
//! M_n(theta)   = -|G_n(theta)|^2 / T_n
//! ```
//!
//! On an equidistant grid `G^a = (1/2) d_alpha Q_n` and `G^b = h_n d_beta Q_n`.
//! Every sum runs once over the observations with compensated accumulation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CompensatedSum};
use crate::model::{ModelSpec, ModelWorkspace, ThetaPoint};
use crate::simulate::Observations;

/// `G_n = (G^alpha_n, G^beta_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub g_alpha: Vec<f64>,
    pub g_beta: Vec<f64>,
}

impl ScoreValue {
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.g_alpha.clone();
        v.extend_from_slice(&self.g_beta);
        v
    }

    pub fn norm_sq(&self) -> f64 {
        self.g_alpha.iter().chain(&self.g_beta).map(|g| g * g).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.g_alpha.iter().chain(&self.g_beta).all(|g| g.is_finite())
    }
}

/// `M_n(theta)` together with the score and `Q_n(theta)` it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastValue {
    pub m: f64,
    pub score: ScoreValue,
    pub q: f64,
}

/// How much of the per-observation derivative information to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Level {
    Value,
    Score,
    Jacobian,
}

/// Per-observation quantities at a fixed `theta`, refreshed by [`Gql::prepare`].
#[derive(Debug, Clone)]
pub(crate) struct StepTerms {
    pub(crate) model: ModelWorkspace,
    pub(crate) chi: Vec<f64>,
    /// `V^{-1} chi`
    pub(crate) w: Vec<f64>,
    /// `V^{-1} d_alpha a`, `d x p_a`
    pub(crate) u: Vec<f64>,
    /// `V^{-1} d_beta_k V`, `p_b` blocks of `d x d`
    pub(crate) p: Vec<f64>,
    pub(crate) logdet: f64,
    pub(crate) dt: f64,
    scratch: Vec<f64>,
}

impl StepTerms {
    pub(crate) fn new(model: &ModelSpec) -> Self {
        let d = model.dim_x();
        Self {
            model: model.workspace(),
            chi: vec![0.0; d],
            w: vec![0.0; d],
            u: vec![0.0; d * model.dim_alpha()],
            p: vec![0.0; d * d * model.dim_beta()],
            logdet: 0.0,
            dt: 0.0,
            scratch: vec![0.0; d],
        }
    }
}

/// A quasi-likelihood bound to a data set and a model.
#[derive(Debug, Clone, Copy)]
pub struct Gql<'a> {
    obs: &'a Observations,
    model: &'a ModelSpec,
}

/// Output of one pass over the data.
#[derive(Debug, Clone, PartialEq)]
pub struct GqlEvaluation {
    pub q: f64,
    pub score: Option<ScoreValue>,
    /// `d G_n / d theta`, rows indexed by score components.
    pub jacobian: Option<DMatrix<f64>>,
}

impl<'a> Gql<'a> {
    pub fn new(obs: &'a Observations, model: &'a ModelSpec) -> Result<Self> {
        if obs.dim() != model.dim_x() {
            return Err(Error::Dimension(format!(
                "observations have dimension {}, model expects {}",
                obs.dim(),
                model.dim_x()
            )));
        }
        Ok(Self { obs, model })
    }

    pub fn observations(&self) -> &'a Observations {
        self.obs
    }

    pub fn model(&self) -> &'a ModelSpec {
        self.model
    }

    /// `T_n`.
    pub fn t_n(&self) -> f64 {
        self.obs.t_n()
    }

    /// `chi_j(alpha)` for `1 <= j <= n`.
    pub fn residual_chi(&self, j: usize, alpha: &[f64]) -> Result<Vec<f64>> {
        if j == 0 || j > self.obs.n() {
            return Err(Error::InvalidArgument(format!("increment index {j} outside 1..={}", self.obs.n())));
        }
        if alpha.len() != self.model.dim_alpha() {
            return Err(Error::Dimension("alpha has the wrong length".into()));
        }
        let x = self.obs.state(j - 1);
        let a = self.model.eval_a(x, alpha);
        let dt = self.obs.step(j);
        Ok(self.obs.state(j).iter().zip(x).zip(&a).map(|((xj, xp), ai)| xj - xp - dt * ai).collect())
    }

    /// Fills `terms` for increment `j` at `theta`.
    pub(crate) fn prepare(&self, j: usize, theta: &ThetaPoint, terms: &mut StepTerms, level: Level) -> Result<()> {
        let m = self.model;
        let d = m.dim_x();
        let x = self.obs.state(j - 1);
        let xn = self.obs.state(j);
        let dt = self.obs.step(j);
        terms.dt = dt;
        m.eval_drift(x, &theta.alpha, &mut terms.model);
        for i in 0..d {
            terms.chi[i] = xn[i] - x[i] - dt * terms.model.a[i];
        }
        m.eval_v_into(x, &theta.beta, &mut terms.model);
        terms.logdet = m.factor_v(x, &theta.beta, &mut terms.model)?;
        linalg::mat_vec(&terms.model.vinv, d, &terms.chi, &mut terms.w);
        if level >= Level::Score {
            m.eval_drift_dalpha(x, &theta.alpha, &mut terms.model);
            m.eval_dbeta_v(x, &theta.beta, &mut terms.model);
        }
        if level >= Level::Jacobian {
            m.eval_drift_dalpha2(x, &theta.alpha, &mut terms.model);
            m.eval_dbeta2_v(x, &theta.beta, &mut terms.model);
        }
        if level >= Level::Score {
            for k in 0..m.dim_alpha() {
                let (src, dst) = (&terms.model.da[k * d..(k + 1) * d], &mut terms.u[k * d..(k + 1) * d]);
                linalg::mat_vec(&terms.model.vinv, d, src, dst);
            }
            for k in 0..m.dim_beta() {
                linalg::mat_mul(
                    &terms.model.vinv,
                    &terms.model.dv[k * d * d..(k + 1) * d * d],
                    d,
                    &mut terms.p[k * d * d..(k + 1) * d * d],
                );
            }
        }
        Ok(())
    }

    fn check(&self, theta: &ThetaPoint) -> Result<()> {
        self.model.check_theta(theta)
    }

    /// One pass computing `Q_n` and, on request, `G_n` and `d G_n / d theta`.
    pub fn evaluate(&self, theta: &ThetaPoint, want_score: bool, want_jacobian: bool) -> Result<GqlEvaluation> {
        self.check(theta)?;
        let m = self.model;
        let (d, pa, pb) = (m.dim_x(), m.dim_alpha(), m.dim_beta());
        let p = pa + pb;
        let level = if want_jacobian {
            Level::Jacobian
        } else if want_score {
            Level::Score
        } else {
            Level::Value
        };
        if d == 1 {
            return self.evaluate_scalar(theta, level);
        }
        let mut terms = StepTerms::new(m);
        let mut q = CompensatedSum::default();
        let mut g = vec![CompensatedSum::default(); p];
        let mut jac = vec![CompensatedSum::default(); if want_jacobian { p * p } else { 0 }];
        let dd = d * d;
        for j in 1..=self.obs.n() {
            self.prepare(j, theta, &mut terms, level)?;
            let dt = terms.dt;
            let quad: f64 = terms.chi.iter().zip(&terms.w).map(|(c, w)| c * w).sum();
            q.add(-(terms.logdet + quad / dt));
            if level == Level::Value {
                continue;
            }
            let t = &terms;
            let mw = &t.model;
            // dV_k w, reused below
            for k in 0..pa {
                let da_k = &mw.da[k * d..(k + 1) * d];
                g[k].add(da_k.iter().zip(&t.w).map(|(a, w)| a * w).sum());
            }
            for k in 0..pb {
                let dv_k = &mw.dv[k * dd..(k + 1) * dd];
                let form = linalg::bilinear(dv_k, d, &t.w, &t.w);
                let tr: f64 = (0..d).map(|i| t.p[k * dd + i + i * d]).sum();
                g[pa + k].add(form - dt * tr);
            }
            if level == Level::Jacobian {
                self.accumulate_jacobian(&mut terms, &mut jac);
            }
        }
        let score = (level >= Level::Score).then(|| {
            let vals: Vec<f64> = g.iter().map(|s| s.value()).collect();
            ScoreValue { g_alpha: vals[..pa].to_vec(), g_beta: vals[pa..].to_vec() }
        });
        let jacobian = want_jacobian.then(|| DMatrix::from_fn(p, p, |r, c| jac[r + p * c].value()));
        Ok(GqlEvaluation { q: q.value(), score, jacobian })
    }

    /// `d = 1` specialization of [`Gql::evaluate`]; same formulas with scalar algebra.
    fn evaluate_scalar(&self, theta: &ThetaPoint, level: Level) -> Result<GqlEvaluation> {
        let m = self.model;
        let (pa, pb) = (m.dim_alpha(), m.dim_beta());
        let p = pa + pb;
        let mut ws = m.workspace();
        let mut q = CompensatedSum::default();
        let mut g = vec![CompensatedSum::default(); p];
        let want_jac = level == Level::Jacobian;
        let mut jac = vec![CompensatedSum::default(); if want_jac { p * p } else { 0 }];
        let idx = |r: usize, c: usize| r + p * c;
        let states = self.obs.states();
        let steps = self.obs.steps();
        for j in 1..=self.obs.n() {
            let x = &states[j - 1..j];
            let dt = steps[j - 1];
            m.eval_drift(x, &theta.alpha, &mut ws);
            let chi = states[j] - x[0] - dt * ws.a[0];
            m.eval_v_into(x, &theta.beta, &mut ws);
            let v = ws.v[0];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveDefinite { x: x.to_vec(), beta: theta.beta.clone() });
            }
            let vinv = 1.0 / v;
            let w = chi * vinv;
            q.add(-(v.ln() + chi * w / dt));
            if level == Level::Value {
                continue;
            }
            m.eval_drift_dalpha(x, &theta.alpha, &mut ws);
            m.eval_dbeta_v(x, &theta.beta, &mut ws);
            for k in 0..pa {
                g[k].add(ws.da[k] * w);
            }
            for k in 0..pb {
                g[pa + k].add(ws.dv[k] * (w * w - dt * vinv));
            }
            if !want_jac {
                continue;
            }
            m.eval_drift_dalpha2(x, &theta.alpha, &mut ws);
            m.eval_dbeta2_v(x, &theta.beta, &mut ws);
            for k in 0..pa {
                for l in 0..pa {
                    jac[idx(k, l)].add(ws.da2[k + pa * l] * w - dt * ws.da[k] * ws.da[l] * vinv);
                }
                for mm in 0..pb {
                    jac[idx(k, pa + mm)].add(-ws.da[k] * vinv * ws.dv[mm] * w);
                }
            }
            for k in 0..pb {
                for l in 0..pa {
                    jac[idx(pa + k, l)].add(-2.0 * dt * ws.da[l] * vinv * ws.dv[k] * w);
                }
                for mm in 0..pb {
                    let dv2 = ws.dv2[k + pb * mm];
                    let (dk, dm) = (ws.dv[k], ws.dv[mm]);
                    let val = dv2 * w * w - 2.0 * dm * dk * vinv * w * w - dt * (dv2 * vinv - dm * dk * vinv * vinv);
                    jac[idx(pa + k, pa + mm)].add(val);
                }
            }
        }
        let score = (level >= Level::Score).then(|| {
            let vals: Vec<f64> = g.iter().map(|s| s.value()).collect();
            ScoreValue { g_alpha: vals[..pa].to_vec(), g_beta: vals[pa..].to_vec() }
        });
        let jacobian = want_jac.then(|| DMatrix::from_fn(p, p, |r, c| jac[r + p * c].value()));
        Ok(GqlEvaluation { q: q.value(), score, jacobian })
    }

    fn accumulate_jacobian(&self, terms: &mut StepTerms, jac: &mut [CompensatedSum]) {
        let m = self.model;
        let (d, pa, pb) = (m.dim_x(), m.dim_alpha(), m.dim_beta());
        let p = pa + pb;
        let dd = d * d;
        let dt = terms.dt;
        let StepTerms { model: mw, w, u, p: pm, scratch, .. } = terms;
        let idx = |r: usize, c: usize| r + p * c;
        for k in 0..pa {
            let da_k = &mw.da[k * d..(k + 1) * d];
            for l in 0..pa {
                let da2_kl = &mw.da2[d * (k + pa * l)..d * (k + pa * l) + d];
                let second: f64 = da2_kl.iter().zip(w.iter()).map(|(a, w)| a * w).sum();
                let u_l = &u[l * d..(l + 1) * d];
                let info: f64 = da_k.iter().zip(u_l).map(|(a, b)| a * b).sum();
                jac[idx(k, l)].add(second - dt * info);
            }
            let u_k = &u[k * d..(k + 1) * d];
            for mm in 0..pb {
                let dv_m = &mw.dv[mm * dd..(mm + 1) * dd];
                jac[idx(k, pa + mm)].add(-linalg::bilinear(dv_m, d, u_k, w));
            }
        }
        for k in 0..pb {
            let dv_k = &mw.dv[k * dd..(k + 1) * dd];
            for l in 0..pa {
                let u_l = &u[l * d..(l + 1) * d];
                jac[idx(pa + k, l)].add(-2.0 * dt * linalg::bilinear(dv_k, d, u_l, w));
            }
            let p_k = &pm[k * dd..(k + 1) * dd];
            for mm in 0..pb {
                let dv2 = &mw.dv2[dd * (k + pb * mm)..dd * (k + pb * mm) + dd];
                let p_m = &pm[mm * dd..(mm + 1) * dd];
                linalg::mat_vec(p_m, d, w, scratch);
                let cross = linalg::bilinear(dv_k, d, scratch, w);
                let tr_second = linalg::trace_prod(&mw.vinv, dv2, d);
                let tr_pp = linalg::trace_prod(p_m, p_k, d);
                let val = linalg::bilinear(dv2, d, w, w) - 2.0 * cross - dt * (tr_second - tr_pp);
                jac[idx(pa + k, pa + mm)].add(val);
            }
        }
    }

    /// `Q_n(theta)`.
    pub fn quasi_loglik(&self, theta: &ThetaPoint) -> Result<f64> {
        Ok(self.evaluate(theta, false, false)?.q)
    }

    /// `G_n(theta)`.
    pub fn quasi_score(&self, theta: &ThetaPoint) -> Result<ScoreValue> {
        Ok(self.evaluate(theta, true, false)?.score.expect("score requested"))
    }

    /// `M_n(theta) = -|G_n(theta)|^2 / T_n`.
    pub fn contrast(&self, theta: &ThetaPoint) -> Result<ContrastValue> {
        let e = self.evaluate(theta, true, false)?;
        let score = e.score.expect("score requested");
        Ok(ContrastValue { m: -score.norm_sq() / self.t_n(), score, q: e.q })
    }

    /// `d G_n / d theta`.
    pub fn score_jacobian(&self, theta: &ThetaPoint) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(theta, true, true)?.jacobian.expect("jacobian requested"))
    }

    /// `Z_n(u) = exp{M_n(theta0 + u / sqrt(T_n)) - M_n(theta0)}`.
    pub fn random_field_z(&self, theta0: &ThetaPoint, u: &[f64]) -> Result<f64> {
        let m0 = self.contrast(theta0)?.m;
        self.random_field_z_from(theta0, m0, u)
    }

    /// `Z_n(u)` given a precomputed `M_n(theta0)`.
    pub fn random_field_z_from(&self, theta0: &ThetaPoint, m0: f64, u: &[f64]) -> Result<f64> {
        self.check(theta0)?;
        let pa = self.model.dim_alpha();
        if u.len() != theta0.dim() {
            return Err(Error::Dimension("u has the wrong length".into()));
        }
        if u.iter().all(|v| *v == 0.0) {
            return Ok(1.0);
        }
        let scale = self.t_n().sqrt();
        let shifted: Vec<f64> = theta0.stacked().iter().zip(u).map(|(t, v)| t + v / scale).collect();
        if !self.model.param_box().contains(&shifted) {
            return Err(Error::DomainExceeded);
        }
        let m = self.contrast(&ThetaPoint::from_stacked(&shifted, pa))?.m;
        Ok((m - m0).exp())
    }
}

/// `chi_j(alpha)`.
pub fn residual_chi(obs: &Observations, model: &ModelSpec, j: usize, alpha: &[f64]) -> Result<Vec<f64>> {
    Gql::new(obs, model)?.residual_chi(j, alpha)
}

/// `Q_n(theta)`.
pub fn quasi_loglik(obs: &Observations, model: &ModelSpec, theta: &ThetaPoint) -> Result<f64> {
    Gql::new(obs, model)?.quasi_loglik(theta)
}

/// `G_n(theta)`.
pub fn quasi_score(obs: &Observations, model: &ModelSpec, theta: &ThetaPoint) -> Result<ScoreValue> {
    Gql::new(obs, model)?.quasi_score(theta)
}

/// `M_n(theta)`.
pub fn contrast(obs: &Observations, model: &ModelSpec, theta: &ThetaPoint) -> Result<ContrastValue> {
    Gql::new(obs, model)?.contrast(theta)
}

/// `Z_n(u)` around `theta0`.
pub fn random_field_z(obs: &Observations, model: &ModelSpec, theta0: &ThetaPoint, u: &[f64]) -> Result<f64> {
    Gql::new(obs, model)?.random_field_z(theta0, u)
}

/// `d G_n / d theta`.
pub fn score_jacobian(obs: &Observations, model: &ModelSpec, theta: &ThetaPoint) -> Result<DMatrix<f64>> {
    Gql::new(obs, model)?.score_jacobian(theta)
}
