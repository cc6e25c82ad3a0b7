//! Limit objects by ergodic averaging, identifiability scans, efficiency loss
//! and one-dimensional ergodicity screens.
//!
//! Integrals against the invariant law are replaced by averages over the
//! observation grid of one long simulated path. At state `x` (all at
//! `theta0`), with `dV^{-1}_m[y, z] = -(V^{-1} y)^T d_m V (V^{-1} z)`:
//!
//! ```text
//! G'a[k,l] = -d_k a^T V^{-1} d_l a
//! G'b[k,l] = -trace(V^{-1} d_k V V^{-1} d_l V)
//! Vab[k,m] = -sum nu3[k',l',s'] (d_k a^T V^{-1} c_s') dV^{-1}_m[c_k', c_l']
//! Vbb[k,m] =  sum nu4[s,t,s',t'] dV^{-1}_k[c_s, c_t] dV^{-1}_m[c_s', c_t']
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::avar::assemble_sigma;
use crate::error::{Error, Result};
use crate::levy_driver::{DriverKind, JumpLaw, LevyDriver, NuMoments};
use crate::linalg::{self, CompensatedSum};
use crate::model::{ModelSpec, ThetaPoint};
use crate::simulate::{self, Observations, PathStreams, SamplingDesign};

pub const DEFAULT_AVERAGING_T: f64 = 5000.0;
pub const DEFAULT_H_AVG: f64 = 0.01;
pub const DEFAULT_LIMIT_BURN_IN: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    pub g_inf_prime_alpha: DMatrix<f64>,
    pub g_inf_prime_beta: DMatrix<f64>,
    pub v_alpha_beta: DMatrix<f64>,
    pub v_beta_beta: DMatrix<f64>,
    pub sigma0: DMatrix<f64>,
    pub averaging_t: f64,
    pub nu_moments_used: NuMoments,
}

/// Long path at `theta0` started from the origin after a burn-in of
/// [`DEFAULT_LIMIT_BURN_IN`]; its observation grid stands in for the
/// invariant law.
pub fn stationary_path(
    model: &ModelSpec,
    theta0: &ThetaPoint,
    driver: &LevyDriver,
    averaging_t: f64,
    h_avg: f64,
    seed: u64,
) -> Result<Observations> {
    model.check_theta(theta0)?;
    let design = SamplingDesign::new(averaging_t, h_avg).with_burn_in(Some(DEFAULT_LIMIT_BURN_IN));
    let x0 = vec![0.0; model.dim_x()];
    simulate::simulate_observations(model, theta0, &x0, &design, driver, &mut PathStreams::replication(seed, 0))
}

/// Simulates a long path and averages the limit integrands along it.
pub fn population_limits(
    model: &ModelSpec,
    theta0: &ThetaPoint,
    driver: &LevyDriver,
    averaging_t: f64,
    h_avg: f64,
    seed: u64,
) -> Result<LimitReport> {
    let nu = driver.nu_moments()?;
    let path = stationary_path(model, theta0, driver, averaging_t, h_avg, seed)?;
    limits_on_path(model, theta0, &nu, &path)
}

/// Limit objects averaged over the states of `path` (the last one excluded).
pub fn limits_on_path(model: &ModelSpec, theta0: &ThetaPoint, nu: &NuMoments, path: &Observations) -> Result<LimitReport> {
    model.check_theta(theta0)?;
    let (d, pa, pb, r) = (model.dim_x(), model.dim_alpha(), model.dim_beta(), model.dim_j());
    if path.dim() != d {
        return Err(Error::Dimension("path dimension differs from the model".into()));
    }
    if nu.dim != r {
        return Err(Error::Dimension(format!("moment tensors of order {} for {r} jump components", nu.dim)));
    }
    let n = path.n();
    if n == 0 {
        return Err(Error::InvalidArgument("empty averaging path".into()));
    }
    let mut ws = model.workspace();
    let mut ga = vec![CompensatedSum::default(); pa * pa];
    let mut gb = vec![CompensatedSum::default(); pb * pb];
    let mut vab = vec![CompensatedSum::default(); pa * pb];
    let mut vbb = vec![CompensatedSum::default(); pb * pb];
    let mut u = vec![0.0; d * pa];
    let mut p = vec![0.0; d * d * pb];
    let mut vc = vec![0.0; d * r];
    // dvc[m][s][t] = dV^{-1}_m[c_s, c_t]
    let mut dvc = vec![0.0; pb * r * r];
    // duc[k][s] = d_k a^T V^{-1} c_s
    let mut duc = vec![0.0; pa * r];
    let mut tmp = vec![0.0; d];
    let skip3 = nu.nu3_is_zero();
    let skip4 = nu.nu4_is_zero();
    for j in 0..n {
        let x = path.state(j);
        model.eval_v_into(x, &theta0.beta, &mut ws);
        model.factor_v(x, &theta0.beta, &mut ws)?;
        model.eval_drift_dalpha(x, &theta0.alpha, &mut ws);
        model.eval_dbeta_v(x, &theta0.beta, &mut ws);
        for k in 0..pa {
            linalg::mat_vec(&ws.vinv, d, &ws.da[k * d..(k + 1) * d], &mut u[k * d..(k + 1) * d]);
        }
        for k in 0..pb {
            linalg::mat_mul(&ws.vinv, &ws.dv[k * d * d..(k + 1) * d * d], d, &mut p[k * d * d..(k + 1) * d * d]);
        }
        for k in 0..pa {
            for l in 0..pa {
                let s: f64 = ws.da[k * d..(k + 1) * d].iter().zip(&u[l * d..(l + 1) * d]).map(|(a, b)| a * b).sum();
                ga[k * pa + l].add(-s);
            }
        }
        for k in 0..pb {
            for l in 0..pb {
                gb[k * pb + l].add(-linalg::trace_prod(&p[k * d * d..(k + 1) * d * d], &p[l * d * d..(l + 1) * d * d], d));
            }
        }
        if skip3 && skip4 {
            continue;
        }
        for s in 0..r {
            linalg::mat_vec(&ws.vinv, d, &ws.c[s * d..(s + 1) * d], &mut vc[s * d..(s + 1) * d]);
        }
        for m in 0..pb {
            let dvm = &ws.dv[m * d * d..(m + 1) * d * d];
            for t in 0..r {
                linalg::mat_vec(dvm, d, &vc[t * d..(t + 1) * d], &mut tmp);
                for s in 0..r {
                    let q: f64 = vc[s * d..(s + 1) * d].iter().zip(&tmp).map(|(a, b)| a * b).sum();
                    dvc[(m * r + s) * r + t] = -q;
                }
            }
        }
        if !skip3 {
            for k in 0..pa {
                for s in 0..r {
                    duc[k * r + s] = ws.da[k * d..(k + 1) * d].iter().zip(&vc[s * d..(s + 1) * d]).map(|(a, b)| a * b).sum();
                }
            }
            for k in 0..pa {
                for m in 0..pb {
                    let mut acc = 0.0;
                    for k1 in 0..r {
                        for l1 in 0..r {
                            for s1 in 0..r {
                                let w = nu.nu3(k1, l1, s1);
                                if w != 0.0 {
                                    acc += w * duc[k * r + s1] * dvc[(m * r + k1) * r + l1];
                                }
                            }
                        }
                    }
                    vab[k * pb + m].add(-acc);
                }
            }
        }
        if !skip4 {
            for k in 0..pb {
                for m in 0..pb {
                    let mut acc = 0.0;
                    for s in 0..r {
                        for t in 0..r {
                            for s1 in 0..r {
                                for t1 in 0..r {
                                    let w = nu.nu4(s, t, s1, t1);
                                    if w != 0.0 {
                                        acc += w * dvc[(k * r + s) * r + t] * dvc[(m * r + s1) * r + t1];
                                    }
                                }
                            }
                        }
                    }
                    vbb[k * pb + m].add(acc);
                }
            }
        }
    }
    let nf = n as f64;
    let avg = |v: &[CompensatedSum], rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j].value() / nf);
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    let g_alpha = sym(avg(&ga, pa, pa));
    let g_beta = sym(avg(&gb, pb, pb));
    let v_ab = avg(&vab, pa, pb);
    let v_bb = sym(avg(&vbb, pb, pb));
    let sigma0 = assemble_sigma(&g_alpha, &g_beta, &v_ab, &v_bb)?;
    Ok(LimitReport {
        g_inf_prime_alpha: g_alpha,
        g_inf_prime_beta: g_beta,
        v_alpha_beta: v_ab,
        v_beta_beta: v_bb,
        sigma0,
        averaging_t: path.t_n(),
        nu_moments_used: nu.clone(),
    })
}

/// One pair of the identifiability scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityRow {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    /// Smallest singular value of `A(alpha', alpha'', beta')`.
    pub min_sv_a: f64,
    /// Smallest singular value of `B(beta', beta'')`.
    pub min_sv_b: f64,
}

/// Path-averaged `A(alpha', alpha'', beta')` and `B(beta', beta'')` for one pair.
pub fn identifiability_forms(
    model: &ModelSpec,
    t1: &ThetaPoint,
    t2: &ThetaPoint,
    path: &Observations,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    model.check_theta(t1)?;
    model.check_theta(t2)?;
    let (d, pa, pb) = (model.dim_x(), model.dim_alpha(), model.dim_beta());
    if path.dim() != d {
        return Err(Error::Dimension("path dimension differs from the model".into()));
    }
    let n = path.n().max(1);
    let mut w1 = model.workspace();
    let mut w2 = model.workspace();
    let mut a = vec![CompensatedSum::default(); pa * pa];
    let mut b = vec![CompensatedSum::default(); pb * pb];
    let mut u = vec![0.0; d];
    let mut pk = vec![0.0; d * d];
    let mut pkv = vec![0.0; d * d];
    for j in 0..n {
        let x = path.state(j);
        // V(beta') and its derivatives
        model.eval_v_into(x, &t1.beta, &mut w1);
        model.factor_v(x, &t1.beta, &mut w1)?;
        model.eval_drift_dalpha(x, &t1.alpha, &mut w1);
        model.eval_dbeta_v(x, &t1.beta, &mut w1);
        model.eval_drift_dalpha(x, &t2.alpha, &mut w2);
        model.eval_dbeta_v(x, &t2.beta, &mut w2);
        for l in 0..pa {
            linalg::mat_vec(&w1.vinv, d, &w2.da[l * d..(l + 1) * d], &mut u);
            for k in 0..pa {
                a[k * pa + l].add(w1.da[k * d..(k + 1) * d].iter().zip(&u).map(|(x, y)| x * y).sum());
            }
        }
        for k in 0..pb {
            linalg::mat_mul(&w1.vinv, &w1.dv[k * d * d..(k + 1) * d * d], d, &mut pk);
            linalg::mat_mul(&pk, &w1.vinv, d, &mut pkv);
            for l in 0..pb {
                b[k * pb + l].add(linalg::trace_prod(&pkv, &w2.dv[l * d * d..(l + 1) * d * d], d));
            }
        }
    }
    let nf = n as f64;
    let am = DMatrix::from_fn(pa, pa, |i, j| a[i * pa + j].value() / nf);
    let bm = DMatrix::from_fn(pb, pb, |i, j| b[i * pb + j].value() / nf);
    Ok((am, bm))
}

fn min_singular(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Smallest singular values of the two forms over all ordered pairs of
/// `theta_grid` (including the diagonal).
pub fn identifiability_scan(
    model: &ModelSpec,
    theta_grid: &[ThetaPoint],
    path: &Observations,
) -> Result<Vec<IdentifiabilityRow>> {
    let mut rows = Vec::with_capacity(theta_grid.len() * theta_grid.len());
    for t1 in theta_grid {
        for t2 in theta_grid {
            let (a, b) = identifiability_forms(model, t1, t2, path)?;
            rows.push(IdentifiabilityRow {
                theta1: t1.stacked(),
                theta2: t2.stacked(),
                min_sv_a: min_singular(&a),
                min_sv_b: min_singular(&b),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyLoss {
    /// Path average of `(d_alpha a)^2 / b^2 * c^2 / (b^2 + c^2)`.
    pub path_average: f64,
    /// `(1 / (2 alpha)) (beta2 / beta1)^2` for the `ou-levy` model.
    pub closed_form: Option<f64>,
}

/// Gap between the information of the diffusion part alone and the
/// quasi-likelihood information for the drift, scalar case.
pub fn efficiency_loss(model: &ModelSpec, theta0: &ThetaPoint, path: &Observations) -> Result<EfficiencyLoss> {
    model.check_theta(theta0)?;
    if model.dim_x() != 1 || model.dim_alpha() != 1 {
        return Err(Error::Unsupported("efficiency loss needs d = p_alpha = 1".into()));
    }
    if path.dim() != 1 || path.n() == 0 {
        return Err(Error::Dimension("need a non-empty scalar path".into()));
    }
    let mut ws = model.workspace();
    let (rw, rj) = (model.dim_w(), model.dim_j());
    let mut acc = CompensatedSum::default();
    for j in 0..path.n() {
        let x = path.state(j);
        model.eval_v_into(x, &theta0.beta, &mut ws);
        model.eval_drift_dalpha(x, &theta0.alpha, &mut ws);
        let b2: f64 = if rw > 0 { ws.b[..rw].iter().map(|v| v * v).sum() } else { 0.0 };
        let c2: f64 = ws.c[..rj].iter().map(|v| v * v).sum();
        if !(b2 > 0.0) {
            return Err(Error::Unsupported(format!("diffusion coefficient vanishes at x = {}", x[0])));
        }
        acc.add(ws.da[0] * ws.da[0] / b2 * c2 / (b2 + c2));
    }
    let closed_form = (model.name() == "ou-levy").then(|| {
        let (b1, b2) = (theta0.beta[0], theta0.beta[1]);
        (b2 / b1).powi(2) / (2.0 * theta0.alpha[0])
    });
    Ok(EfficiencyLoss { path_average: acc.value() / path.n() as f64, closed_form })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub status: Status,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub model: String,
    pub theta0: Vec<f64>,
    pub driver: String,
    pub checks: Vec<Check>,
}

impl ErgodicityReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const ERGODICITY_X_LO: f64 = 10.0;
pub const ERGODICITY_X_HI: f64 = 1e4;
pub const ERGODICITY_POINTS: usize = 200;
pub const LIMSUP_CUTOFF: f64 = -1e-3;

fn status(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Warn
    }
}

/// Numerical screen of the one-dimensional drift, coefficient and
/// nondegeneracy conditions. Heuristic: it inspects a finite grid only.
pub fn ergodicity_diagnostics(model: &ModelSpec, theta0: &ThetaPoint, driver: &LevyDriver) -> Result<ErgodicityReport> {
    model.check_theta(theta0)?;
    if model.dim_x() != 1 {
        return Err(Error::Unsupported("ergodicity diagnostics are one-dimensional".into()));
    }
    let (rw, rj) = (model.dim_w(), model.dim_j());
    let ratio = (ERGODICITY_X_HI / ERGODICITY_X_LO).ln();
    let outer: Vec<f64> = (0..ERGODICITY_POINTS)
        .map(|i| ERGODICITY_X_LO * (ratio * i as f64 / (ERGODICITY_POINTS - 1) as f64).exp())
        .collect();
    let top_decade = ERGODICITY_X_HI / 10.0;
    let inner: Vec<f64> = (0..=200).map(|i| -ERGODICITY_X_LO + 0.1 * i as f64).collect();

    let mut a = [0.0];
    let mut bv = vec![0.0; rw.max(1)];
    let mut cv = vec![0.0; rj.max(1)];
    let mut coef = |x: f64| {
        model.drift_into(&[x], &theta0.alpha, &mut a);
        model.diffusion_into(&[x], &theta0.beta, &mut bv);
        model.jump_coef_into(&[x], &theta0.beta, &mut cv);
        let bn = bv[..rw].iter().map(|v| v * v).sum::<f64>().sqrt();
        let cn = cv[..rj].iter().map(|v| v * v).sum::<f64>().sqrt();
        (a[0], bn, cn)
    };

    let mut ratio_top = f64::NEG_INFINITY;
    let mut ratio_all = f64::NEG_INFINITY;
    let mut sgn_top = f64::NEG_INFINITY;
    let mut sgn_all = f64::NEG_INFINITY;
    let mut outer_pts = Vec::new();
    for &r in &outer {
        for x in [r, -r] {
            let (ax, bx, cx) = coef(x);
            let q = ax / x;
            let s = x.signum() * ax;
            ratio_all = ratio_all.max(q);
            sgn_all = sgn_all.max(s);
            if r >= top_decade {
                ratio_top = ratio_top.max(q);
                sgn_top = sgn_top.max(s);
            }
            outer_pts.push((x, ax, bx, cx));
        }
    }
    outer_pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    let inner_pts: Vec<(f64, f64, f64, f64)> = inner
        .iter()
        .map(|&x| {
            let (ax, bx, cx) = coef(x);
            (x, ax, bx, cx)
        })
        .collect();

    let lip = |pts: &[(f64, f64, f64, f64)], pick: fn(&(f64, f64, f64, f64)) -> f64| {
        pts.windows(2).map(|w| ((pick(&w[1]) - pick(&w[0])) / (w[1].0 - w[0].0)).abs()).fold(0.0, f64::max)
    };
    let sup = |pts: &[(f64, f64, f64, f64)], pick: fn(&(f64, f64, f64, f64)) -> f64| {
        pts.iter().map(|p| pick(p).abs()).fold(0.0, f64::max)
    };
    let picks: [(&str, fn(&(f64, f64, f64, f64)) -> f64); 3] = [("a", |p| p.1), ("b", |p| p.2), ("c", |p| p.3)];

    let mut checks = vec![
        Check {
            name: "drift_ratio_limsup".into(),
            value: ratio_top,
            status: status(ratio_top < LIMSUP_CUTOFF),
            note: format!("max a(x)/x over {top_decade} <= |x| <= {ERGODICITY_X_HI}; whole grid max {ratio_all:.4e}"),
        },
        Check {
            name: "drift_sign_limsup".into(),
            value: sgn_top,
            status: status(sgn_top < LIMSUP_CUTOFF),
            note: format!("max sgn(x) a(x) over {top_decade} <= |x| <= {ERGODICITY_X_HI}; whole grid max {sgn_all:.4e}"),
        },
    ];
    for (name, pick) in picks {
        let inside = lip(&inner_pts, pick);
        let outside = lip(&outer_pts, pick);
        let ok = outside.is_finite() && outside <= 10.0 * inside + 1e-8;
        checks.push(Check {
            name: format!("lipschitz_{name}"),
            value: outside,
            status: status(ok),
            note: format!("largest difference quotient for |x| >= {ERGODICITY_X_LO}; inside [-{ERGODICITY_X_LO}, {ERGODICITY_X_LO}] {inside:.4e}"),
        });
        if name != "a" {
            let s_in = sup(&inner_pts, pick);
            let s_out = sup(&outer_pts, pick);
            checks.push(Check {
                name: format!("bounded_{name}"),
                value: s_out,
                status: status(s_out.is_finite() && s_out <= 10.0 * s_in + 1e-8),
                note: format!("sup |{name}| for |x| >= {ERGODICITY_X_LO}; inside {s_in:.4e}"),
            });
        }
    }
    let min_c = outer_pts.iter().chain(&inner_pts).map(|p| p.3).fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "jump_coefficient_nonvanishing".into(),
        value: min_c,
        status: status(min_c > 0.0),
        note: "min |c(x)| over the grid".into(),
    });
    let (ok, note) = match driver.kind() {
        DriverKind::Wiener => (true, "Gaussian"),
        DriverKind::Nig { .. } => (true, "NIG tails are exponential"),
        DriverKind::CompoundPoisson { jump, .. } => match jump {
            JumpLaw::Custom(_) => (false, "custom jump law: tails unknown"),
            _ => (true, "built-in jump law with exponential moments"),
        },
    };
    checks.push(Check {
        name: "driver_exponential_moments".into(),
        value: f64::from(u8::from(ok)),
        status: status(ok),
        note: note.into(),
    });
    Ok(ErgodicityReport { model: model.name().to_string(), theta0: theta0.stacked(), driver: driver.label(), checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drift_only(sign: f64) -> ModelSpec {
        ModelSpec::builder("lin", 1, 1, 1)
            .drift(move |x, _a, o| o[0] = sign * x[0])
            .jumps(1, |_x, b, o| o[0] = b[0])
            .param_box(vec![0.1, 0.1], vec![5.0, 5.0])
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn linear_drift_screens() {
        let th = ThetaPoint::new(vec![1.0], vec![1.0]);
        let drv = LevyDriver::nig(10.0, 1).unwrap();
        let r = ergodicity_diagnostics(&drift_only(-1.0), &th, &drv).unwrap();
        assert_eq!(r.check("drift_ratio_limsup").unwrap().status, Status::Pass);
        assert_eq!(r.check("drift_sign_limsup").unwrap().status, Status::Pass);
        assert_eq!(r.check("lipschitz_a").unwrap().status, Status::Pass);
        let r = ergodicity_diagnostics(&drift_only(1.0), &th, &drv).unwrap();
        assert_eq!(r.check("drift_ratio_limsup").unwrap().status, Status::Warn);
        assert_eq!(r.check("drift_sign_limsup").unwrap().status, Status::Warn);
    }

    #[test]
    fn hyperbolic_drift_fails_ratio_passes_sign() {
        let m = crate::model::builtin("nig-hyperbolic").unwrap();
        let th = ThetaPoint::new(vec![1.0], vec![1.0]);
        let r = ergodicity_diagnostics(&m, &th, &LevyDriver::nig(10.0, 1).unwrap()).unwrap();
        let ratio = r.check("drift_ratio_limsup").unwrap();
        assert_eq!(ratio.status, Status::Warn);
        assert!(ratio.value < 0.0 && ratio.value > -1e-3);
        let sgn = r.check("drift_sign_limsup").unwrap();
        assert_eq!(sgn.status, Status::Pass);
        assert!((sgn.value + 1.0).abs() < 1e-5);
        assert!(r.checks.iter().filter(|c| c.name != "drift_ratio_limsup").all(|c| c.status == Status::Pass));
    }

    #[test]
    fn vanishing_moments_kill_blocks() {
        let m = crate::model::builtin("nig-hyperbolic").unwrap();
        let th = ThetaPoint::new(vec![1.0], vec![1.0]);
        let path = Observations::equidistant(0.5, vec![0.0, 1.0, -2.0, 0.5], 1).unwrap();
        let rep = limits_on_path(&m, &th, &NuMoments::diagonal(1, 0.0, 0.03), &path).unwrap();
        assert_eq!(rep.v_alpha_beta[(0, 0)], 0.0);
        // V = beta = 1: G'b = -1, Vbb = nu4
        assert!((rep.g_inf_prime_beta[(0, 0)] + 1.0).abs() < 1e-15);
        assert!((rep.v_beta_beta[(0, 0)] - 0.03).abs() < 1e-15);
        let expect = -(0.0 + 0.5 + 0.8) / 3.0;
        assert!((rep.g_inf_prime_alpha[(0, 0)] - expect).abs() < 1e-12);
        assert!((rep.sigma0[(1, 1)] - 0.03).abs() < 1e-12);

        let diff = crate::model::builtin("diffusion-hyperbolic").unwrap();
        let rep = limits_on_path(&diff, &th, &NuMoments::diagonal(1, 0.0, 0.0), &path).unwrap();
        assert_eq!(rep.v_beta_beta[(0, 0)], 0.0);
        assert_eq!(rep.sigma0[(1, 1)], 0.0);
    }

    #[test]
    fn skewed_moments_give_cross_block() {
        // d = 1, a = -alpha x, c = sqrt(beta): Vab = -nu3 mean(-x / beta * (-1 / beta))
        let m = crate::model::builtin("ou-scalar").unwrap();
        let th = ThetaPoint::new(vec![1.0], vec![2.0]);
        let path = Observations::equidistant(1.0, vec![1.0, 3.0, 0.0], 1).unwrap();
        let rep = limits_on_path(&m, &th, &NuMoments::diagonal(1, 0.5, 0.0), &path).unwrap();
        // per state: d a V^{-1} c = -x / sqrt(2); dV^{-1}[c, c] = -(c/V)^2 = -1/2
        let expect = -0.5 * (-(1.0 + 3.0) / 2.0 / 2f64.sqrt()) * -0.5;
        assert!((rep.v_alpha_beta[(0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn proportional_coefficients_are_unidentifiable() {
        let m = crate::model::builtin("ou-levy").unwrap();
        let path = Observations::equidistant(1.0, vec![0.0, 1.0, -1.0], 1).unwrap();
        let grid = [ThetaPoint::new(vec![1.0], vec![1.0, 2.0]), ThetaPoint::new(vec![2.0], vec![0.5, 1.5])];
        for row in identifiability_scan(&m, &grid, &path).unwrap() {
            assert!(row.min_sv_b < 1e-6, "{row:?}");
            assert!(row.min_sv_a > 0.05);
        }
    }

    #[test]
    fn efficiency_loss_closed_form_on_fixed_path() {
        let m = crate::model::builtin("ou-levy").unwrap();
        let th = ThetaPoint::new(vec![1.0], vec![1.0, 2.0]);
        let path = Observations::equidistant(1.0, vec![1.0, 2.0, 0.0], 1).unwrap();
        let e = efficiency_loss(&m, &th, &path).unwrap();
        // mean x^2 = 2.5, times 4 / 5
        assert!((e.path_average - 2.0).abs() < 1e-12);
        assert_eq!(e.closed_form, Some(2.0));
        let pure = crate::model::builtin("ou-scalar").unwrap();
        let th = ThetaPoint::new(vec![1.0], vec![1.0]);
        assert!(matches!(efficiency_loss(&pure, &th, &path), Err(Error::Unsupported(_))));
    }
}
