//! Plug-in asymptotic covariance `Sigma_hat_n` and Studentization.
//!
//! Everything is computed from the data at `theta_hat`; no moment of the
//! Levy measure is needed. With `w_j = V^{-1} chi_j`:
//!
//! ```text
//! G'a[k,l]  = -(1/n) sum  d_k a^T V^{-1} d_l a
//! G'b[k,l]  = -(1/n) sum  trace(V^{-1} d_k V V^{-1} d_l V)
//! Vab[k,m]  =  (1/T) sum  (d_k a^T w) (w^T d_m V w)
//! Vbb[k,m]  =  (1/T) sum  (w^T d_k V w) (w^T d_m V w)
//! ```

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gql::{Gql, Level, StepTerms};
use crate::linalg::{self, CompensatedSum};
use crate::model::{ModelSpec, ThetaPoint};
use crate::simulate::Observations;

/// Largest tolerated condition number of the information blocks.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative eigenvalue floor of the inverse square root.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaHat {
    pub g_prime_alpha_hat: DMatrix<f64>,
    pub g_prime_beta_hat: DMatrix<f64>,
    pub v_alpha_beta_hat: DMatrix<f64>,
    pub v_beta_beta_hat: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
}

impl SigmaHat {
    /// Standard errors `sqrt(Sigma_ii / T_n)`.
    pub fn standard_errors(&self, t_n: f64) -> Vec<f64> {
        self.sigma_hat.diagonal().iter().map(|s| (s.max(0.0) / t_n).sqrt()).collect()
    }
}

/// Assembles `Sigma` from the four blocks. Shared with the population limits.
pub(crate) fn assemble_sigma(
    g_alpha: &DMatrix<f64>,
    g_beta: &DMatrix<f64>,
    v_ab: &DMatrix<f64>,
    v_bb: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let inv = |m: &DMatrix<f64>, which: &'static str| -> Result<DMatrix<f64>> {
        let cond = linalg::symmetric_condition(m);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::SingularInformation { which, cond });
        }
        m.clone().try_inverse().ok_or(Error::SingularInformation { which, cond })
    };
    let ga_inv = inv(g_alpha, "alpha")?;
    let gb_inv = inv(g_beta, "beta")?;
    let (pa, pb) = (g_alpha.nrows(), g_beta.nrows());
    let aa = -&ga_inv;
    let ab = &ga_inv * v_ab * &gb_inv;
    let bb = &gb_inv * v_bb * &gb_inv;
    let mut s = DMatrix::zeros(pa + pb, pa + pb);
    s.view_mut((0, 0), (pa, pa)).copy_from(&aa);
    s.view_mut((0, pa), (pa, pb)).copy_from(&ab);
    s.view_mut((pa, 0), (pb, pa)).copy_from(&ab.transpose());
    s.view_mut((pa, pa), (pb, pb)).copy_from(&bb);
    Ok((&s + s.transpose()) * 0.5)
}

fn assert_nsd(m: &DMatrix<f64>, name: &str) {
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    let top = eig.eigenvalues.max();
    assert!(top <= 1e-10 * scale.max(f64::MIN_POSITIVE), "{name} is not negative semidefinite (eigenvalue {top})");
}

/// `Sigma_hat_n` at `theta_hat`.
pub fn estimate_sigma(obs: &Observations, model: &ModelSpec, theta_hat: &ThetaPoint) -> Result<SigmaHat> {
    model.check_theta(theta_hat)?;
    let gql = Gql::new(obs, model)?;
    let (d, pa, pb) = (model.dim_x(), model.dim_alpha(), model.dim_beta());
    let n = obs.n();
    let mut terms = StepTerms::new(model);
    let mut ga = vec![CompensatedSum::default(); pa * pa];
    let mut gb = vec![CompensatedSum::default(); pb * pb];
    let mut vab = vec![CompensatedSum::default(); pa * pb];
    let mut vbb = vec![CompensatedSum::default(); pb * pb];
    let mut da_w = vec![0.0; pa];
    let mut wdvw = vec![0.0; pb];
    let mut dvw = vec![0.0; d];
    for j in 1..=n {
        gql.prepare(j, theta_hat, &mut terms, Level::Score)?;
        let ws = &terms.model;
        for k in 0..pa {
            let dak = &ws.da[k * d..(k + 1) * d];
            da_w[k] = dak.iter().zip(&terms.w).map(|(x, y)| x * y).sum();
            for l in 0..pa {
                let ul = &terms.u[l * d..(l + 1) * d];
                ga[k * pa + l].add(dak.iter().zip(ul).map(|(x, y)| x * y).sum());
            }
        }
        for k in 0..pb {
            linalg::mat_vec(&ws.dv[k * d * d..(k + 1) * d * d], d, &terms.w, &mut dvw);
            wdvw[k] = dvw.iter().zip(&terms.w).map(|(x, y)| x * y).sum();
            for l in 0..pb {
                let t = linalg::trace_prod(&terms.p[k * d * d..(k + 1) * d * d], &terms.p[l * d * d..(l + 1) * d * d], d);
                gb[k * pb + l].add(t);
            }
        }
        for k in 0..pa {
            for m in 0..pb {
                vab[k * pb + m].add(da_w[k] * wdvw[m]);
            }
        }
        for k in 0..pb {
            for m in 0..pb {
                vbb[k * pb + m].add(wdvw[k] * wdvw[m]);
            }
        }
    }
    let t_n = obs.t_n();
    let nf = n as f64;
    let g_alpha = DMatrix::from_fn(pa, pa, |i, j| -ga[i * pa + j].value() / nf);
    let g_beta = DMatrix::from_fn(pb, pb, |i, j| -gb[i * pb + j].value() / nf);
    let g_alpha = (&g_alpha + g_alpha.transpose()) * 0.5;
    let g_beta = (&g_beta + g_beta.transpose()) * 0.5;
    assert_nsd(&g_alpha, "G'alpha");
    assert_nsd(&g_beta, "G'beta");
    let v_ab = DMatrix::from_fn(pa, pb, |i, j| vab[i * pb + j].value() / t_n);
    let v_bb = DMatrix::from_fn(pb, pb, |i, j| vbb[i * pb + j].value() / t_n);
    let sigma_hat = assemble_sigma(&g_alpha, &g_beta, &v_ab, &v_bb)?;
    Ok(SigmaHat {
        g_prime_alpha_hat: g_alpha,
        g_prime_beta_hat: g_beta,
        v_alpha_beta_hat: v_ab,
        v_beta_beta_hat: v_bb,
        sigma_hat,
    })
}

/// `Sigma^{-1/2} sqrt(T_n) (theta_hat - theta_ref)` with the symmetric root.
pub fn studentize(t_n: f64, theta_hat: &ThetaPoint, sigma: &DMatrix<f64>, theta_ref: &ThetaPoint) -> Result<Vec<f64>> {
    let p = theta_hat.dim();
    if sigma.nrows() != p || sigma.ncols() != p || theta_ref.dim() != p {
        return Err(Error::Dimension("studentize: sizes disagree".into()));
    }
    let cond = linalg::symmetric_condition(sigma);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularInformation { which: "sigma", cond });
    }
    let root = linalg::symmetric_inverse_sqrt(sigma, EIGEN_FLOOR);
    let diff: Vec<f64> = theta_hat.stacked().iter().zip(theta_ref.stacked()).map(|(a, b)| t_n.sqrt() * (a - b)).collect();
    Ok((root * nalgebra::DVector::from_vec(diff)).iter().copied().collect())
}

/// Same as [`studentize`] taking `T_n` from the data.
pub fn studentize_obs(
    obs: &Observations,
    theta_hat: &ThetaPoint,
    sigma: &SigmaHat,
    theta_ref: &ThetaPoint,
) -> Result<Vec<f64>> {
    studentize(obs.t_n(), theta_hat, &sigma.sigma_hat, theta_ref)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `theta_i -/+ z_{(1+level)/2} sqrt(Sigma_ii / T_n)`.
pub fn confidence_intervals(theta_hat: &ThetaPoint, sigma: &DMatrix<f64>, t_n: f64, level: f64) -> Result<Vec<Interval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} not in (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(0.5 * (1.0 + level));
    Ok(theta_hat
        .stacked()
        .into_iter()
        .enumerate()
        .map(|(i, est)| {
            let se = (sigma[(i, i)].max(0.0) / t_n).sqrt();
            Interval { estimate: est, std_error: se, lower: est - z * se, upper: est + z * se }
        })
        .collect())
}
