//! The estimator: a maximizer of the contrast `M_n` over the closed box.
//!
//! Multistart derivative-free simplex search on `-M_n` (vertices projected
//! onto the box) from a randomly shifted Halton set, then optional Newton
//! polishing of the root of `G_n(theta) = 0` using the analytic score
//! Jacobian.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gql::{Gql, GqlEvaluation};
use crate::model::{FiniteDifferenceFlags, ModelSpec, ThetaPoint};
use crate::rng::RandomStream;
use crate::simulate::Observations;

mod simplex;

pub use simplex::{nelder_mead, SimplexOutcome};

/// Function maximized by [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// `M_n = -|G_n|^2 / T_n`.
    #[default]
    Contrast,
    /// `Q_n` directly.
    Gql,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Number of multistart points.
    pub starts: usize,
    /// Objective evaluations allowed per simplex run.
    pub max_iter: usize,
    /// Newton stops once `|G_n| / sqrt(T_n)` falls below this.
    pub grad_tol: f64,
    /// Simplex stops once its diameter, relative to the box widths, falls below this.
    pub simplex_tol: f64,
    pub newton_refine: bool,
    pub newton_max_iter: usize,
    pub objective: Objective,
    /// Seed of the start-point randomization.
    pub seed: u64,
    /// Record every evaluated point.
    pub trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iter: 400,
            grad_tol: 1e-8,
            simplex_tol: 1e-3,
            newton_refine: true,
            newton_max_iter: 50,
            objective: Objective::Contrast,
            seed: 0,
            trace: false,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::InvalidArgument("starts must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.simplex_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument("tolerances and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// One evaluated point of the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub start: usize,
    pub theta: Vec<f64>,
    pub q: f64,
    pub m: f64,
    pub score_norm: f64,
}

/// Outcome of one start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: Vec<f64>,
    pub theta: Vec<f64>,
    pub m: f64,
    pub q: f64,
    /// `|G_n| / sqrt(T_n)` at the end point.
    pub score_norm: f64,
    pub evaluations: usize,
    pub newton_steps: usize,
    pub converged: bool,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub theta_hat: ThetaPoint,
    pub m_at_hat: f64,
    pub q_at_hat: f64,
    /// `|G_n(theta_hat)| / sqrt(T_n)`.
    pub score_norm: f64,
    pub converged: bool,
    pub boundary_hit: bool,
    /// Total objective evaluations over all starts.
    pub iterations: usize,
    pub starts: Vec<StartRecord>,
    pub finite_differences: FiniteDifferenceFlags,
    pub objective: Objective,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<TraceRow>,
}

/// Relative distance to a face below which a point counts as on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// `count` points of the unit cube: Halton (skipping the origin) with a
/// random Cranley-Patterson shift drawn from `seed`.
pub fn multistart_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RandomStream::new(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (0..count)
        .map(|i| {
            (0..dim)
                .map(|k| {
                    let base = PRIMES[k % PRIMES.len()] + if k >= PRIMES.len() { 2 * k as u64 + 1 } else { 0 };
                    let v = radical_inverse(i as u64 + 1, base) + shift[k];
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}

struct Objectives<'a> {
    gql: Gql<'a>,
    objective: Objective,
    pa: usize,
    t_n: f64,
    evaluations: usize,
    trace: Option<Vec<TraceRow>>,
    start: usize,
}

impl Objectives<'_> {
    fn eval(&mut self, theta: &[f64], jacobian: bool) -> Result<(GqlEvaluation, f64)> {
        self.evaluations += 1;
        let tp = ThetaPoint::from_stacked(theta, self.pa);
        let e = self.gql.evaluate(&tp, true, jacobian)?;
        let norm_sq = e.score.as_ref().expect("score").norm_sq();
        let m = -norm_sq / self.t_n;
        if let Some(tr) = self.trace.as_mut() {
            tr.push(TraceRow {
                start: self.start,
                theta: theta.to_vec(),
                q: e.q,
                m,
                score_norm: (norm_sq / self.t_n).sqrt(),
            });
        }
        Ok((e, m))
    }

    /// Value minimized by the simplex.
    fn loss(&mut self, theta: &[f64]) -> f64 {
        match self.eval(theta, false) {
            Ok((e, m)) => {
                let v = match self.objective {
                    Objective::Contrast => -m,
                    Objective::Gql => -e.q,
                };
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// Computes the estimator from `obs`.
pub fn fit(obs: &Observations, model: &ModelSpec, options: &FitOptions) -> Result<EstimateReport> {
    options.validate()?;
    let p = model.dim_theta();
    if obs.n() < p {
        return Err(Error::InvalidArgument(format!("{} increments cannot identify {p} parameters", obs.n())));
    }
    let gql = Gql::new(obs, model)?;
    let bx = model.param_box();
    let widths: Vec<f64> = bx.lower().iter().zip(bx.upper()).map(|(l, u)| u - l).collect();
    let t_n = obs.t_n();
    let mut obj = Objectives {
        gql,
        objective: options.objective,
        pa: model.dim_alpha(),
        t_n,
        evaluations: 0,
        trace: options.trace.then(Vec::new),
        start: 0,
    };

    let mut records = Vec::with_capacity(options.starts);
    for (s, unit) in multistart_points(p, options.starts, options.seed).into_iter().enumerate() {
        obj.start = s;
        let x0 = bx.from_unit(&unit);
        let before = obj.evaluations;
        let outcome = nelder_mead(|t| obj.loss(t), &x0, bx, &widths, options.max_iter, options.simplex_tol);
        let record = match obj.eval(&outcome.x, false) {
            Ok((e, m)) if m.is_finite() && e.q.is_finite() => StartRecord {
                start: x0,
                theta: outcome.x,
                m,
                q: e.q,
                score_norm: (-m).sqrt(),
                evaluations: obj.evaluations - before,
                newton_steps: 0,
                converged: outcome.converged,
                failed: false,
            },
            _ => StartRecord {
                start: x0,
                theta: outcome.x,
                m: f64::NEG_INFINITY,
                q: f64::NEG_INFINITY,
                score_norm: f64::INFINITY,
                evaluations: obj.evaluations - before,
                newton_steps: 0,
                converged: false,
                failed: true,
            },
        };
        records.push(record);
    }

    if options.newton_refine {
        // Polish every interior simplex endpoint. An endpoint stuck on a face
        // gets one Newton attempt from its own start point instead, since the
        // contrast can creep towards zero along an unbounded direction.
        for (s, rec) in records.iter_mut().enumerate() {
            if rec.failed {
                continue;
            }
            obj.start = s;
            let before = obj.evaluations;
            let from = if bx.on_boundary(&rec.theta, BOUNDARY_TOL) { rec.start.clone() } else { rec.theta.clone() };
            let r = newton(&mut obj, &from, options)?;
            rec.newton_steps = r.steps;
            rec.evaluations += obj.evaluations - before;
            if let Some((th, e, m)) = r.best {
                let improves = match options.objective {
                    Objective::Contrast => m >= rec.m,
                    Objective::Gql => e.q >= rec.q || r.converged,
                };
                if improves && !bx.on_boundary(&th, BOUNDARY_TOL) {
                    rec.theta = th;
                    rec.m = m;
                    rec.q = e.q;
                    rec.score_norm = (-m).sqrt();
                    rec.converged = r.converged;
                }
            }
        }
    }
    // the polished point may now win a different tie-break
    let best = records
        .iter()
        .filter(|r| !r.failed)
        .min_by(|a, b| tie_break(a, b, options.objective))
        .cloned()
        .ok_or(Error::AllStartsFailed)?;
    let theta_hat = ThetaPoint::from_stacked(&best.theta, model.dim_alpha());
    Ok(EstimateReport {
        boundary_hit: bx.on_boundary(&best.theta, BOUNDARY_TOL),
        theta_hat,
        m_at_hat: best.m,
        q_at_hat: best.q,
        score_norm: best.score_norm,
        converged: best.converged,
        iterations: obj.evaluations,
        starts: records,
        finite_differences: model.finite_difference_flags(),
        objective: options.objective,
        trace: obj.trace.unwrap_or_default(),
    })
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// Orders candidates best first: largest objective, then smallest score,
/// then lexicographically smallest theta.
fn tie_break(a: &StartRecord, b: &StartRecord, objective: Objective) -> Ordering {
    let (va, vb) = match objective {
        Objective::Contrast => (a.m, b.m),
        Objective::Gql => (a.q, b.q),
    };
    if !nearly_equal(va, vb) {
        return vb.partial_cmp(&va).unwrap_or(Ordering::Equal);
    }
    if !nearly_equal(a.score_norm, b.score_norm) {
        return a.score_norm.partial_cmp(&b.score_norm).unwrap_or(Ordering::Equal);
    }
    for (x, y) in a.theta.iter().zip(&b.theta) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

struct NewtonResult {
    best: Option<(Vec<f64>, GqlEvaluation, f64)>,
    steps: usize,
    converged: bool,
}

fn newton(obj: &mut Objectives<'_>, start: &[f64], options: &FitOptions) -> Result<NewtonResult> {
    let bx = obj.gql.model().param_box();
    let scale = obj.t_n.sqrt();
    let mut theta = start.to_vec();
    let (mut cur, mut cur_m) = match obj.eval(&theta, true) {
        Ok(v) => v,
        Err(_) => return Ok(NewtonResult { best: None, steps: 0, converged: false }),
    };
    let mut steps = 0;
    let mut converged = false;
    while steps < options.newton_max_iter {
        let g = DVector::from_vec(cur.score.as_ref().expect("score").stacked());
        if g.norm() / scale < options.grad_tol {
            converged = true;
            break;
        }
        let jac: DMatrix<f64> = cur.jacobian.clone().expect("jacobian");
        let Some(delta) = jac.lu().solve(&(-&g)) else { break };
        if delta.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + lambda * d).collect();
            if bx.contains(&cand) {
                if let Ok((e, m)) = obj.eval(&cand, true) {
                    if m > cur_m {
                        accepted = Some((cand, e, m));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        let Some((cand, e, m)) = accepted else { break };
        steps += 1;
        let moved = cand.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        theta = cand;
        cur = e;
        cur_m = m;
        if moved == 0.0 {
            break;
        }
    }
    if !converged {
        let g = cur.score.as_ref().expect("score").norm();
        converged = g / scale < options.grad_tol;
    }
    Ok(NewtonResult { best: Some((theta, cur, cur_m)), steps, converged })
}

/// One row of a profile scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub theta: Vec<f64>,
    pub value: f64,
    pub m: f64,
    pub q: f64,
}

/// `M_n` and `Q_n` along coordinate `axis` of the stacked parameter, the
/// other coordinates fixed at `theta`.
pub fn profile_scan(
    obs: &Observations,
    model: &ModelSpec,
    theta: &ThetaPoint,
    axis: usize,
    grid: &[f64],
) -> Result<Vec<ProfileRow>> {
    let base = theta.stacked();
    if axis >= base.len() {
        return Err(Error::InvalidArgument(format!("axis {axis} outside 0..{}", base.len())));
    }
    let points: Vec<Vec<f64>> = grid
        .iter()
        .map(|v| {
            let mut t = base.clone();
            t[axis] = *v;
            t
        })
        .collect();
    let mut rows = profile_path(obs, model, &points)?;
    for (r, v) in rows.iter_mut().zip(grid) {
        r.value = *v;
    }
    Ok(rows)
}

/// `M_n` and `Q_n` along an arbitrary list of stacked parameter points; `value`
/// holds the arc index.
pub fn profile_path(obs: &Observations, model: &ModelSpec, points: &[Vec<f64>]) -> Result<Vec<ProfileRow>> {
    let gql = Gql::new(obs, model)?;
    points
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let c = gql.contrast(&ThetaPoint::from_stacked(t, model.dim_alpha()))?;
            Ok(ProfileRow { theta: t.clone(), value: i as f64, m: c.m, q: c.q })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_points_are_in_cube_and_distinct() {
        let pts = multistart_points(3, 16, 42);
        assert_eq!(pts.len(), 16);
        for p in &pts {
            assert!(p.iter().all(|v| (0.0..1.0).contains(v)));
        }
        for i in 0..16 {
            for j in (i + 1)..16 {
                assert_ne!(pts[i], pts[j]);
            }
        }
        assert_eq!(pts, multistart_points(3, 16, 42));
        assert_ne!(pts, multistart_points(3, 16, 43));
    }

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }

    fn rec(m: f64, g: f64, theta: Vec<f64>) -> StartRecord {
        StartRecord {
            start: vec![],
            theta,
            m,
            q: 0.0,
            score_norm: g,
            evaluations: 0,
            newton_steps: 0,
            converged: true,
            failed: false,
        }
    }

    #[test]
    fn tie_break_order() {
        let a = rec(-1.0, 1.0, vec![1.0]);
        let b = rec(-2.0, 0.5, vec![0.0]);
        assert_eq!(tie_break(&a, &b, Objective::Contrast), Ordering::Less);
        let c = rec(-1.0, 0.5, vec![3.0]);
        assert_eq!(tie_break(&a, &c, Objective::Contrast), Ordering::Greater);
        let d = rec(-1.0, 1.0, vec![0.5]);
        assert_eq!(tie_break(&a, &d, Objective::Contrast), Ordering::Greater);
    }

    #[test]
    fn invalid_options() {
        let o = FitOptions { starts: 0, ..FitOptions::default() };
        assert!(o.validate().is_err());
        let o = FitOptions { grad_tol: 0.0, ..FitOptions::default() };
        assert!(o.validate().is_err());
    }
}
