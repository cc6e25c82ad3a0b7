//! Nelder-Mead with every trial point projected onto the parameter box.

use crate::model::ParamBox;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    /// Diameter fell below tolerance before the evaluation budget ran out.
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const INITIAL_STEP: f64 = 0.05;

/// Minimizes `f` from `x0`. `tol` bounds the simplex diameter measured in
/// units of `widths`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    bx: &ParamBox,
    widths: &[f64],
    max_evals: usize,
    tol: f64,
) -> SimplexOutcome {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut start = x0.to_vec();
    bx.project(&mut start);
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(start.clone());
    for k in 0..n {
        let mut v = start.clone();
        let step = INITIAL_STEP * widths[k];
        v[k] = if v[k] + step <= bx.upper()[k] { v[k] + step } else { v[k] - step };
        pts.push(v);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();
    let mut order: Vec<usize> = (0..=n).collect();
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    loop {
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];
        let diameter = pts
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&pts[best])
                    .zip(widths)
                    .map(|((a, b), w)| (a - b).abs() / w)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter <= tol {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[i]) {
                *c += v / n as f64;
            }
        }
        let along = |coef: f64, out: &mut Vec<f64>, w: &[f64], c: &[f64]| {
            for k in 0..n {
                out[k] = c[k] + coef * (c[k] - w[k]);
            }
            bx.project(out);
        };
        along(REFLECT, &mut trial, &pts[worst], &centroid);
        let fr = eval(&trial, &mut evals);
        if fr < vals[best] {
            along(EXPAND, &mut trial2, &pts[worst], &centroid);
            let fe = eval(&trial2, &mut evals);
            if fe < fr {
                pts[worst].copy_from_slice(&trial2);
                vals[worst] = fe;
            } else {
                pts[worst].copy_from_slice(&trial);
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst].copy_from_slice(&trial);
            vals[worst] = fr;
            continue;
        }
        // contraction, outside if the reflection improved on the worst point
        let (coef, reference) = if fr < vals[worst] { (CONTRACT, fr) } else { (-CONTRACT, vals[worst]) };
        along(coef, &mut trial2, &pts[worst], &centroid);
        let fc = eval(&trial2, &mut evals);
        if fc < reference {
            pts[worst].copy_from_slice(&trial2);
            vals[worst] = fc;
            continue;
        }
        let anchor = pts[best].clone();
        for &i in &order[1..] {
            for k in 0..n {
                pts[i][k] = anchor[k] + SHRINK * (pts[i][k] - anchor[k]);
            }
            vals[i] = eval(&pts[i], &mut evals);
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty simplex");
    SimplexOutcome { x: pts[best].clone(), f: vals[best], evaluations: evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock_inside_box() {
        let bx = ParamBox::new(vec![-2.0, -2.0], vec![2.0, 2.0], 1).unwrap();
        let out = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &bx,
            &[4.0, 4.0],
            5000,
            1e-9,
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5, "{:?}", out.x);
    }

    #[test]
    fn constrained_minimum_lands_on_face() {
        let bx = ParamBox::new(vec![0.0, 0.0], vec![1.0, 1.0], 1).unwrap();
        let out = nelder_mead(|x| (x[0] + 1.0).powi(2) + (x[1] - 0.5).powi(2), &[0.7, 0.2], &bx, &[1.0, 1.0], 2000, 1e-8);
        assert!(out.x[0].abs() < 1e-6);
        assert!((out.x[1] - 0.5).abs() < 1e-4);
    }
}
