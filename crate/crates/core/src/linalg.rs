//! Small dense kernels on column-major slices.
//!
//! The per-observation loops of the quasi-likelihood run these on `d x d`
//! matrices with `d` typically 1..4, so they work in caller-owned buffers and
//! never allocate.

use nalgebra::{DMatrix, SymmetricEigen};

/// In-place Cholesky factorization `a = L L^T` of a column-major `d x d`
/// matrix. Only the lower triangle is read; on success it holds `L`.
/// Returns `false` when a pivot is not strictly positive.
pub fn cholesky_in_place(a: &mut [f64], d: usize) -> bool {
    for j in 0..d {
        let mut diag = a[j + j * d];
        for k in 0..j {
            diag -= a[j + k * d] * a[j + k * d];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j + j * d] = ljj;
        for i in (j + 1)..d {
            let mut s = a[i + j * d];
            for k in 0..j {
                s -= a[i + k * d] * a[j + k * d];
            }
            a[i + j * d] = s / ljj;
        }
    }
    true
}

/// `log |A|` from a Cholesky factor.
pub fn chol_logdet(l: &[f64], d: usize) -> f64 {
    (0..d).map(|i| l[i + i * d].ln()).sum::<f64>() * 2.0
}

/// Solves `L L^T x = b` in place.
pub fn chol_solve(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i + k * d] * b[k];
        }
        b[i] = s / l[i + i * d];
    }
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in (i + 1)..d {
            s -= l[k + i * d] * b[k];
        }
        b[i] = s / l[i + i * d];
    }
}

/// Full inverse from a Cholesky factor, written to `out` (column-major,
/// symmetric by construction).
pub fn chol_inverse(l: &[f64], d: usize, out: &mut [f64]) {
    for c in 0..d {
        let col = &mut out[c * d..(c + 1) * d];
        col.iter_mut().for_each(|v| *v = 0.0);
        col[c] = 1.0;
        chol_solve(l, d, col);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let m = 0.5 * (out[i + j * d] + out[j + i * d]);
            out[i + j * d] = m;
            out[j + i * d] = m;
        }
    }
}

/// Writes `m m^T` (`m` is `d x r`) into `out`, adding when `accumulate`.
pub fn add_outer_self(m: &[f64], d: usize, r: usize, out: &mut [f64], accumulate: bool) {
    if !accumulate {
        out[..d * d].iter_mut().for_each(|v| *v = 0.0);
    }
    for k in 0..r {
        let col = &m[k * d..(k + 1) * d];
        for j in 0..d {
            let cj = col[j];
            if cj == 0.0 {
                continue;
            }
            for i in 0..d {
                out[i + j * d] += col[i] * cj;
            }
        }
    }
}

/// `u^T A v` for a column-major `d x d` matrix.
#[inline]
pub fn bilinear(a: &[f64], d: usize, u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..d {
        let mut col = 0.0;
        for i in 0..d {
            col += u[i] * a[i + j * d];
        }
        s += col * v[j];
    }
    s
}

/// `out = A v`.
#[inline]
pub fn mat_vec(a: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    out[..d].iter_mut().for_each(|o| *o = 0.0);
    for j in 0..d {
        let vj = v[j];
        for i in 0..d {
            out[i] += a[i + j * d] * vj;
        }
    }
}

/// `trace(A B)` for column-major `d x d` matrices.
#[inline]
pub fn trace_prod(a: &[f64], b: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for l in 0..d {
            s += a[i + l * d] * b[l + i * d];
        }
    }
    s
}

/// `out = A B` for column-major `d x d` matrices.
pub fn mat_mul(a: &[f64], b: &[f64], d: usize, out: &mut [f64]) {
    for j in 0..d {
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i + k * d] * b[k + j * d];
            }
            out[i + j * d] = s;
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Condition number of a symmetric matrix from its eigenvalues (ratio of the
/// largest to smallest absolute eigenvalue).
pub fn symmetric_condition(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Symmetric inverse square root, flooring eigenvalues at
/// `floor_rel * largest eigenvalue`.
pub fn symmetric_inverse_sqrt(m: &DMatrix<f64>, floor_rel: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let largest = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = floor_rel * largest.max(0.0);
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt());
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_inverse_and_logdet_2x2() {
        // [[4, 2], [2, 3]]: det 8, inverse [[3, -2], [-2, 4]] / 8
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        assert!(cholesky_in_place(&mut a, 2));
        assert!((chol_logdet(&a, 2) - 8f64.ln()).abs() < 1e-14);
        let mut inv = vec![0.0; 4];
        chol_inverse(&a, 2, &mut inv);
        let expect = [3.0 / 8.0, -0.25, -0.25, 0.5];
        for (x, y) in inv.iter().zip(expect) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2));
        let mut z = vec![0.0];
        assert!(!cholesky_in_place(&mut z, 1));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn inverse_sqrt_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 0.25]));
        let r = symmetric_inverse_sqrt(&m, 1e-12);
        assert!((r[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((r[(1, 1)] - 2.0).abs() < 1e-14);
        assert!(r[(0, 1)].abs() < 1e-14);
    }
}
