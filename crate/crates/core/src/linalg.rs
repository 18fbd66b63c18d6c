//! Small dense symmetric linear algebra.
//!
//! The fits in this crate involve at most a dozen parameters, so a plain
//! Cholesky with explicit loops beats pulling in a LAPACK binding.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Cholesky factor (lower triangular) of a symmetric positive-definite
/// matrix. Returns `None` when a pivot drops below `1e-12` times the largest
/// diagonal entry, i.e. the matrix is not numerically SPD.
pub fn cholesky_spd(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol) {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Some(l)
}

/// Cholesky factor of a symmetric positive-*semi*definite matrix.
/// Non-positive pivots are clamped to zero (the corresponding directions
/// carry no variance). Used for sampling, never for solving.
pub fn cholesky_psd(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > tol {
            let dj = d.sqrt();
            l[(j, j)] = dj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dj;
            }
        }
        // else: leave the column at zero
    }
    l
}

/// Solve `L L^T x = b` given the lower Cholesky factor.
pub fn chol_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let v = y[k];
            y[i] -= l[(i, k)] * v;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = y[k];
            y[i] -= l[(k, i)] * v;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Inverse of an SPD matrix from its Cholesky factor, symmetrized.
pub fn spd_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<f64>::zeros(n);
        e[j] = 1.0;
        let col = chol_solve(l, &e);
        inv.column_mut(j).assign(&col);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = s;
            inv[(j, i)] = s;
        }
    }
    inv
}

/// Draw from a multivariate normal with the given mean and PSD covariance.
/// A zero covariance returns the mean exactly.
pub fn mvn_sample<R: Rng>(mean: &Array1<f64>, cov: &Array2<f64>, rng: &mut R) -> Array1<f64> {
    let n = mean.len();
    let l = cholesky_psd(cov);
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = mean.clone();
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..=i {
            s += l[(i, k)] * z[k];
        }
        out[i] += s;
    }
    out
}
