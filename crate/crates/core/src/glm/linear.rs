//! Ordinary least squares with an intercept, for the imputation engine's
//! continuous conditional models.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::Result;
use crate::glm::logistic::{check_structural_rank, factor_with_ridge};
use crate::linalg::{chol_solve, spd_inverse};

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefficients: Array1<f64>,
    /// Joint covariance of (intercept, coefficients): sigma^2 (X'X)^-1.
    pub covariance: Array2<f64>,
    /// Residual standard deviation, RSS/(n-k) under the hood.
    pub sigma: f64,
    pub ridged: bool,
}

impl LinearFit {
    pub fn predict(&self, row: ArrayView1<f64>) -> f64 {
        self.intercept + self.coefficients.dot(&row)
    }

    pub fn params(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.coefficients.len() + 1);
        out[0] = self.intercept;
        for (k, &c) in self.coefficients.iter().enumerate() {
            out[k + 1] = c;
        }
        out
    }
}

/// Least-squares fit of `outcome` on `design` plus an intercept.
pub fn fit_linear(outcome: &[f64], design: ArrayView2<f64>) -> Result<LinearFit> {
    let n = design.nrows();
    let p = design.ncols();
    assert_eq!(outcome.len(), n);
    let dim = p + 1;

    let mut xtx = Array2::<f64>::zeros((dim, dim));
    let mut xty = Array1::<f64>::zeros(dim);
    for i in 0..n {
        xtx[(0, 0)] += 1.0;
        xty[0] += outcome[i];
        for a in 0..p {
            let xa = design[(i, a)];
            xtx[(0, a + 1)] += xa;
            xty[a + 1] += xa * outcome[i];
            for b in a..p {
                xtx[(a + 1, b + 1)] += xa * design[(i, b)];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }

    check_structural_rank(&xtx)?;
    let (l, ridged) = factor_with_ridge(&xtx)?;
    let theta = chol_solve(&l, &xty);

    let mut rss = 0.0;
    for i in 0..n {
        let mut fitted = theta[0];
        for a in 0..p {
            fitted += theta[a + 1] * design[(i, a)];
        }
        let r = outcome[i] - fitted;
        rss += r * r;
    }
    let dof = n.saturating_sub(dim).max(1) as f64;
    let sigma2 = rss / dof;
    let mut covariance = spd_inverse(&l);
    covariance *= sigma2;

    Ok(LinearFit {
        intercept: theta[0],
        coefficients: theta.slice(ndarray::s![1..]).to_owned(),
        covariance,
        sigma: sigma2.sqrt(),
        ridged,
    })
}
