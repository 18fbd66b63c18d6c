//! Weighted Cox partial likelihood with Breslow tie handling, solved by
//! Newton-Raphson with step-halving.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::glm::logistic::{
    check_structural_rank, factor_with_ridge, DIVERGENCE_BOUND, LOGLIK_TOL, MAX_ITER, STEP_TOL,
};
use crate::linalg::{chol_solve, spd_inverse};

#[derive(Debug, Clone)]
pub struct CoxFit {
    pub coefficients: Array1<f64>,
    /// Inverse observed information at the optimum.
    pub covariance: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub ridged: bool,
    pub loglik: f64,
}

struct CoxWork<'a> {
    y: &'a [f64],
    delta: &'a [bool],
    design: ArrayView2<'a, f64>,
    weights: &'a [f64],
    /// Row indices sorted by descending follow-up time.
    order: Vec<usize>,
}

impl<'a> CoxWork<'a> {
    /// Weighted Breslow partial log-likelihood, score, and information.
    fn evaluate(&self, beta: &Array1<f64>, with_derivs: bool) -> (f64, Array1<f64>, Array2<f64>) {
        let p = self.design.ncols();
        let n = self.order.len();
        let eta: Vec<f64> = (0..self.y.len())
            .map(|i| self.design.row(i).dot(beta))
            .collect();

        let mut ll = 0.0;
        let mut score = Array1::<f64>::zeros(p);
        let mut info = Array2::<f64>::zeros((p, p));

        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];

        let mut idx = 0;
        while idx < n {
            let t = self.y[self.order[idx]];
            let group_start = idx;
            // everyone with y == t enters the risk set before events at t count
            while idx < n && self.y[self.order[idx]] == t {
                let i = self.order[idx];
                let w = self.weights[i];
                if w > 0.0 {
                    let r = w * eta[i].exp();
                    s0 += r;
                    for a in 0..p {
                        let xa = self.design[(i, a)];
                        s1[a] += r * xa;
                        if with_derivs {
                            for b in a..p {
                                s2[a * p + b] += r * xa * self.design[(i, b)];
                            }
                        }
                    }
                }
                idx += 1;
            }
            let mut event_w = 0.0;
            for &i in &self.order[group_start..idx] {
                if self.delta[i] && self.weights[i] > 0.0 {
                    let w = self.weights[i];
                    event_w += w;
                    ll += w * eta[i];
                    if with_derivs {
                        for a in 0..p {
                            score[a] += w * self.design[(i, a)];
                        }
                    }
                }
            }
            if event_w > 0.0 {
                ll -= event_w * s0.ln();
                if with_derivs {
                    for a in 0..p {
                        let ma = s1[a] / s0;
                        score[a] -= event_w * ma;
                        for b in a..p {
                            info[(a, b)] += event_w * (s2[a * p + b] / s0 - ma * s1[b] / s0);
                        }
                    }
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        (ll, score, info)
    }
}

/// Maximize the weighted Cox partial likelihood (no intercept; Breslow ties).
pub fn fit_cox(
    y: &[f64],
    delta: &[bool],
    design: ArrayView2<f64>,
    weights: &[f64],
) -> Result<CoxFit> {
    fit_cox_warm(y, delta, design, weights, None)
}

/// Weighted Breslow partial log-likelihood and its score at `beta`.
pub fn cox_partial_loglik(
    y: &[f64],
    delta: &[bool],
    design: ArrayView2<f64>,
    weights: &[f64],
    beta: &Array1<f64>,
) -> (f64, Array1<f64>) {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).unwrap());
    let work = CoxWork {
        y,
        delta,
        design,
        weights,
        order,
    };
    let (ll, score, _) = work.evaluate(beta, true);
    (ll, score)
}

pub(crate) fn fit_cox_warm(
    y: &[f64],
    delta: &[bool],
    design: ArrayView2<f64>,
    weights: &[f64],
    start: Option<&Array1<f64>>,
) -> Result<CoxFit> {
    let n = y.len();
    let p = design.ncols();
    assert_eq!(delta.len(), n);
    assert_eq!(design.nrows(), n);
    assert_eq!(weights.len(), n);
    debug_assert!(weights.iter().all(|&w| w >= 0.0));

    let weighted_events: f64 = (0..n)
        .filter(|&i| delta[i])
        .map(|i| weights[i])
        .sum();
    if weighted_events <= 0.0 {
        return Err(Error::NoEvents);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).unwrap());
    let work = CoxWork {
        y,
        delta,
        design,
        weights,
        order,
    };

    let mut beta = match start {
        Some(b) => b.clone(),
        None => Array1::zeros(p),
    };

    if p == 0 {
        let (ll, _, _) = work.evaluate(&beta, false);
        return Ok(CoxFit {
            coefficients: beta,
            covariance: Array2::zeros((0, 0)),
            converged: true,
            iterations: 0,
            ridged: false,
            loglik: ll,
        });
    }

    let (mut ll, mut score, mut info) = work.evaluate(&beta, true);
    let mut converged = false;
    let mut ridged = false;
    let mut iterations = 0;

    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        check_structural_rank(&info)?;
        let (l, used_ridge) = factor_with_ridge(&info)?;
        ridged |= used_ridge;
        let step = chol_solve(&l, &score);

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut cand = beta.clone();
            for a in 0..p {
                cand[a] += scale * step[a];
            }
            let (cand_ll, cand_score, cand_info) = work.evaluate(&cand, true);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-14 * (1.0 + ll.abs()) {
                let improvement = cand_ll - ll;
                let moved = scale * step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
                beta = cand;
                ll = cand_ll;
                score = cand_score;
                info = cand_info;
                accepted = true;
                // see fit_logistic: a flat likelihood with a large step means
                // a monotone direction, not convergence
                if improvement.abs() <= LOGLIK_TOL * (1.0 + ll.abs()) && moved <= STEP_TOL {
                    converged = true;
                }
                break;
            }
            scale *= 0.5;
        }

        if beta.iter().any(|b| b.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Monotone);
        }
        if !accepted {
            converged = true;
        }
        if converged {
            break;
        }
    }

    let (l, used_ridge) = factor_with_ridge(&info)?;
    ridged |= used_ridge;
    let covariance = spd_inverse(&l);

    Ok(CoxFit {
        coefficients: beta,
        covariance,
        converged,
        iterations,
        ridged,
        loglik: ll,
    })
}
