//! Weighted logistic regression by Newton-Raphson with step-halving.
//!
//! Outcomes may be fractional in [0,1]: the EM algorithm fits the incidence
//! model with posterior uncured weights as outcomes, which is the weighted
//! Bernoulli likelihood with success weight y and failure weight 1-y.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{chol_solve, cholesky_spd, spd_inverse};

pub(crate) const MAX_ITER: usize = 25;
pub(crate) const LOGLIK_TOL: f64 = 1e-8;
/// Largest accepted coefficient move still counting as converged.
pub(crate) const STEP_TOL: f64 = 1e-4;
/// expit saturates and the information matrix degenerates well before this.
pub(crate) const DIVERGENCE_BOUND: f64 = 20.0;
pub(crate) const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficients: Array1<f64>,
    /// Joint covariance of (intercept, coefficients): inverse observed
    /// information at the optimum.
    pub covariance: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// True when the information matrix needed a ridge before inversion.
    pub ridged: bool,
    pub loglik: f64,
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: ArrayView1<f64>) -> f64 {
        self.intercept + self.coefficients.dot(&row)
    }

    /// Parameter vector with the intercept first.
    pub fn params(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.coefficients.len() + 1);
        out[0] = self.intercept;
        for (k, &c) in self.coefficients.iter().enumerate() {
            out[k + 1] = c;
        }
        out
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn loglik(outcome: &[f64], weights: &[f64], eta: &Array1<f64>) -> f64 {
    let mut ll = 0.0;
    for i in 0..outcome.len() {
        if weights[i] > 0.0 {
            ll += weights[i] * (outcome[i] * eta[i] - softplus(eta[i]));
        }
    }
    ll
}

fn eta_for(design: &ArrayView2<f64>, intercept: f64, coef: &Array1<f64>) -> Array1<f64> {
    let mut eta = design.dot(coef);
    eta += intercept;
    eta
}

/// Weighted Bernoulli log-likelihood and its score at the given parameters
/// (intercept first in the score vector).
pub fn logistic_loglik(
    outcome: &[f64],
    design: ArrayView2<f64>,
    weights: &[f64],
    intercept: f64,
    coef: &Array1<f64>,
) -> (f64, Array1<f64>) {
    let n = design.nrows();
    let p = design.ncols();
    let eta = eta_for(&design, intercept, coef);
    let ll = loglik(outcome, weights, &eta);
    let mut score = Array1::<f64>::zeros(p + 1);
    for i in 0..n {
        let w = weights[i];
        if w <= 0.0 {
            continue;
        }
        let resid = w * (outcome[i] - expit(eta[i]));
        score[0] += resid;
        for a in 0..p {
            score[a + 1] += resid * design[(i, a)];
        }
    }
    (ll, score)
}

/// Maximize the weighted Bernoulli log-likelihood; an intercept column is
/// handled internally. `outcome` entries must lie in [0,1], weights must be
/// nonnegative with positive sum.
pub fn fit_logistic(
    outcome: &[f64],
    design: ArrayView2<f64>,
    weights: &[f64],
) -> Result<LogisticFit> {
    fit_logistic_warm(outcome, design, weights, None)
}

pub(crate) fn fit_logistic_warm(
    outcome: &[f64],
    design: ArrayView2<f64>,
    weights: &[f64],
    start: Option<(f64, &Array1<f64>)>,
) -> Result<LogisticFit> {
    let n = design.nrows();
    let p = design.ncols();
    assert_eq!(outcome.len(), n);
    assert_eq!(weights.len(), n);
    debug_assert!(outcome.iter().all(|&v| (0.0..=1.0).contains(&v)));
    debug_assert!(weights.iter().all(|&w| w >= 0.0));
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidConfig {
            detail: "weights sum to zero".into(),
        });
    }

    let mut intercept;
    let mut coef;
    match start {
        Some((b0, b)) => {
            intercept = b0;
            coef = b.clone();
        }
        None => {
            intercept = 0.0;
            coef = Array1::zeros(p);
        }
    }

    let dim = p + 1;
    let mut eta = eta_for(&design, intercept, &coef);
    let mut ll = loglik(outcome, weights, &eta);
    let mut converged = false;
    let mut ridged = false;
    let mut iterations = 0;
    let mut info = Array2::<f64>::zeros((dim, dim));
    let mut score = Array1::<f64>::zeros(dim);

    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        score.fill(0.0);
        info.fill(0.0);
        for i in 0..n {
            let w = weights[i];
            if w <= 0.0 {
                continue;
            }
            let pr = expit(eta[i]);
            let resid = w * (outcome[i] - pr);
            let v = w * pr * (1.0 - pr);
            score[0] += resid;
            info[(0, 0)] += v;
            for a in 0..p {
                let xa = design[(i, a)];
                score[a + 1] += resid * xa;
                info[(0, a + 1)] += v * xa;
                for b in a..p {
                    info[(a + 1, b + 1)] += v * xa * design[(i, b)];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }

        check_structural_rank(&info)?;
        let (l, used_ridge) = factor_with_ridge(&info)?;
        ridged |= used_ridge;
        let step = chol_solve(&l, &score);

        // Step-halving until the log-likelihood does not decrease.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand_intercept = intercept + scale * step[0];
            let cand_coef = {
                let mut c = coef.clone();
                for a in 0..p {
                    c[a] += scale * step[a + 1];
                }
                c
            };
            let cand_eta = eta_for(&design, cand_intercept, &cand_coef);
            let cand_ll = loglik(outcome, weights, &cand_eta);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-14 * (1.0 + ll.abs()) {
                let improvement = cand_ll - ll;
                let moved = scale * step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
                intercept = cand_intercept;
                coef = cand_coef;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                // A tiny likelihood change alone is not convergence: on a
                // separation ridge the likelihood flattens while the
                // coefficients still march toward infinity.
                if improvement.abs() <= LOGLIK_TOL * (1.0 + ll.abs()) && moved <= STEP_TOL {
                    converged = true;
                }
                break;
            }
            scale *= 0.5;
        }

        if intercept.abs() > DIVERGENCE_BOUND || coef.iter().any(|c| c.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Separation);
        }
        if !accepted {
            converged = true; // no ascent direction improves: at a maximum
        }
        if converged {
            break;
        }
    }

    // Covariance from the information at the final iterate.
    score.fill(0.0);
    info.fill(0.0);
    for i in 0..n {
        let w = weights[i];
        if w <= 0.0 {
            continue;
        }
        let pr = expit(eta[i]);
        let v = w * pr * (1.0 - pr);
        info[(0, 0)] += v;
        for a in 0..p {
            let xa = design[(i, a)];
            info[(0, a + 1)] += v * xa;
            for b in a..p {
                info[(a + 1, b + 1)] += v * xa * design[(i, b)];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    let (l, used_ridge) = factor_with_ridge(&info)?;
    ridged |= used_ridge;
    let covariance = spd_inverse(&l);

    Ok(LogisticFit {
        intercept,
        coefficients: coef,
        covariance,
        converged,
        iterations,
        ridged,
        loglik: ll,
    })
}

/// A diagonal entry that vanishes relative to the rest marks a column with
/// no variation on the weighted support.
pub(crate) fn check_structural_rank(info: &Array2<f64>) -> Result<()> {
    let dim = info.nrows();
    let scale = (0..dim).map(|i| info[(i, i)]).fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(Error::RankDeficient { column: 0 });
    }
    for i in 0..dim {
        if info[(i, i)] < 1e-12 * scale {
            return Err(Error::RankDeficient { column: i });
        }
    }
    Ok(())
}

/// Cholesky with a one-shot ridge retry for near-singular matrices.
pub(crate) fn factor_with_ridge(info: &Array2<f64>) -> Result<(Array2<f64>, bool)> {
    if let Some(l) = cholesky_spd(info) {
        return Ok((l, false));
    }
    let dim = info.nrows();
    let scale = (0..dim).map(|i| info[(i, i)]).fold(0.0, f64::max);
    let mut ridged = info.clone();
    for i in 0..dim {
        ridged[(i, i)] += RIDGE * scale.max(1.0);
    }
    match cholesky_spd(&ridged) {
        Some(l) => Ok((l, true)),
        None => Err(Error::RankDeficient { column: 0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    #[test]
    fn intercept_only_symmetric_data() {
        let design = Array2::<f64>::zeros((2, 0));
        let fit = fit_logistic(&[0.0, 1.0], design.view(), &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-10);
        assert!(fit.converged);
    }

    #[test]
    fn all_successes_triggers_separation_guard() {
        let design = Array2::<f64>::zeros((3, 0));
        let err = fit_logistic(&[1.0, 1.0, 1.0], design.view(), &[1.0, 1.0, 1.0]);
        assert!(matches!(err, Err(Error::Separation)));
    }

    #[test]
    fn quasi_separated_slope_triggers_separation_guard() {
        // x=0 mixed outcomes, x=1 all successes: the slope MLE is infinite.
        let design = Array2::from_shape_vec((4, 1), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let err = fit_logistic(&[0.0, 1.0, 1.0, 1.0], design.view(), &[1.0; 4]);
        assert!(matches!(err, Err(Error::Separation)));
    }

    #[test]
    fn zero_column_is_rank_deficient() {
        let design = Array2::<f64>::zeros((4, 1));
        let err = fit_logistic(&[0.0, 1.0, 0.0, 1.0], design.view(), &[1.0; 4]);
        assert!(matches!(err, Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn fractional_outcomes_match_row_expansion() {
        // Fitting fractional outcomes q equals fitting the expanded dataset
        // with outcome 1 (weight q) and outcome 0 (weight 1-q).
        let x = vec![0.2, -0.4, 1.3, 0.7, -1.0];
        let q = vec![0.9, 0.3, 0.5, 0.8, 0.1];
        let design = Array2::from_shape_vec((5, 1), x.clone()).unwrap();
        let frac = fit_logistic(&q, design.view(), &[1.0; 5]).unwrap();

        let mut x2 = Vec::new();
        let mut y2 = Vec::new();
        let mut w2 = Vec::new();
        for i in 0..5 {
            x2.push(x[i]);
            y2.push(1.0);
            w2.push(q[i]);
            x2.push(x[i]);
            y2.push(0.0);
            w2.push(1.0 - q[i]);
        }
        let design2 = Array2::from_shape_vec((10, 1), x2).unwrap();
        let expanded = fit_logistic(&y2, design2.view(), &w2).unwrap();
        assert_abs_diff_eq!(frac.intercept, expanded.intercept, epsilon = 1e-8);
        assert_abs_diff_eq!(
            frac.coefficients[0],
            expanded.coefficients[0],
            epsilon = 1e-8
        );
    }

    #[test]
    fn covariance_is_symmetric_and_probabilities_interior() {
        let design =
            Array2::from_shape_vec((6, 1), vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5]).unwrap();
        let y = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let fit = fit_logistic(&y, design.view(), &[1.0; 6]).unwrap();
        let c = &fit.covariance;
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(c[(i, j)], c[(j, i)], epsilon = 1e-12);
            }
        }
        for i in 0..6 {
            let p = expit(fit.linear_predictor(design.row(i)));
            assert!(p > 0.0 && p < 1.0);
        }
    }
}
