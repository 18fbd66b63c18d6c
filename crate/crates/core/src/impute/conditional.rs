//! Exact conditional distributions of a partially observed covariate given
//! everything else, and the samplers that draw from them.
//!
//! The conditional of a covariate W given the remaining covariates, the
//! survival outcome, and the uncured indicator factors into an incidence
//! block (present when W enters the incidence design), a latency block
//! (present when W enters the latency design), and the covariate model
//! N(mu, sigma) or Bernoulli(expit(mu)). Binary targets have a closed-form
//! logit; continuous targets are sampled by random-walk Metropolis-Hastings
//! on the unnormalized log density.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::CovariateKind;
use crate::error::{Error, Result};
use crate::glm::{fit_linear, fit_logistic, softplus};
use crate::linalg::mvn_sample;

/// Everything the exact conditional of one cell depends on besides the
/// target value itself.
#[derive(Debug, Clone, Copy)]
pub struct CellConditional {
    /// Current uncured indicator (0 or 1).
    pub g: f64,
    /// Event indicator (0 or 1).
    pub delta: f64,
    /// Baseline cumulative hazard at the subject's follow-up time.
    pub h0y: f64,
    /// (incidence linear predictor excluding the target term but including
    /// the intercept, target coefficient); None when the target does not
    /// enter the incidence design.
    pub incidence: Option<(f64, f64)>,
    /// (latency linear predictor excluding the target term, target
    /// coefficient); None when the target does not enter the latency design.
    pub latency: Option<(f64, f64)>,
    /// Conditional covariate-model mean for this cell.
    pub mu: f64,
}

/// Closed-form logit of P(W = 1 | everything else) for a binary target.
pub fn exact_binary_logit(c: &CellConditional) -> f64 {
    let mut logit = c.mu;
    if let Some((a, a_j)) = c.incidence {
        logit += c.g * a_j + softplus(a) - softplus(a + a_j);
    }
    if let Some((b, b_l)) = c.latency {
        logit += c.g * (c.delta * b_l - c.h0y * b.exp() * b_l.exp_m1());
    }
    logit
}

/// Unnormalized log density of a continuous target at `w`. Finite for all
/// finite inputs: overflowing hazard terms saturate instead of producing
/// NaN.
pub fn exact_log_density(c: &CellConditional, sigma: f64, w: f64) -> f64 {
    let dev = (w - c.mu) / sigma;
    let mut lt = -0.5 * dev * dev;
    if let Some((a, a_j)) = c.incidence {
        let eta = a + a_j * w;
        lt += c.g * eta - softplus(eta);
    }
    if let Some((b, b_l)) = c.latency {
        let eta = b + b_l * w;
        lt += c.g * c.delta * eta;
        if c.g > 0.0 {
            lt -= c.g * c.h0y * eta.min(700.0).exp();
        }
    }
    if lt.is_finite() {
        lt
    } else {
        -1e300
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MhStats {
    pub proposals: u64,
    pub accepts: u64,
}

/// Random-walk Metropolis-Hastings on the exact conditional of a continuous
/// target. Runs `burn` steps, then keeps every `thin`-th state `n_keep`
/// times. Acceptance below 1% during a burn-in of at least 100 steps aborts
/// with `ZeroAcceptance`.
pub fn metropolis_run<R: Rng>(
    c: &CellConditional,
    sigma: f64,
    start: f64,
    burn: usize,
    thin: usize,
    n_keep: usize,
    proposal_sd: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, MhStats)> {
    let thin = thin.max(1);
    let mut w = start;
    let mut lp = exact_log_density(c, sigma, w);
    let mut stats = MhStats::default();
    let mut burn_accepts = 0u64;

    let step = |w: &mut f64, lp: &mut f64, rng: &mut R| -> bool {
        let z: f64 = rng.sample(StandardNormal);
        let proposal = *w + proposal_sd * z;
        let lp_new = exact_log_density(c, sigma, proposal);
        let log_ratio = lp_new - *lp;
        if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
            *w = proposal;
            *lp = lp_new;
            true
        } else {
            false
        }
    };

    for _ in 0..burn {
        stats.proposals += 1;
        if step(&mut w, &mut lp, rng) {
            stats.accepts += 1;
            burn_accepts += 1;
        }
    }
    if burn >= 100 {
        let rate = burn_accepts as f64 / burn as f64;
        if rate < 0.01 {
            return Err(Error::ZeroAcceptance { rate });
        }
    }

    let mut kept = Vec::with_capacity(n_keep);
    for _ in 0..n_keep {
        for _ in 0..thin {
            stats.proposals += 1;
            if step(&mut w, &mut lp, rng) {
                stats.accepts += 1;
            }
        }
        kept.push(w);
    }
    Ok((kept, stats))
}

// ---------------------------------------------------------------------------
// Covariate conditional model: fit and posterior draw
// ---------------------------------------------------------------------------

/// Regression of the target on the other covariates (the mu model).
#[derive(Debug, Clone)]
pub(crate) struct ConditionalModel {
    /// Intercept-first coefficient estimates.
    pub theta: Array1<f64>,
    pub covariance: Array2<f64>,
    /// Residual sd for continuous targets.
    pub sigma: Option<f64>,
    /// Rows used in the fit (for the sigma draw scale).
    pub n_fit: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct ConditionalDraw {
    pub theta: Array1<f64>,
    pub sigma: Option<f64>,
}

pub(crate) fn fit_conditional(
    outcome: &[f64],
    design: &Array2<f64>,
    kind: CovariateKind,
) -> Result<ConditionalModel> {
    let n_fit = outcome.len();
    match kind {
        CovariateKind::Continuous => {
            let fit = fit_linear(outcome, design.view())?;
            Ok(ConditionalModel {
                theta: fit.params(),
                covariance: fit.covariance,
                sigma: Some(fit.sigma.max(1e-6)),
                n_fit,
            })
        }
        CovariateKind::Binary => {
            let unit = vec![1.0; n_fit];
            let fit = fit_logistic(outcome, design.view(), &unit)?;
            Ok(ConditionalModel {
                theta: fit.params(),
                covariance: fit.covariance,
                sigma: None,
                n_fit,
            })
        }
    }
}

/// Posterior draw of the conditional-model parameters: theta* from its
/// asymptotic normal, sigma* from N(sigma, sigma/sqrt(2 n)) floored at 1e-6.
pub(crate) fn draw_conditional<R: Rng>(
    model: &ConditionalModel,
    rng: &mut R,
) -> ConditionalDraw {
    let theta = mvn_sample(&model.theta, &model.covariance, rng);
    let sigma = model.sigma.map(|s| {
        let sd = s / (2.0 * model.n_fit as f64).sqrt();
        let z: f64 = rng.sample(StandardNormal);
        (s + sd * z).max(1e-6)
    });
    ConditionalDraw { theta, sigma }
}
