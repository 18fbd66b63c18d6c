//! EM estimation of the Cox proportional-hazards mixture cure model on
//! complete data, with bootstrap standard errors.
//!
//! The incidence (probability of being uncured) is logistic in X; the
//! latency (survival of the uncured) is a Cox model in Z with a
//! nonparametric baseline. The E-step computes posterior uncured weights q;
//! the M-step fits a fractional-outcome logistic model, a q-weighted Cox
//! partial likelihood, and the weighted Breslow baseline. Censored subjects
//! beyond the last event time are constrained to q = 0 (zero-tail
//! constraint), so the observed-data log-likelihood treats them as cured.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

use crate::data::{ModelSpec, ResolvedModel, SurvivalDataset};
use crate::error::{Error, Result};
use crate::glm::{
    breslow_cumhaz, expit, fit_cox_warm, fit_logistic_warm, softplus, StepFunction,
};
use crate::pool::Z_975;
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy)]
pub struct EmControls {
    /// Relative observed log-likelihood change below which EM stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmControls {
    fn default() -> Self {
        EmControls {
            tol: 1e-7,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CureFit {
    pub alpha0: f64,
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
    pub baseline: StepFunction,
    /// Posterior uncured weights at the returned parameters.
    pub q: Vec<f64>,
    /// Observed-data log-likelihood per EM iteration (initial point first).
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Bootstrap standard errors in `params()` order, when computed.
    pub se: Option<Vec<f64>>,
    pub ridged: bool,
}

impl CureFit {
    /// Parameter vector: alpha0, alpha..., beta...
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + self.alpha.len() + self.beta.len());
        out.push(self.alpha0);
        out.extend(self.alpha.iter());
        out.extend(self.beta.iter());
        out
    }

    pub fn n_params(&self) -> usize {
        1 + self.alpha.len() + self.beta.len()
    }
}

/// Report row names matching `CureFit::params()` order.
pub fn parameter_names(spec: &ModelSpec) -> Vec<String> {
    let mut names = vec!["alpha0".to_string()];
    for c in &spec.incidence {
        names.push(format!("alpha_{c}"));
    }
    for c in &spec.latency {
        names.push(format!("beta_{c}"));
    }
    names
}

/// Prebuilt designs shared by the E-step, M-step, and likelihood.
pub(crate) struct CureWork {
    pub y: Vec<f64>,
    pub delta: Vec<bool>,
    pub x: Array2<f64>,
    pub z: Array2<f64>,
    /// Last event time: the zero-tail cut-off.
    pub cutoff: f64,
}

impl CureWork {
    pub fn new(ds: &SurvivalDataset, resolved: &ResolvedModel) -> Result<CureWork> {
        let model_cols = resolved.model_cols();
        let missing = model_cols
            .iter()
            .map(|&j| ds.missing.column(j).iter().filter(|&&m| m).count())
            .sum::<usize>();
        if missing > 0 {
            return Err(Error::MissingDataPresent { count: missing });
        }
        let cutoff = ds.last_event_time().ok_or(Error::NoEvents)?;
        Ok(CureWork {
            y: ds.y.clone(),
            delta: ds.delta.clone(),
            x: ds.design(&resolved.x_cols),
            z: ds.design(&resolved.z_cols),
            cutoff,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }
}

pub(crate) fn e_step_core(
    work: &CureWork,
    alpha0: f64,
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    baseline: &StepFunction,
) -> Vec<f64> {
    let n = work.n();
    let mut q = vec![0.0; n];
    for i in 0..n {
        if work.delta[i] {
            q[i] = 1.0;
        } else if work.y[i] > work.cutoff {
            q[i] = 0.0;
        } else {
            let pi = expit(alpha0 + work.x.row(i).dot(alpha));
            let su = (-baseline.eval(work.y[i]) * work.z.row(i).dot(beta).exp()).exp();
            let denom = (1.0 - pi + pi * su).max(1e-300);
            q[i] = (pi * su / denom).clamp(0.0, 1.0);
        }
    }
    q
}

/// Posterior uncured weights for the given parameters, with the zero-tail
/// constraint applied to censored subjects beyond the last event time.
pub fn e_step(
    ds: &SurvivalDataset,
    spec: &ModelSpec,
    alpha0: f64,
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    baseline: &StepFunction,
) -> Result<Vec<f64>> {
    let resolved = spec.resolve(ds)?;
    let work = CureWork::new(ds, &resolved)?;
    Ok(e_step_core(&work, alpha0, alpha, beta, baseline))
}

/// Observed-data log-likelihood under the zero-tail convention: censored
/// subjects beyond the cut-off contribute log(1 - pi).
pub(crate) fn observed_loglik(
    work: &CureWork,
    alpha0: f64,
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    baseline: &StepFunction,
) -> f64 {
    let mut ll = 0.0;
    for i in 0..work.n() {
        let eta_inc = alpha0 + work.x.row(i).dot(alpha);
        let eta_lat = work.z.row(i).dot(beta);
        if work.delta[i] {
            let h0 = baseline.increment_at(work.y[i]);
            debug_assert!(h0 > 0.0, "event time must be a baseline knot");
            ll += eta_inc - softplus(eta_inc) + h0.max(1e-300).ln() + eta_lat
                - baseline.eval(work.y[i]) * eta_lat.exp();
        } else if work.y[i] > work.cutoff {
            ll += -softplus(eta_inc);
        } else {
            let pi = expit(eta_inc);
            let su = (-baseline.eval(work.y[i]) * eta_lat.exp()).exp();
            ll += (1.0 - pi + pi * su).max(1e-300).ln();
        }
    }
    ll
}

/// Observed-data log-likelihood of the mixture cure model at the given
/// parameters, under the zero-tail convention.
pub fn cure_observed_loglik(
    ds: &SurvivalDataset,
    spec: &ModelSpec,
    alpha0: f64,
    alpha: &Array1<f64>,
    beta: &Array1<f64>,
    baseline: &StepFunction,
) -> Result<f64> {
    let resolved = spec.resolve(ds)?;
    let work = CureWork::new(ds, &resolved)?;
    Ok(observed_loglik(&work, alpha0, alpha, beta, baseline))
}

/// Fit the mixture cure model by EM.
///
/// Initial values come from `init` when given, otherwise from a logistic
/// fit with the event indicator as outcome and an unweighted Cox fit.
/// Non-convergence within `controls.max_iter` returns the last (best)
/// iterate flagged `converged = false`.
pub fn fit_cure_em(
    ds: &SurvivalDataset,
    spec: &ModelSpec,
    init: Option<&CureFit>,
    controls: &EmControls,
) -> Result<CureFit> {
    let resolved = spec.resolve(ds)?;
    let work = CureWork::new(ds, &resolved)?;
    fit_cure_core(&work, init, controls)
}

pub(crate) fn fit_cure_core(
    work: &CureWork,
    init: Option<&CureFit>,
    controls: &EmControls,
) -> Result<CureFit> {
    let n = work.n();
    let unit = vec![1.0; n];
    let mut ridged = false;

    let (mut alpha0, mut alpha, mut beta) = match init {
        Some(f) => (f.alpha0, f.alpha.clone(), f.beta.clone()),
        None => {
            let outcome: Vec<f64> = work.delta.iter().map(|&d| f64::from(d)).collect();
            let inc = fit_logistic_warm(&outcome, work.x.view(), &unit, None)?;
            let lat = fit_cox_warm(&work.y, &work.delta, work.z.view(), &unit, None)?;
            ridged |= inc.ridged || lat.ridged;
            (inc.intercept, inc.coefficients, lat.coefficients)
        }
    };
    let eta_lat: Vec<f64> = (0..n).map(|i| work.z.row(i).dot(&beta)).collect();
    let mut baseline = breslow_cumhaz(&work.y, &work.delta, &eta_lat, &unit)?;

    let mut trace = vec![observed_loglik(work, alpha0, &alpha, &beta, &baseline)];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..controls.max_iter {
        iterations = iter + 1;
        let q = e_step_core(work, alpha0, &alpha, &beta, &baseline);

        let inc = fit_logistic_warm(&q, work.x.view(), &unit, Some((alpha0, &alpha)))?;
        alpha0 = inc.intercept;
        alpha = inc.coefficients;
        let lat = fit_cox_warm(&work.y, &work.delta, work.z.view(), &q, Some(&beta))?;
        beta = lat.coefficients;
        ridged |= inc.ridged || lat.ridged;

        let eta_lat: Vec<f64> = (0..n).map(|i| work.z.row(i).dot(&beta)).collect();
        baseline = breslow_cumhaz(&work.y, &work.delta, &eta_lat, &q)?;

        let ll = observed_loglik(work, alpha0, &alpha, &beta, &baseline);
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev).abs() <= controls.tol * (1.0 + prev.abs()) {
            converged = true;
            break;
        }
    }

    // Posterior weights consistent with the returned parameters.
    let q = e_step_core(work, alpha0, &alpha, &beta, &baseline);

    Ok(CureFit {
        alpha0,
        alpha,
        beta,
        baseline,
        q,
        loglik_trace: trace,
        converged,
        iterations,
        se: None,
        ridged,
    })
}

#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    /// Per-parameter standard deviation over converged resamples,
    /// in `CureFit::params()` order.
    pub se: Vec<f64>,
    pub failures: usize,
    pub used: usize,
}

/// Standard deviation across resample fits; resamples that fail to
/// converge are dropped and counted by the caller.
pub(crate) fn se_from_estimates(estimates: &[Vec<f64>]) -> Vec<f64> {
    let k = estimates.len();
    let p = estimates[0].len();
    let mut se = vec![0.0; p];
    for j in 0..p {
        let mean = estimates.iter().map(|e| e[j]).sum::<f64>() / k as f64;
        let ss = estimates
            .iter()
            .map(|e| (e[j] - mean).powi(2))
            .sum::<f64>();
        se[j] = (ss / (k as f64 - 1.0)).sqrt();
    }
    se
}

/// Bootstrap standard errors for a cure-model fit.
///
/// Resample b draws its rows from an independent stream keyed by
/// `(seed, b)`, so results do not depend on worker scheduling.
pub fn bootstrap_se(
    ds: &SurvivalDataset,
    spec: &ModelSpec,
    b_boot: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    let parent = fit_cure_em(ds, spec, None, &EmControls::default())?;
    bootstrap_around(ds, spec, &parent, &EmControls::default(), b_boot, seed)
}

pub(crate) fn bootstrap_around(
    ds: &SurvivalDataset,
    spec: &ModelSpec,
    parent: &CureFit,
    controls: &EmControls,
    b_boot: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    if b_boot < 2 {
        return Err(Error::InvalidConfig {
            detail: format!("bootstrap needs at least 2 resamples, got {b_boot}"),
        });
    }
    let n = ds.n();
    let fits: Vec<Option<Vec<f64>>> = (0..b_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, &[tag::BOOTSTRAP, b as u64]);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resample = ds.subset(&rows);
            match fit_cure_em(&resample, spec, Some(parent), controls) {
                Ok(fit) if fit.converged => Some(fit.params()),
                _ => None,
            }
        })
        .collect();

    let estimates: Vec<Vec<f64>> = fits.into_iter().flatten().collect();
    let used = estimates.len();
    let failures = b_boot - used;
    if failures * 2 > b_boot || used < 2 {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: b_boot,
        });
    }
    Ok(BootstrapSummary {
        se: se_from_estimates(&estimates),
        failures,
        used,
    })
}

/// Fit plus bootstrap SEs in one call; the parent fit warm-starts every
/// resample. The returned fit carries the SEs.
pub fn fit_cure_with_se(
    ds: &SurvivalDataset,
    spec: &ModelSpec,
    controls: &EmControls,
    b_boot: usize,
    seed: u64,
) -> Result<(CureFit, BootstrapSummary)> {
    let mut parent = fit_cure_em(ds, spec, None, controls)?;
    let boot = bootstrap_around(ds, spec, &parent, controls, b_boot, seed)?;
    parent.se = Some(boot.se.clone());
    Ok((parent, boot))
}

/// Survival summaries for one covariate profile.
pub struct Prediction<'a> {
    fit: &'a CureFit,
    pi: f64,
    eta_lat: f64,
}

/// Cure probability and survival curves for a subject with incidence row
/// `x_row` and latency row `z_row`.
pub fn predict<'a>(fit: &'a CureFit, x_row: &[f64], z_row: &[f64]) -> Prediction<'a> {
    assert_eq!(x_row.len(), fit.alpha.len());
    assert_eq!(z_row.len(), fit.beta.len());
    let eta_inc = fit.alpha0
        + fit
            .alpha
            .iter()
            .zip(x_row)
            .map(|(a, x)| a * x)
            .sum::<f64>();
    let eta_lat = fit
        .beta
        .iter()
        .zip(z_row)
        .map(|(b, z)| b * z)
        .sum::<f64>();
    Prediction {
        fit,
        pi: expit(eta_inc),
        eta_lat,
    }
}

impl<'a> Prediction<'a> {
    pub fn cure_probability(&self) -> f64 {
        1.0 - self.pi
    }

    pub fn uncured_survival(&self, t: f64) -> f64 {
        (-self.fit.baseline.eval(t) * self.eta_lat.exp()).exp()
    }

    pub fn overall_survival(&self, t: f64) -> f64 {
        (1.0 - self.pi) + self.pi * self.uncured_survival(t)
    }
}

/// Fit report CSV: parameter, estimate, SE, and 95% CI bounds.
pub fn write_fit_csv(
    path: &std::path::Path,
    names: &[String],
    estimates: &[f64],
    se: Option<&[f64]>,
) -> Result<()> {
    let mut out = String::from("parameter,estimate,se,ci_lo,ci_hi\n");
    for (j, name) in names.iter().enumerate() {
        match se {
            Some(se) => {
                let half = Z_975 * se[j];
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    name,
                    estimates[j],
                    se[j],
                    estimates[j] - half,
                    estimates[j] + half
                ));
            }
            None => out.push_str(&format!("{},{},,,\n", name, estimates[j])),
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateKind, CovariateSpec, Placement};
    use approx::assert_abs_diff_eq;

    fn small_dataset() -> (SurvivalDataset, ModelSpec) {
        // 8 subjects, binary w (both), binary x (incidence), binary z (latency)
        let y = vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0];
        let delta = vec![true, true, false, true, false, true, false, false];
        let cols = vec![
            CovariateSpec::new("w", CovariateKind::Binary, Placement::Both),
            CovariateSpec::new("x", CovariateKind::Binary, Placement::IncidenceOnly),
            CovariateSpec::new("z", CovariateKind::Binary, Placement::LatencyOnly),
        ];
        let data = Array2::from_shape_vec(
            (8, 3),
            vec![
                1.0, 0.0, 1.0, //
                0.0, 1.0, 0.0, //
                1.0, 1.0, 1.0, //
                0.0, 0.0, 1.0, //
                1.0, 0.0, 0.0, //
                0.0, 1.0, 1.0, //
                1.0, 1.0, 0.0, //
                0.0, 0.0, 0.0,
            ],
        )
        .unwrap();
        let ds = SurvivalDataset::complete(y, delta, cols.clone(), data);
        let spec = ModelSpec::from_columns(&cols);
        (ds, spec)
    }

    #[test]
    fn e_step_is_one_on_events_and_zero_beyond_cutoff() {
        let (ds, spec) = small_dataset();
        let baseline = StepFunction::new(vec![0.5, 1.0, 2.0, 3.0], vec![0.1, 0.3, 0.6, 1.0]).unwrap();
        let q = e_step(
            &ds,
            &spec,
            0.4,
            &ndarray::array![-0.5, 0.2],
            &ndarray::array![0.3, -0.1],
            &baseline,
        )
        .unwrap();
        for i in 0..ds.n() {
            if ds.delta[i] {
                assert_eq!(q[i], 1.0);
            }
        }
        // last two subjects are censored beyond the last event time (3.0)
        assert_eq!(q[6], 0.0);
        assert_eq!(q[7], 0.0);
        assert!(q[2] > 0.0 && q[2] < 1.0);
    }

    #[test]
    fn e_step_plug_in_half() {
        // pi = 0.5 and S_u = 1 (before the first event) gives q = 0.5.
        let (ds, spec) = small_dataset();
        let baseline = StepFunction::new(vec![2.0], vec![0.5]).unwrap();
        let q = e_step(
            &ds,
            &spec,
            0.0,
            &ndarray::array![0.0, 0.0],
            &ndarray::array![0.0, 0.0],
            &baseline,
        )
        .unwrap();
        // subject 2 censored at 1.5 < first knot: S_u = 1
        assert_abs_diff_eq!(q[2], 0.5, epsilon = 1e-12);
    }

    fn generated_dataset(n: usize, seed: u64) -> (SurvivalDataset, ModelSpec) {
        let mut cfg = crate::sim::scenario_preset("A").unwrap();
        cfg.n = n;
        let mut rng = crate::rng::stream(seed, &[crate::rng::tag::GENERATE, 0]);
        let rep = crate::sim::generate_replicate(&cfg, &mut rng);
        let spec = cfg.model_spec();
        (rep.data, spec)
    }

    #[test]
    fn em_trace_is_monotone_and_q_respects_constraints() {
        let (ds, spec) = generated_dataset(150, 21);
        let fit = fit_cure_em(&ds, &spec, None, &EmControls::default()).unwrap();
        assert!(fit.converged);
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * (1.0 + w[0].abs()), "trace decreased: {w:?}");
        }
        let cutoff = ds.last_event_time().unwrap();
        for i in 0..ds.n() {
            if ds.delta[i] {
                assert_eq!(fit.q[i], 1.0);
            }
            if !ds.delta[i] && ds.y[i] > cutoff {
                assert_eq!(fit.q[i], 0.0);
            }
        }
    }

    #[test]
    fn no_censoring_flags_separation() {
        let (mut ds, spec) = generated_dataset(60, 22);
        ds.delta = vec![true; ds.n()];
        let res = fit_cure_em(&ds, &spec, None, &EmControls::default());
        assert!(matches!(res, Err(Error::Separation)));
    }

    #[test]
    fn predict_at_null_incidence_is_half() {
        let (ds, spec) = generated_dataset(150, 23);
        let mut fit = fit_cure_em(&ds, &spec, None, &EmControls::default()).unwrap();
        fit.alpha0 = 0.0;
        fit.alpha.fill(0.0);
        let pred = predict(&fit, &[1.0, 0.0], &[0.0, 1.0]);
        assert_abs_diff_eq!(pred.cure_probability(), 0.5, epsilon = 1e-12);
        // overall survival is bounded below by the cure probability
        let tail = pred.overall_survival(100.0);
        assert!(tail >= pred.cure_probability());
        assert_abs_diff_eq!(pred.uncured_survival(0.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_resamples_have_zero_se() {
        let a = vec![vec![1.0, -2.0], vec![1.0, -2.0], vec![1.0, -2.0]];
        let se = se_from_estimates(&a);
        assert_eq!(se, vec![0.0, 0.0]);
    }

    #[test]
    fn missing_cells_are_rejected() {
        let (mut ds, spec) = generated_dataset(40, 24);
        ds.missing[(0, 0)] = true;
        ds.data[(0, 0)] = f64::NAN;
        let res = fit_cure_em(&ds, &spec, None, &EmControls::default());
        assert!(matches!(res, Err(Error::MissingDataPresent { count: 1 })));
    }

    use ndarray::Array2;
}
