//! Simulation lab: scenario presets, replicate generation, MCAR/MAR
//! amputation, and the replicated study with MSE / CI-width / coverage
//! metrics.
//!
//! Covariates (w, x, z) come from a Gaussian copula with pairwise latent
//! correlation 0.5, thresholded or shifted into their marginals. Uncured
//! event times follow a Weibull proportional-hazards model truncated at the
//! event horizon; censoring is exponential capped at the study end, which
//! produces the administrative plateau of censored subjects beyond the last
//! event.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cure::{fit_cure_with_se, parameter_names, EmControls};
use crate::data::{CovariateKind, CovariateSpec, ModelSpec, Placement, SurvivalDataset};
use crate::error::{Error, Result};
use crate::glm::expit;
use crate::impute::{run_chained_equations, ImputationConfig, ImputationMethod};
use crate::pool::pool;
use crate::rng::{child_seed, stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WKind {
    Binary { p: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingMechanism {
    Mcar,
    Mar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub alpha0: f64,
    pub alpha_w: f64,
    pub alpha_x: f64,
    pub alpha_z: f64,
    pub beta_w: f64,
    pub beta_x: f64,
    pub beta_z: f64,
    pub w_kind: WKind,
    /// Pairwise latent correlation of (w, x, z).
    pub correlation: f64,
    pub weibull_lambda: f64,
    pub weibull_rho: f64,
    pub event_truncation: f64,
    pub censor_rate: f64,
    pub censor_truncation: f64,
    pub missing_mech: MissingMechanism,
    pub missing_frac: f64,
    /// Saturated layout: x and z enter both model components.
    pub full_model: bool,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn columns(&self) -> Vec<CovariateSpec> {
        let w_kind = match self.w_kind {
            WKind::Binary { .. } => CovariateKind::Binary,
            WKind::Normal { .. } => CovariateKind::Continuous,
        };
        let (x_place, z_place) = if self.full_model {
            (Placement::Both, Placement::Both)
        } else {
            (Placement::IncidenceOnly, Placement::LatencyOnly)
        };
        vec![
            CovariateSpec::new("w", w_kind, Placement::Both),
            CovariateSpec::new("x", CovariateKind::Binary, x_place),
            CovariateSpec::new("z", CovariateKind::Binary, z_place),
        ]
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::from_columns(&self.columns())
    }

    /// True parameter values aligned with `parameter_names(model_spec())`.
    pub fn truth(&self) -> Vec<(String, f64)> {
        let spec = self.model_spec();
        parameter_names(&spec)
            .into_iter()
            .map(|name| {
                let value = match name.as_str() {
                    "alpha0" => self.alpha0,
                    "alpha_w" => self.alpha_w,
                    "alpha_x" => self.alpha_x,
                    "alpha_z" => self.alpha_z,
                    "beta_w" => self.beta_w,
                    "beta_x" => self.beta_x,
                    "beta_z" => self.beta_z,
                    other => unreachable!("unknown parameter {other}"),
                };
                (name, value)
            })
            .collect()
    }
}

/// Named presets A-F.
pub fn scenario_presets() -> Vec<ScenarioConfig> {
    let base = ScenarioConfig {
        name: "B".into(),
        n: 500,
        alpha0: 0.1,
        alpha_w: 0.5,
        alpha_x: 0.5,
        alpha_z: 0.0,
        beta_w: 0.5,
        beta_x: 0.0,
        beta_z: 0.5,
        w_kind: WKind::Normal { mean: 0.5, sd: 1.0 },
        correlation: 0.5,
        weibull_lambda: 0.25,
        weibull_rho: 1.45,
        event_truncation: 8.0,
        censor_rate: 0.1,
        censor_truncation: 10.0,
        missing_mech: MissingMechanism::Mcar,
        missing_frac: 0.30,
        full_model: false,
        seed: 0,
    };
    let mut a = base.clone();
    a.name = "A".into();
    a.alpha0 = 1.0;
    a.alpha_w = -1.0;
    a.alpha_x = 0.5;
    a.beta_w = -0.2;
    a.beta_z = 0.0;
    a.w_kind = WKind::Binary { p: 0.5 };
    a.censor_rate = 0.08;
    a.missing_frac = 0.15;

    let mut c = base.clone();
    c.name = "C".into();
    c.missing_mech = MissingMechanism::Mar;

    let mut d = c.clone();
    d.name = "D".into();
    d.full_model = true;

    let mut e = c.clone();
    e.name = "E".into();
    e.beta_w = 0.0;

    let mut f = c.clone();
    f.name = "F".into();
    f.alpha_w = 0.0;

    vec![a, base, c, d, e, f]
}

pub fn scenario_preset(name: &str) -> Result<ScenarioConfig> {
    scenario_presets()
        .into_iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownScenario {
            name: name.to_string(),
        })
}

// ---------------------------------------------------------------------------
// Replicate generation
// ---------------------------------------------------------------------------

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9; exact at p = 0.5).
fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

#[cfg(test)]
trait ErfcApprox {
    fn erfc_approx(self) -> f64;
}

#[cfg(test)]
impl ErfcApprox for f64 {
    /// Numerical Recipes' erfc with ~1.2e-7 relative accuracy.
    fn erfc_approx(self) -> f64 {
        let z = self.abs();
        let t = 1.0 / (1.0 + 0.5 * z);
        let ans = t
            * (-z * z - 1.26551223
                + t * (1.00002368
                    + t * (0.37409196
                        + t * (0.09678418
                            + t * (-0.18628806
                                + t * (0.27886807
                                    + t * (-1.13520398
                                        + t * (1.48851587
                                            + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
        if self >= 0.0 {
            ans
        } else {
            2.0 - ans
        }
    }
}

#[derive(Debug, Clone)]
pub struct Replicate {
    pub data: SurvivalDataset,
    /// Latent uncured indicator used to generate the follow-up times.
    pub latent_uncured: Vec<bool>,
    /// Achieved Pearson correlations (w-x, w-z, x-z).
    pub correlations: (f64, f64, f64),
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut sa = 0.0;
    let mut sb = 0.0;
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        sab += da * db;
        sa += da * da;
        sb += db * db;
    }
    sab / (sa.sqrt() * sb.sqrt())
}

/// Generate one complete replicate plus the latent truth.
pub fn generate_replicate<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Replicate {
    let n = cfg.n;
    let rho = cfg.correlation;
    // Cholesky of the 3x3 equicorrelation matrix.
    let l21 = rho;
    let l22 = (1.0 - rho * rho).sqrt();
    let l31 = rho;
    let l32 = (rho - rho * rho) / l22;
    let l33 = (1.0 - l31 * l31 - l32 * l32).sqrt();

    // P(w = 1) = P(u > qnorm(1-p)) = p, oriented so that w rises with the
    // shared latent factor like x and z do.
    let w_threshold = match cfg.w_kind {
        WKind::Binary { p } => inverse_normal_cdf(1.0 - p),
        WKind::Normal { .. } => 0.0,
    };

    let mut w_col = Vec::with_capacity(n);
    let mut x_col = Vec::with_capacity(n);
    let mut z_col = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    let mut latent_uncured = Vec::with_capacity(n);

    for _ in 0..n {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let e3: f64 = rng.sample(StandardNormal);
        let uw = e1;
        let ux = l21 * e1 + l22 * e2;
        let uz = l31 * e1 + l32 * e2 + l33 * e3;

        let w = match cfg.w_kind {
            WKind::Binary { .. } => f64::from(uw > w_threshold),
            WKind::Normal { mean, sd } => mean + sd * uw,
        };
        let x = f64::from(ux > 0.0);
        let z = f64::from(uz > 0.0);

        let pi = expit(cfg.alpha0 + cfg.alpha_w * w + cfg.alpha_x * x + cfg.alpha_z * z);
        let uncured = rng.random::<f64>() < pi;

        // Event time: Weibull PH conditionally truncated at the horizon.
        // Cured subjects get a sentinel far beyond any censoring time.
        let u_t: f64 = rng.random();
        let t = if uncured {
            let hr = (cfg.beta_w * w + cfg.beta_x * x + cfg.beta_z * z).exp();
            let s_tau =
                (-cfg.weibull_lambda * cfg.event_truncation.powf(cfg.weibull_rho) * hr).exp();
            let v = s_tau + u_t * (1.0 - s_tau);
            (-v.ln() / (cfg.weibull_lambda * hr)).powf(1.0 / cfg.weibull_rho)
        } else {
            10.0 * cfg.censor_truncation
        };

        let u_c: f64 = rng.random();
        let c = (-(1.0 - u_c).ln() / cfg.censor_rate).min(cfg.censor_truncation);

        y.push(t.min(c));
        delta.push(t < c);
        latent_uncured.push(uncured);
        w_col.push(w);
        x_col.push(x);
        z_col.push(z);
    }

    let correlations = (
        pearson(&w_col, &x_col),
        pearson(&w_col, &z_col),
        pearson(&x_col, &z_col),
    );

    let mut data = Array2::<f64>::zeros((n, 3));
    for i in 0..n {
        data[(i, 0)] = w_col[i];
        data[(i, 1)] = x_col[i];
        data[(i, 2)] = z_col[i];
    }
    Replicate {
        data: SurvivalDataset::complete(y, delta, cfg.columns(), data),
        latent_uncured,
        correlations,
    }
}

// ---------------------------------------------------------------------------
// Amputation
// ---------------------------------------------------------------------------

/// Standardized MAR score over (other covariates, y, delta). Covariates and
/// the follow-up time carry weight +1; the event indicator carries weight
/// -1, so missingness loads on long censored follow-up (the plateau region)
/// rather than cancelling between late times and event status.
pub(crate) fn mar_scores(ds: &SurvivalDataset, target: usize) -> Vec<f64> {
    let n = ds.n();
    let mut score = vec![0.0; n];
    let add = |values: &[f64], weight: f64, score: &mut Vec<f64>| {
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 1e-24 {
            let sd = var.sqrt();
            for i in 0..n {
                score[i] += weight * (values[i] - mean) / sd;
            }
        }
    };
    for j in 0..ds.p() {
        if j != target {
            let col: Vec<f64> = (0..n).map(|i| ds.data[(i, j)]).collect();
            add(&col, 1.0, &mut score);
        }
    }
    add(&ds.y, 1.0, &mut score);
    let d: Vec<f64> = ds.delta.iter().map(|&d| f64::from(d)).collect();
    add(&d, -1.0, &mut score);
    score
}

/// Intercept c such that mean(expit(c + score)) equals `frac`, by bisection.
pub(crate) fn calibrate_intercept(scores: &[f64], frac: f64) -> f64 {
    let mean_prob = |c: f64| scores.iter().map(|&s| expit(c + s)).sum::<f64>() / scores.len() as f64;
    let mut lo = -50.0;
    let mut hi = 50.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_prob(mid) < frac {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mask the `w` column under the requested mechanism. Only the mask (and the
/// masked cells, set to NaN) change; observed values are untouched.
pub fn ampute<R: Rng>(
    ds: &SurvivalDataset,
    mech: MissingMechanism,
    frac: f64,
    rng: &mut R,
) -> Result<SurvivalDataset> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidConfig {
            detail: format!("missing fraction {frac} outside (0,1)"),
        });
    }
    let target = ds
        .column_index("w")
        .ok_or_else(|| Error::SpecColumnUnknown { name: "w".into() })?;

    let n = ds.n();
    let probs: Vec<f64> = match mech {
        MissingMechanism::Mcar => vec![frac; n],
        MissingMechanism::Mar => {
            let scores = mar_scores(ds, target);
            let c = calibrate_intercept(&scores, frac);
            scores.iter().map(|&s| expit(c + s)).collect()
        }
    };

    let mut out = ds.clone();
    for i in 0..n {
        if rng.random::<f64>() < probs[i] {
            out.missing[(i, target)] = true;
            out.data[(i, target)] = f64::NAN;
        }
    }
    out.refresh_has_missing();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Study runner
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyMethod {
    FullData,
    CompleteCase,
    Exact,
    Approximate,
}

impl StudyMethod {
    fn tag_id(self) -> u64 {
        match self {
            StudyMethod::FullData => 0,
            StudyMethod::CompleteCase => 1,
            StudyMethod::Exact => 2,
            StudyMethod::Approximate => 3,
        }
    }

    pub fn all() -> [StudyMethod; 4] {
        [
            StudyMethod::FullData,
            StudyMethod::CompleteCase,
            StudyMethod::Exact,
            StudyMethod::Approximate,
        ]
    }
}

impl std::str::FromStr for StudyMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "full-data" => Ok(StudyMethod::FullData),
            "complete-case" | "cc" => Ok(StudyMethod::CompleteCase),
            "exact" => Ok(StudyMethod::Exact),
            "approximate" | "approx" => Ok(StudyMethod::Approximate),
            other => Err(Error::InvalidConfig {
                detail: format!("unknown method `{other}`"),
            }),
        }
    }
}

impl std::fmt::Display for StudyMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StudyMethod::FullData => "full",
            StudyMethod::CompleteCase => "complete-case",
            StudyMethod::Exact => "exact",
            StudyMethod::Approximate => "approximate",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub b: usize,
    pub methods: Vec<StudyMethod>,
    pub imputation: ImputationConfig,
    pub b_boot: usize,
    pub em: EmControls,
    pub seed: u64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            b: 100,
            methods: StudyMethod::all().to_vec(),
            imputation: ImputationConfig::default(),
            b_boot: 100,
            em: EmControls::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: StudyMethod,
    pub parameter: String,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub method: StudyMethod,
    pub parameter: String,
    pub mse: f64,
    pub mean_ci_width: f64,
    pub coverage: f64,
    pub used: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub scenario: String,
    pub b: usize,
    pub truth: Vec<(String, f64)>,
    pub metrics: Vec<MetricRow>,
    pub records: Vec<ReplicateRecord>,
}

impl StudyOutput {
    pub fn metric(&self, method: StudyMethod, parameter: &str) -> Option<&MetricRow> {
        self.metrics
            .iter()
            .find(|m| m.method == method && m.parameter == parameter)
    }
}

type MethodOutcome = std::result::Result<Vec<(f64, f64, f64)>, String>;

fn run_method(
    method: StudyMethod,
    complete: &SurvivalDataset,
    amputed: &SurvivalDataset,
    spec: &ModelSpec,
    opts: &StudyOptions,
    replicate: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    let b = replicate as u64;
    let boot_seed = child_seed(opts.seed, &[tag::BOOTSTRAP, b, method.tag_id()]);
    match method {
        StudyMethod::FullData => {
            let (fit, boot) = fit_cure_with_se(complete, spec, &opts.em, opts.b_boot, boot_seed)?;
            Ok(point_ci(&fit.params(), &boot.se))
        }
        StudyMethod::CompleteCase => {
            let resolved = spec.resolve(amputed)?;
            let rows = amputed.rows_observed_on(&resolved.model_cols());
            let cc = amputed.subset(&rows);
            let (fit, boot) = fit_cure_with_se(&cc, spec, &opts.em, opts.b_boot, boot_seed)?;
            Ok(point_ci(&fit.params(), &boot.se))
        }
        StudyMethod::Exact | StudyMethod::Approximate => {
            let mut imp = opts.imputation.clone();
            imp.method = if method == StudyMethod::Exact {
                ImputationMethod::Exact
            } else {
                ImputationMethod::Approximate
            };
            imp.seed = child_seed(opts.seed, &[tag::METHOD, b, method.tag_id()]);
            let run = run_chained_equations(amputed, spec, &imp)?;
            let mut estimates = Vec::new();
            let mut covariances = Vec::new();
            for (k, dsk) in run.datasets.iter().enumerate() {
                let seed_k = child_seed(opts.seed, &[tag::BOOTSTRAP, b, method.tag_id(), k as u64]);
                let (fit, boot) = fit_cure_with_se(dsk, spec, &opts.em, opts.b_boot, seed_k)?;
                let p = fit.params();
                let mut cov = Array2::<f64>::zeros((p.len(), p.len()));
                for (j, se) in boot.se.iter().enumerate() {
                    cov[(j, j)] = se * se;
                }
                estimates.push(p);
                covariances.push(cov);
            }
            let pooled = pool(&estimates, &covariances)?;
            Ok((0..pooled.estimate.len())
                .map(|j| (pooled.estimate[j], pooled.ci_lower[j], pooled.ci_upper[j]))
                .collect())
        }
    }
}

fn point_ci(params: &[f64], se: &[f64]) -> Vec<(f64, f64, f64)> {
    params
        .iter()
        .zip(se)
        .map(|(&p, &s)| {
            let half = crate::pool::Z_975 * s;
            (p, p - half, p + half)
        })
        .collect()
}

/// Run the full study: generate, ampute, analyse with each requested
/// method, and aggregate MSE, mean CI width, and empirical coverage against
/// the scenario truth. Replicates are independent jobs with RNG streams
/// keyed by the master seed and replicate index.
pub fn run_study(cfg: &ScenarioConfig, opts: &StudyOptions) -> Result<StudyOutput> {
    if opts.b < 1 {
        return Err(Error::InvalidConfig {
            detail: "study needs at least one replicate".into(),
        });
    }
    let spec = cfg.model_spec();
    let truth = cfg.truth();
    let names: Vec<String> = truth.iter().map(|(n, _)| n.clone()).collect();

    let per_replicate: Vec<Vec<(StudyMethod, MethodOutcome)>> = (0..opts.b)
        .into_par_iter()
        .map(|b| {
            let mut gen_rng = stream(opts.seed, &[tag::GENERATE, b as u64]);
            let replicate = generate_replicate(cfg, &mut gen_rng);
            let mut amp_rng = stream(opts.seed, &[tag::AMPUTE, b as u64]);
            let amputed = match ampute(&replicate.data, cfg.missing_mech, cfg.missing_frac, &mut amp_rng)
            {
                Ok(a) => a,
                Err(e) => {
                    return opts
                        .methods
                        .iter()
                        .map(|&m| (m, Err(e.to_string())))
                        .collect()
                }
            };
            opts.methods
                .iter()
                .map(|&method| {
                    let res = run_method(method, &replicate.data, &amputed, &spec, opts, b)
                        .map_err(|e| e.to_string());
                    (method, res)
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut failures: Vec<(StudyMethod, usize)> =
        opts.methods.iter().map(|&m| (m, 0)).collect();
    for (b, methods) in per_replicate.iter().enumerate() {
        for (method, outcome) in methods {
            match outcome {
                Ok(rows) => {
                    for (j, &(est, lo, hi)) in rows.iter().enumerate() {
                        records.push(ReplicateRecord {
                            replicate: b,
                            method: *method,
                            parameter: names[j].clone(),
                            estimate: est,
                            ci_lo: lo,
                            ci_hi: hi,
                        });
                    }
                }
                Err(_) => {
                    let f = failures.iter_mut().find(|(m, _)| m == method).unwrap();
                    f.1 += 1;
                }
            }
        }
    }

    for &(_method, failed) in &failures {
        if failed * 10 > opts.b {
            return Err(Error::TooManyFailures {
                failed,
                total: opts.b,
            });
        }
    }

    let mut metrics = Vec::new();
    for &method in &opts.methods {
        let failed = failures.iter().find(|(m, _)| *m == method).unwrap().1;
        for (j, name) in names.iter().enumerate() {
            let truth_j = truth[j].1;
            let rows: Vec<&ReplicateRecord> = records
                .iter()
                .filter(|r| r.method == method && r.parameter == *name)
                .collect();
            let used = rows.len();
            let mse = rows
                .iter()
                .map(|r| (r.estimate - truth_j).powi(2))
                .sum::<f64>()
                / used as f64;
            let mean_ci_width = rows.iter().map(|r| r.ci_hi - r.ci_lo).sum::<f64>() / used as f64;
            let coverage = rows
                .iter()
                .filter(|r| r.ci_lo <= truth_j && truth_j <= r.ci_hi)
                .count() as f64
                / used as f64;
            metrics.push(MetricRow {
                method,
                parameter: name.clone(),
                mse,
                mean_ci_width,
                coverage,
                used,
                failed,
            });
        }
    }

    Ok(StudyOutput {
        scenario: cfg.name.clone(),
        b: opts.b,
        truth,
        metrics,
        records,
    })
}

/// Long-format per-replicate CSV.
pub fn write_study_long_csv(out: &StudyOutput, path: &std::path::Path) -> Result<()> {
    let mut text = String::from("scenario,method,parameter,replicate,estimate,ci_lo,ci_hi\n");
    for r in &out.records {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            out.scenario, r.method, r.parameter, r.replicate, r.estimate, r.ci_lo, r.ci_hi
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Aggregated metrics CSV mirroring the study tables.
pub fn write_study_metrics_csv(out: &StudyOutput, path: &std::path::Path) -> Result<()> {
    let mut text =
        String::from("scenario,method,parameter,mse,mean_ci_width,coverage,used,failed\n");
    for m in &out.metrics {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            out.scenario, m.method, m.parameter, m.mse, m.mean_ci_width, m.coverage, m.used, m.failed
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_study_design() {
        let a = scenario_preset("A").unwrap();
        assert_eq!(a.alpha0, 1.0);
        assert_eq!(a.alpha_w, -1.0);
        assert_eq!(a.alpha_x, 0.5);
        assert_eq!(a.beta_w, -0.2);
        assert_eq!(a.beta_z, 0.0);
        assert_eq!(a.w_kind, WKind::Binary { p: 0.5 });
        assert_eq!(a.missing_mech, MissingMechanism::Mcar);
        assert_eq!(a.missing_frac, 0.15);
        assert_eq!(a.censor_rate, 0.08);
        assert_eq!(a.event_truncation, 8.0);
        assert_eq!(a.censor_truncation, 10.0);

        let d = scenario_preset("D").unwrap();
        assert!(d.full_model);
        assert_eq!(d.alpha_z, 0.0);
        assert_eq!(d.beta_x, 0.0);
        assert_eq!(d.missing_mech, MissingMechanism::Mar);
        assert_eq!(d.missing_frac, 0.30);
        let spec = d.model_spec();
        assert_eq!(spec.incidence, vec!["w", "x", "z"]);
        assert_eq!(spec.latency, vec!["w", "x", "z"]);

        let f = scenario_preset("F").unwrap();
        assert_eq!(f.alpha_w, 0.0);
        assert_eq!(f.alpha_x, 0.5);
        assert_eq!(f.beta_w, 0.5);
        assert_eq!(f.beta_z, 0.5);

        assert!(matches!(
            scenario_preset("Q"),
            Err(Error::UnknownScenario { .. })
        ));
    }

    #[test]
    fn inverse_normal_cdf_round_trips() {
        for &p in &[0.001, 0.02425, 0.3, 0.5, 0.7, 0.99] {
            let x = inverse_normal_cdf(p);
            let back = 0.5 * (-x / std::f64::consts::SQRT_2).erfc_approx();
            approx::assert_abs_diff_eq!(back, p, epsilon = 2e-7);
        }
        approx::assert_abs_diff_eq!(inverse_normal_cdf(0.5), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mar_with_zero_scores_reduces_to_mcar() {
        let scores = vec![0.0; 100];
        let c = calibrate_intercept(&scores, 0.3);
        approx::assert_abs_diff_eq!(expit(c), 0.3, epsilon = 1e-9);
    }

    #[test]
    fn amputation_preserves_observed_values() {
        let cfg = scenario_preset("A").unwrap();
        let mut rng = stream(5, &[tag::GENERATE, 0]);
        let rep = generate_replicate(&cfg, &mut rng);
        let mut arng = stream(5, &[tag::AMPUTE, 0]);
        let amputed = ampute(&rep.data, MissingMechanism::Mcar, 0.3, &mut arng).unwrap();
        for i in 0..rep.data.n() {
            for j in 0..3 {
                if !amputed.missing[(i, j)] {
                    assert_eq!(amputed.data[(i, j)], rep.data.data[(i, j)]);
                }
            }
        }
        assert_eq!(amputed.y, rep.data.y);
    }

    #[test]
    fn generated_outcome_identities_hold() {
        let cfg = scenario_preset("B").unwrap();
        let mut rng = stream(6, &[tag::GENERATE, 1]);
        let rep = generate_replicate(&cfg, &mut rng);
        for i in 0..rep.data.n() {
            // cured subjects are never observed with an event
            if !rep.latent_uncured[i] {
                assert!(!rep.data.delta[i]);
            }
            assert!(rep.data.y[i] <= cfg.censor_truncation);
            if rep.data.delta[i] {
                assert!(rep.data.y[i] <= cfg.event_truncation);
            }
        }
    }
}
