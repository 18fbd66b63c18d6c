//! Chained-equations multiple imputation of missing covariates in the
//! mixture cure model.
//!
//! Each of the K imputed datasets runs its own chain: random-fill the
//! missing cells, then per iteration (1) re-estimate the baseline hazard
//! from posterior uncured weights, (2) draw incidence and latency
//! coefficients from their asymptotic normals, (3) impute the latent
//! uncured status for censored subjects before the cut-off, and (4) impute
//! every incomplete covariate from its exact conditional distribution or a
//! first-order approximate regression, in ascending order of missingness.
//! All randomness comes from streams keyed by
//! (seed, chain, iteration, step, subject), so chains are reproducible
//! under any parallel schedule.

mod approx;
pub mod conditional;

pub use approx::approximate_predictor_labels;
pub use conditional::{
    exact_binary_logit, exact_log_density, metropolis_run, CellConditional, MhStats,
};

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cure::{fit_cure_em, CureFit, EmControls};
use crate::data::{
    CovariateKind, CovariateSpec, ModelSpec, Placement, ResolvedModel, SurvivalDataset,
};
use crate::error::{Error, Result};
use crate::glm::{breslow_cumhaz, expit, fit_cox, fit_logistic, StepFunction};
use crate::linalg::mvn_sample;
use crate::rng::{stream, tag};

use self::approx::{degenerate_columns, derived_spec, fill_row, DerivedSpec};
use self::conditional::{draw_conditional, fit_conditional, ConditionalDraw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputationMethod {
    Exact,
    Approximate,
}

impl std::str::FromStr for ImputationMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(ImputationMethod::Exact),
            "approximate" | "approx" => Ok(ImputationMethod::Approximate),
            other => Err(Error::InvalidConfig {
                detail: format!("unknown imputation method `{other}`"),
            }),
        }
    }
}

impl std::fmt::Display for ImputationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImputationMethod::Exact => write!(f, "exact"),
            ImputationMethod::Approximate => write!(f, "approximate"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputationConfig {
    pub method: ImputationMethod,
    /// Number of imputed datasets K.
    pub k: usize,
    /// Chained-equation iterations per dataset M.
    pub iters: usize,
    pub mh_burn_in: usize,
    pub mh_thin: usize,
    pub mh_proposal_sd: f64,
    pub seed: u64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig {
            method: ImputationMethod::Exact,
            k: 10,
            iters: 10,
            mh_burn_in: 500,
            mh_thin: 100,
            mh_proposal_sd: 1.0,
            seed: 0,
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidConfig {
                detail: format!("k = {} but at least 2 imputed datasets are required", self.k),
            });
        }
        if self.iters < 1 {
            return Err(Error::InvalidConfig {
                detail: "iters must be at least 1".into(),
            });
        }
        if !(self.mh_proposal_sd > 0.0) {
            return Err(Error::InvalidConfig {
                detail: "mh_proposal_sd must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Parameter draws recorded per chained-equation iteration.
#[derive(Debug, Clone, Serialize)]
pub struct IterationDraws {
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ChainDiagnostics {
    pub chain: usize,
    pub mh_proposals: u64,
    pub mh_accepts: u64,
    /// Per iteration: (number of G imputations, how many were 1).
    pub g_imputed: Vec<(usize, usize)>,
    pub param_draw_failures: usize,
    pub dropped_derived_columns: usize,
    #[serde(skip)]
    pub draws: Vec<IterationDraws>,
}

impl ChainDiagnostics {
    pub fn mh_acceptance_rate(&self) -> Option<f64> {
        (self.mh_proposals > 0).then(|| self.mh_accepts as f64 / self.mh_proposals as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ImputationRun {
    /// The completed datasets (missing masks empty).
    pub datasets: Vec<SurvivalDataset>,
    pub diagnostics: Vec<ChainDiagnostics>,
    /// (chain index, error text) of dropped chains.
    pub failed: Vec<(usize, String)>,
    pub init_fallback: bool,
    pub config: ImputationConfig,
}

/// Predictor columns of the covariate conditional model for one target:
/// the other incidence covariates, latency covariates not already in the
/// incidence design, then auxiliaries. The target itself never appears.
pub(crate) fn mu_predictor_columns(
    columns: &[CovariateSpec],
    x_cols: &[usize],
    z_cols: &[usize],
    target: usize,
) -> Vec<usize> {
    let mut preds: Vec<usize> = Vec::new();
    for &c in x_cols {
        if c != target {
            preds.push(c);
        }
    }
    for &c in z_cols {
        if c != target && !preds.contains(&c) {
            preds.push(c);
        }
    }
    for (c, col) in columns.iter().enumerate() {
        if col.placement == Placement::Auxiliary && c != target && !preds.contains(&c) {
            preds.push(c);
        }
    }
    preds
}

struct TargetPlan {
    col: usize,
    kind: CovariateKind,
    mu_preds: Vec<usize>,
    derived: DerivedSpec,
    /// Position of the target within the incidence design, if present.
    x_pos: Option<usize>,
    /// Position of the target within the latency design, if present.
    z_pos: Option<usize>,
    missing_rows: Vec<usize>,
}

struct Engine<'a> {
    ds: &'a SurvivalDataset,
    resolved: &'a ResolvedModel,
    targets: &'a [TargetPlan],
    init: Option<&'a CureFit>,
    config: &'a ImputationConfig,
    cutoff: f64,
}

fn build_design(data: &Array2<f64>, cols: &[usize]) -> Array2<f64> {
    let n = data.nrows();
    let mut out = Array2::<f64>::zeros((n, cols.len()));
    for (k, &c) in cols.iter().enumerate() {
        for i in 0..n {
            out[(i, k)] = data[(i, c)];
        }
    }
    out
}

/// Run the full chained-equations schedule and return the K completed
/// datasets. A dataset with nothing to impute comes back as K identical
/// copies. Chains whose kernels fail hard are dropped and reported; the run
/// aborts when at least half of them fail.
pub fn run_chained_equations(
    ds: &SurvivalDataset,
    spec: &ModelSpec,
    config: &ImputationConfig,
) -> Result<ImputationRun> {
    config.validate()?;
    let resolved = spec.resolve(ds)?;
    if !ds.delta.iter().any(|&d| d) {
        return Err(Error::NoEvents);
    }
    let cutoff = ds.last_event_time().expect("events exist");

    let mut targets: Vec<TargetPlan> = Vec::new();
    for (j, col) in ds.columns.iter().enumerate() {
        let missing_rows: Vec<usize> = (0..ds.n()).filter(|&i| ds.missing[(i, j)]).collect();
        if missing_rows.is_empty() {
            continue;
        }
        let mu_preds = mu_predictor_columns(&ds.columns, &resolved.x_cols, &resolved.z_cols, j);
        let derived = derived_spec(&mu_preds, col.placement, col.kind, &resolved.z_cols, j);
        targets.push(TargetPlan {
            col: j,
            kind: col.kind,
            mu_preds,
            derived,
            x_pos: resolved.x_cols.iter().position(|&c| c == j),
            z_pos: resolved.z_cols.iter().position(|&c| c == j),
            missing_rows,
        });
    }
    // ascending missingness, ties by column index
    targets.sort_by(|a, b| {
        (a.missing_rows.len(), a.col).cmp(&(b.missing_rows.len(), b.col))
    });

    if targets.is_empty() {
        return Ok(ImputationRun {
            datasets: vec![ds.clone(); config.k],
            diagnostics: (0..config.k)
                .map(|c| ChainDiagnostics {
                    chain: c,
                    ..Default::default()
                })
                .collect(),
            failed: Vec::new(),
            init_fallback: false,
            config: config.clone(),
        });
    }

    // Step 0 initialization: a cure fit on the complete cases, with a
    // fallback to event-indicator initialization on the randomly filled
    // data when that fit is impossible.
    let cc_rows = ds.rows_observed_on(&resolved.model_cols());
    let cc_init: Option<CureFit> = if cc_rows.iter().any(|&i| ds.delta[i]) {
        let cc = ds.subset(&cc_rows);
        fit_cure_em(&cc, spec, None, &EmControls::default()).ok()
    } else {
        None
    };
    let init_fallback = cc_init.is_none();

    let engine = Engine {
        ds,
        resolved: &resolved,
        targets: &targets,
        init: cc_init.as_ref(),
        config,
        cutoff,
    };

    let results: Vec<std::result::Result<(SurvivalDataset, ChainDiagnostics), String>> = (0
        ..config.k)
        .into_par_iter()
        .map(|chain| engine.run_chain(chain).map_err(|e| e.to_string()))
        .collect();

    let mut datasets = Vec::new();
    let mut diagnostics = Vec::new();
    let mut failed = Vec::new();
    for (chain, res) in results.into_iter().enumerate() {
        match res {
            Ok((d, diag)) => {
                datasets.push(d);
                diagnostics.push(diag);
            }
            Err(msg) => failed.push((chain, msg)),
        }
    }
    if failed.len() * 2 >= config.k {
        return Err(Error::TooManyFailures {
            failed: failed.len(),
            total: config.k,
        });
    }

    Ok(ImputationRun {
        datasets,
        diagnostics,
        failed,
        init_fallback,
        config: config.clone(),
    })
}

impl Engine<'_> {
    fn run_chain(&self, chain: usize) -> Result<(SurvivalDataset, ChainDiagnostics)> {
        let ds = self.ds;
        let n = ds.n();
        let seed = self.config.seed;
        let chain_tag = chain as u64;
        let mut diag = ChainDiagnostics {
            chain,
            ..Default::default()
        };

        // Step 0: random fill. Binary cells draw Bernoulli(observed mean),
        // continuous cells resample the observed empirical distribution.
        let mut data = ds.data.clone();
        for plan in self.targets {
            let j = plan.col;
            let observed: Vec<f64> = (0..n)
                .filter(|&i| !ds.missing[(i, j)])
                .map(|i| ds.data[(i, j)])
                .collect();
            if observed.is_empty() {
                return Err(Error::InitFailure {
                    detail: format!("column `{}` has no observed values", ds.columns[j].name),
                });
            }
            let mut rng = stream(seed, &[tag::INIT_FILL, chain_tag, j as u64]);
            match plan.kind {
                CovariateKind::Binary => {
                    let p = observed.iter().sum::<f64>() / observed.len() as f64;
                    for &i in &plan.missing_rows {
                        data[(i, j)] = f64::from(rng.random::<f64>() < p);
                    }
                }
                CovariateKind::Continuous => {
                    for &i in &plan.missing_rows {
                        data[(i, j)] = observed[rng.random_range(0..observed.len())];
                    }
                }
            }
        }

        // Initial parameter values and baseline.
        let (mut alpha0, mut alpha, mut beta, mut baseline) = match self.init {
            Some(f) => (f.alpha0, f.alpha.clone(), f.beta.clone(), f.baseline.clone()),
            None => self.fallback_init(&data).map_err(|e| Error::InitFailure {
                detail: format!("fallback initialization failed: {e}"),
            })?,
        };

        // G is known for events and for censored subjects in the plateau.
        let mut g: Vec<Option<bool>> = (0..n)
            .map(|i| {
                if ds.delta[i] {
                    Some(true)
                } else if ds.y[i] > self.cutoff {
                    Some(false)
                } else {
                    None
                }
            })
            .collect();

        for m in 1..=self.config.iters {
            let m_tag = m as u64;
            let x_full = build_design(&data, &self.resolved.x_cols);
            let z_full = build_design(&data, &self.resolved.z_cols);

            // Step 1: posterior weights at the current draws, then the
            // baseline hazard update.
            let eta_lat: Vec<f64> = (0..n).map(|i| z_full.row(i).dot(&beta)).collect();
            let q: Vec<f64> = (0..n)
                .map(|i| {
                    if ds.delta[i] {
                        1.0
                    } else if ds.y[i] > self.cutoff {
                        0.0
                    } else {
                        let pi = expit(alpha0 + x_full.row(i).dot(&alpha));
                        let su = (-baseline.eval(ds.y[i]) * eta_lat[i].exp()).exp();
                        let denom = (1.0 - pi + pi * su).max(1e-300);
                        (pi * su / denom).clamp(0.0, 1.0)
                    }
                })
                .collect();
            baseline = breslow_cumhaz(&ds.y, &ds.delta, &eta_lat, &q)?;

            // Step 2: draw incidence and latency coefficients around the
            // fits on the current G. On a kernel failure the previous draws
            // are retained.
            let mut rng = stream(seed, &[tag::DRAW_PARAMS, chain_tag, m_tag]);
            match self.draw_params(&x_full, &z_full, &g, &mut rng) {
                Ok((a0, a, b)) => {
                    alpha0 = a0;
                    alpha = a;
                    beta = b;
                }
                Err(_) => diag.param_draw_failures += 1,
            }
            diag.draws.push(IterationDraws {
                alpha0,
                alpha: alpha.to_vec(),
                beta: beta.to_vec(),
            });

            // Step 3: impute G for censored subjects before the cut-off.
            let mut imputed = 0usize;
            let mut ones = 0usize;
            for i in 0..n {
                if ds.delta[i] || ds.y[i] > self.cutoff {
                    continue;
                }
                let logit = alpha0 + x_full.row(i).dot(&alpha)
                    - baseline.eval(ds.y[i]) * z_full.row(i).dot(&beta).exp();
                let mut cell_rng = stream(seed, &[tag::IMPUTE_G, chain_tag, m_tag, i as u64]);
                let value = cell_rng.random::<f64>() < expit(logit);
                g[i] = Some(value);
                imputed += 1;
                ones += usize::from(value);
            }
            diag.g_imputed.push((imputed, ones));
            debug_assert!(g.iter().all(|v| v.is_some()));

            // Step 4: impute each incomplete covariate.
            let g01: Vec<f64> = g.iter().map(|v| f64::from(v.unwrap())).collect();
            let h0y: Vec<f64> = (0..n).map(|i| baseline.eval(ds.y[i])).collect();
            for plan in self.targets {
                match self.config.method {
                    ImputationMethod::Exact => self.impute_exact(
                        plan, &mut data, &g01, &h0y, alpha0, &alpha, &beta, chain_tag, m_tag,
                        &mut diag,
                    )?,
                    ImputationMethod::Approximate => self.impute_approximate(
                        plan, &mut data, &g01, &h0y, chain_tag, m_tag, &mut diag,
                    )?,
                }
            }
        }

        let completed = SurvivalDataset::new(
            ds.y.clone(),
            ds.delta.clone(),
            ds.columns.clone(),
            data,
            Array2::from_elem(ds.missing.dim(), false),
        );
        Ok((completed, diag))
    }

    fn fallback_init(
        &self,
        data: &Array2<f64>,
    ) -> Result<(f64, Array1<f64>, Array1<f64>, StepFunction)> {
        let ds = self.ds;
        let n = ds.n();
        let unit = vec![1.0; n];
        let x = build_design(data, &self.resolved.x_cols);
        let z = build_design(data, &self.resolved.z_cols);
        let outcome: Vec<f64> = ds.delta.iter().map(|&d| f64::from(d)).collect();
        let inc = fit_logistic(&outcome, x.view(), &unit)?;
        let lat = fit_cox(&ds.y, &ds.delta, z.view(), &unit)?;
        let eta: Vec<f64> = (0..n).map(|i| z.row(i).dot(&lat.coefficients)).collect();
        let baseline = breslow_cumhaz(&ds.y, &ds.delta, &eta, &unit)?;
        Ok((inc.intercept, inc.coefficients, lat.coefficients, baseline))
    }

    fn draw_params<R: Rng>(
        &self,
        x_full: &Array2<f64>,
        z_full: &Array2<f64>,
        g: &[Option<bool>],
        rng: &mut R,
    ) -> Result<(f64, Array1<f64>, Array1<f64>)> {
        let ds = self.ds;
        let n = ds.n();

        let known: Vec<usize> = (0..n).filter(|&i| g[i].is_some()).collect();
        let outcome: Vec<f64> = known
            .iter()
            .map(|&i| f64::from(g[i].unwrap()))
            .collect();
        let mut x_known = Array2::<f64>::zeros((known.len(), x_full.ncols()));
        for (r, &i) in known.iter().enumerate() {
            x_known.row_mut(r).assign(&x_full.row(i));
        }
        let unit = vec![1.0; known.len()];
        let inc = fit_logistic(&outcome, x_known.view(), &unit)?;

        let uncured: Vec<usize> = (0..n).filter(|&i| g[i] == Some(true)).collect();
        let mut z_u = Array2::<f64>::zeros((uncured.len(), z_full.ncols()));
        let mut y_u = Vec::with_capacity(uncured.len());
        let mut d_u = Vec::with_capacity(uncured.len());
        for (r, &i) in uncured.iter().enumerate() {
            z_u.row_mut(r).assign(&z_full.row(i));
            y_u.push(ds.y[i]);
            d_u.push(ds.delta[i]);
        }
        let lat = fit_cox(&y_u, &d_u, z_u.view(), &vec![1.0; uncured.len()])?;

        let inc_draw = mvn_sample(&inc.params(), &inc.covariance, rng);
        let lat_draw = mvn_sample(&lat.coefficients, &lat.covariance, rng);
        let alpha0 = inc_draw[0];
        let alpha = inc_draw.slice(ndarray::s![1..]).to_owned();
        Ok((alpha0, alpha, lat_draw))
    }

    #[allow(clippy::too_many_arguments)]
    fn impute_exact(
        &self,
        plan: &TargetPlan,
        data: &mut Array2<f64>,
        g01: &[f64],
        h0y: &[f64],
        alpha0: f64,
        alpha: &Array1<f64>,
        beta: &Array1<f64>,
        chain_tag: u64,
        m_tag: u64,
        diag: &mut ChainDiagnostics,
    ) -> Result<()> {
        let ds = self.ds;
        let n = ds.n();
        let seed = self.config.seed;

        // Conditional model fitted on the full, currently completed column.
        let outcome: Vec<f64> = (0..n).map(|i| data[(i, plan.col)]).collect();
        let design = build_design(data, &plan.mu_preds);
        let model = fit_conditional(&outcome, &design, plan.kind)?;
        let mut theta_rng = stream(seed, &[tag::DRAW_THETA, chain_tag, m_tag, plan.col as u64]);
        let draw = draw_conditional(&model, &mut theta_rng);

        for &i in &plan.missing_rows {
            let mu = draw.theta[0]
                + plan
                    .mu_preds
                    .iter()
                    .enumerate()
                    .map(|(t, &c)| draw.theta[t + 1] * data[(i, c)])
                    .sum::<f64>();
            let incidence = plan.x_pos.map(|jx| {
                let mut a = alpha0;
                for (b, &c) in self.resolved.x_cols.iter().enumerate() {
                    if b != jx {
                        a += alpha[b] * data[(i, c)];
                    }
                }
                (a, alpha[jx])
            });
            let latency = plan.z_pos.map(|jz| {
                let mut b_lin = 0.0;
                for (s, &c) in self.resolved.z_cols.iter().enumerate() {
                    if s != jz {
                        b_lin += beta[s] * data[(i, c)];
                    }
                }
                (b_lin, beta[jz])
            });
            let ctx = CellConditional {
                g: g01[i],
                delta: f64::from(ds.delta[i]),
                h0y: h0y[i],
                incidence,
                latency,
                mu,
            };
            let mut cell_rng = stream(
                seed,
                &[tag::IMPUTE_CELL, chain_tag, m_tag, plan.col as u64, i as u64],
            );
            let value = match plan.kind {
                CovariateKind::Binary => {
                    let p = expit(exact_binary_logit(&ctx));
                    f64::from(cell_rng.random::<f64>() < p)
                }
                CovariateKind::Continuous => {
                    let sigma = draw.sigma.expect("continuous target has sigma");
                    let (kept, stats) = metropolis_run(
                        &ctx,
                        sigma,
                        data[(i, plan.col)],
                        self.config.mh_burn_in,
                        self.config.mh_thin,
                        1,
                        self.config.mh_proposal_sd,
                        &mut cell_rng,
                    )?;
                    diag.mh_proposals += stats.proposals;
                    diag.mh_accepts += stats.accepts;
                    kept[0]
                }
            };
            data[(i, plan.col)] = value;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn impute_approximate(
        &self,
        plan: &TargetPlan,
        data: &mut Array2<f64>,
        g01: &[f64],
        h0y: &[f64],
        chain_tag: u64,
        m_tag: u64,
        diag: &mut ChainDiagnostics,
    ) -> Result<()> {
        let ds = self.ds;
        let n = ds.n();
        let seed = self.config.seed;
        let spec = &plan.derived;
        let width = spec.n_columns();

        let mut full = Array2::<f64>::zeros((n, width));
        let mut row_buf = vec![0.0; width];
        for i in 0..n {
            fill_row(
                spec,
                data,
                i,
                f64::from(ds.delta[i]),
                g01[i],
                h0y[i],
                &mut row_buf,
            );
            for (k, &v) in row_buf.iter().enumerate() {
                full[(i, k)] = v;
            }
        }

        let fit_rows: Vec<usize> = (0..n).filter(|&i| !ds.missing[(i, plan.col)]).collect();
        let outcome: Vec<f64> = fit_rows.iter().map(|&i| data[(i, plan.col)]).collect();
        let mut fit_design = Array2::<f64>::zeros((fit_rows.len(), width));
        for (r, &i) in fit_rows.iter().enumerate() {
            fit_design.row_mut(r).assign(&full.row(i));
        }

        // Drop constant columns up front, then back off derived columns one
        // at a time if the fit is still degenerate.
        let degenerate = degenerate_columns(&fit_design);
        let mut kept: Vec<usize> = (0..width).filter(|j| !degenerate.contains(j)).collect();
        diag.dropped_derived_columns += degenerate.iter().filter(|&&j| j >= plan.mu_preds.len()).count();

        let model = loop {
            let mut reduced = Array2::<f64>::zeros((fit_rows.len(), kept.len()));
            for (kk, &j) in kept.iter().enumerate() {
                reduced.column_mut(kk).assign(&fit_design.column(j));
            }
            match fit_conditional(&outcome, &reduced, plan.kind) {
                Ok(m) => break m,
                Err(e @ (Error::RankDeficient { .. } | Error::Separation)) => {
                    // retreat: drop the last remaining derived column
                    match kept.iter().rposition(|&j| j >= plan.mu_preds.len()) {
                        Some(pos) => {
                            kept.remove(pos);
                            diag.dropped_derived_columns += 1;
                        }
                        None => return Err(e),
                    }
                }
                Err(e) => return Err(e),
            }
        };

        let mut theta_rng = stream(seed, &[tag::DRAW_THETA, chain_tag, m_tag, plan.col as u64]);
        let draw: ConditionalDraw = draw_conditional(&model, &mut theta_rng);

        for &i in &plan.missing_rows {
            let mu = draw.theta[0]
                + kept
                    .iter()
                    .enumerate()
                    .map(|(t, &j)| draw.theta[t + 1] * full[(i, j)])
                    .sum::<f64>();
            let mut cell_rng = stream(
                seed,
                &[tag::IMPUTE_CELL, chain_tag, m_tag, plan.col as u64, i as u64],
            );
            let value = match plan.kind {
                CovariateKind::Binary => f64::from(cell_rng.random::<f64>() < expit(mu)),
                CovariateKind::Continuous => {
                    let sigma = draw.sigma.expect("continuous target has sigma");
                    let z: f64 = cell_rng.sample(rand_distr::StandardNormal);
                    mu + sigma * z
                }
            };
            data[(i, plan.col)] = value;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File emission
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RunManifest<'a> {
    method: String,
    k_requested: usize,
    k_completed: usize,
    iters: usize,
    mh_burn_in: usize,
    mh_thin: usize,
    mh_proposal_sd: f64,
    seed: u64,
    init_fallback: bool,
    chains: Vec<ChainSummary>,
    failed: &'a [(usize, String)],
}

#[derive(Serialize)]
struct ChainSummary {
    chain: usize,
    mh_acceptance_rate: Option<f64>,
    g_imputed_last_iteration: Option<(usize, usize)>,
    param_draw_failures: usize,
    dropped_derived_columns: usize,
}

/// Write the completed datasets as `imputed_k01.csv`, ... plus a manifest
/// recording the configuration and per-chain diagnostics. Returns the paths
/// written.
pub fn write_run(run: &ImputationRun, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (idx, ds) in run.datasets.iter().enumerate() {
        let path = dir.join(format!("imputed_k{:02}.csv", idx + 1));
        crate::data::write_csv(ds, &path)?;
        paths.push(path);
    }
    let manifest = RunManifest {
        method: run.config.method.to_string(),
        k_requested: run.config.k,
        k_completed: run.datasets.len(),
        iters: run.config.iters,
        mh_burn_in: run.config.mh_burn_in,
        mh_thin: run.config.mh_thin,
        mh_proposal_sd: run.config.mh_proposal_sd,
        seed: run.config.seed,
        init_fallback: run.init_fallback,
        chains: run
            .diagnostics
            .iter()
            .map(|d| ChainSummary {
                chain: d.chain,
                mh_acceptance_rate: d.mh_acceptance_rate(),
                g_imputed_last_iteration: d.g_imputed.last().copied(),
                param_draw_failures: d.param_draw_failures,
                dropped_derived_columns: d.dropped_derived_columns,
            })
            .collect(),
        failed: &run.failed,
    };
    let path = dir.join("imputation_manifest.toml");
    std::fs::write(
        &path,
        toml::to_string(&manifest).map_err(|e| Error::Toml(e.to_string()))?,
    )?;
    paths.push(path);
    Ok(paths)
}
