//! First-order approximate imputation models.
//!
//! Instead of sampling the exact conditional, the target is regressed on a
//! derived predictor set whose composition depends on where it enters the
//! cure model:
//!
//! - both designs: other covariates, G, G*Delta, G*H0(Y)
//!   (binary targets add G*H0(Y)*Z for every other latency covariate)
//! - incidence only: other covariates and G
//! - latency only: other covariates, G*Delta, G*H0(Y)
//!   (binary targets add the G*H0(Y)*Z block)
//! - auxiliary: other covariates only
//!
//! Missing cells are then filled by a predictive draw after perturbing the
//! coefficients with a posterior-normal draw.

use ndarray::Array2;

use crate::data::{CovariateKind, CovariateSpec, ModelSpec, Placement};
use crate::error::{Error, Result};

/// Composition of the derived design for one target.
#[derive(Debug, Clone)]
pub(crate) struct DerivedSpec {
    /// Plain covariate predictors (dataset column indices).
    pub mu_preds: Vec<usize>,
    pub has_g: bool,
    pub has_g_delta: bool,
    pub has_g_h0: bool,
    /// Latency columns entering G*H0(Y)*Z interaction terms.
    pub interaction_cols: Vec<usize>,
}

impl DerivedSpec {
    pub fn n_derived(&self) -> usize {
        usize::from(self.has_g)
            + usize::from(self.has_g_delta)
            + usize::from(self.has_g_h0)
            + self.interaction_cols.len()
    }

    pub fn n_columns(&self) -> usize {
        self.mu_preds.len() + self.n_derived()
    }
}

pub(crate) fn derived_spec(
    mu_preds: &[usize],
    placement: Placement,
    kind: CovariateKind,
    z_cols: &[usize],
    target: usize,
) -> DerivedSpec {
    let in_x = matches!(placement, Placement::Both | Placement::IncidenceOnly);
    let in_z = matches!(placement, Placement::Both | Placement::LatencyOnly);
    let interaction_cols = if in_z && kind == CovariateKind::Binary {
        z_cols.iter().copied().filter(|&c| c != target).collect()
    } else {
        Vec::new()
    };
    DerivedSpec {
        mu_preds: mu_preds.to_vec(),
        has_g: in_x,
        has_g_delta: in_z,
        has_g_h0: in_z,
        interaction_cols,
    }
}

/// Fill one design row. `g` and `h0y` are the subject's current uncured
/// indicator and baseline cumulative hazard at the follow-up time.
pub(crate) fn fill_row(
    spec: &DerivedSpec,
    data: &Array2<f64>,
    row: usize,
    delta: f64,
    g: f64,
    h0y: f64,
    out: &mut [f64],
) {
    let mut k = 0;
    for &c in &spec.mu_preds {
        out[k] = data[(row, c)];
        k += 1;
    }
    if spec.has_g {
        out[k] = g;
        k += 1;
    }
    if spec.has_g_delta {
        out[k] = g * delta;
        k += 1;
    }
    if spec.has_g_h0 {
        out[k] = g * h0y;
        k += 1;
    }
    for &c in &spec.interaction_cols {
        out[k] = g * h0y * data[(row, c)];
        k += 1;
    }
    debug_assert_eq!(k, spec.n_columns());
}

/// Human-readable labels of the approximate predictor set for one target,
/// in design-column order. Exposed so the assembly can be checked against
/// a hand enumeration.
pub fn approximate_predictor_labels(
    columns: &[CovariateSpec],
    spec: &ModelSpec,
    target: &str,
) -> Result<Vec<String>> {
    let names: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
    let target_idx = names
        .iter()
        .position(|&n| n == target)
        .ok_or_else(|| Error::SpecColumnUnknown {
            name: target.to_string(),
        })?;
    let col_idx = |name: &String| -> Result<usize> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::SpecColumnUnknown { name: name.clone() })
    };
    let x_cols: Vec<usize> = spec
        .incidence
        .iter()
        .map(&col_idx)
        .collect::<Result<_>>()?;
    let z_cols: Vec<usize> = spec.latency.iter().map(&col_idx).collect::<Result<_>>()?;
    let mu_preds = super::mu_predictor_columns(columns, &x_cols, &z_cols, target_idx);
    let ds = derived_spec(
        &mu_preds,
        columns[target_idx].placement,
        columns[target_idx].kind,
        &z_cols,
        target_idx,
    );

    let mut labels: Vec<String> = ds.mu_preds.iter().map(|&c| names[c].to_string()).collect();
    if ds.has_g {
        labels.push("g".into());
    }
    if ds.has_g_delta {
        labels.push("g_delta".into());
    }
    if ds.has_g_h0 {
        labels.push("g_h0".into());
    }
    for &c in &ds.interaction_cols {
        labels.push(format!("g_h0_{}", names[c]));
    }
    Ok(labels)
}

/// Column indices (into the derived design) with variance below 1e-12 over
/// the given rows; these are dropped before fitting.
pub(crate) fn degenerate_columns(design: &Array2<f64>) -> Vec<usize> {
    let n = design.nrows();
    let mut out = Vec::new();
    for j in 0..design.ncols() {
        let col = design.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if var < 1e-12 {
            out.push(j);
        }
    }
    out
}
