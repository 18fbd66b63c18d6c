//! Rubin's rules: pooling estimates and covariances across K completed
//! datasets into one estimate, variance decomposition, and 95% intervals.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Standard normal 0.975 quantile; intervals use normal quantiles rather
/// than a small-sample t adjustment.
pub const Z_975: f64 = 1.959963984540054;

#[derive(Debug, Clone)]
pub struct PooledEstimate {
    pub estimate: Array1<f64>,
    /// Mean of the per-dataset covariances.
    pub within: Array2<f64>,
    /// Sample covariance (divisor K-1) of the per-dataset estimates.
    pub between: Array2<f64>,
    /// within + (1 + 1/K) between.
    pub total: Array2<f64>,
    pub ci_lower: Array1<f64>,
    pub ci_upper: Array1<f64>,
    pub k: usize,
}

impl PooledEstimate {
    pub fn se(&self) -> Array1<f64> {
        Array1::from_iter((0..self.estimate.len()).map(|j| self.total[(j, j)].sqrt()))
    }

    /// Fraction of missing information per parameter:
    /// (1 + 1/K) between / total, on the diagonal.
    pub fn fraction_missing_information(&self) -> Array1<f64> {
        let k = self.k as f64;
        Array1::from_iter((0..self.estimate.len()).map(|j| {
            let t = self.total[(j, j)];
            if t > 0.0 {
                (1.0 + 1.0 / k) * self.between[(j, j)] / t
            } else {
                0.0
            }
        }))
    }
}

/// Pool K estimate vectors and their covariance matrices.
pub fn pool(estimates: &[Vec<f64>], covariances: &[Array2<f64>]) -> Result<PooledEstimate> {
    let k = estimates.len();
    if k < 2 {
        return Err(Error::InvalidConfig {
            detail: format!("pooling needs at least 2 datasets, got {k}"),
        });
    }
    if covariances.len() != k {
        return Err(Error::DimensionMismatch {
            detail: format!("{k} estimates but {} covariances", covariances.len()),
        });
    }
    let p = estimates[0].len();
    for (i, e) in estimates.iter().enumerate() {
        if e.len() != p {
            return Err(Error::DimensionMismatch {
                detail: format!("estimate {i} has length {}, expected {p}", e.len()),
            });
        }
    }
    for (i, c) in covariances.iter().enumerate() {
        if c.dim() != (p, p) {
            return Err(Error::DimensionMismatch {
                detail: format!("covariance {i} has shape {:?}, expected ({p},{p})", c.dim()),
            });
        }
    }

    let kf = k as f64;
    let mut estimate = Array1::<f64>::zeros(p);
    for e in estimates {
        for j in 0..p {
            estimate[j] += e[j];
        }
    }
    estimate /= kf;

    let mut within = Array2::<f64>::zeros((p, p));
    for c in covariances {
        within += c;
    }
    within /= kf;

    let mut between = Array2::<f64>::zeros((p, p));
    for e in estimates {
        for a in 0..p {
            let da = e[a] - estimate[a];
            for b in 0..p {
                between[(a, b)] += da * (e[b] - estimate[b]);
            }
        }
    }
    between /= kf - 1.0;

    let total = &within + &(&between * (1.0 + 1.0 / kf));

    let mut ci_lower = estimate.clone();
    let mut ci_upper = estimate.clone();
    for j in 0..p {
        let half = Z_975 * total[(j, j)].sqrt();
        ci_lower[j] -= half;
        ci_upper[j] += half;
    }

    Ok(PooledEstimate {
        estimate,
        within,
        between,
        total,
        ci_lower,
        ci_upper,
        k,
    })
}

/// Pooled report CSV: parameter, estimate, SE, CI bounds, and the fraction
/// of missing information.
pub fn write_pooled_csv(
    path: &std::path::Path,
    names: &[String],
    pooled: &PooledEstimate,
) -> Result<()> {
    let se = pooled.se();
    let fmi = pooled.fraction_missing_information();
    let mut out = String::from("parameter,estimate,se,ci_lo,ci_hi,lambda_fmi\n");
    for (j, name) in names.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            name, pooled.estimate[j], se[j], pooled.ci_lower[j], pooled.ci_upper[j], fmi[j]
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
