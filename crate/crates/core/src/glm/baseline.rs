//! Right-continuous step functions and the weighted Breslow estimator of
//! the baseline cumulative hazard.

use crate::error::{Error, Result};

/// Right-continuous nondecreasing step function, zero before the first knot.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    /// Build from strictly increasing knots and nondecreasing nonnegative
    /// values of equal length.
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<StepFunction> {
        if knots.len() != values.len() {
            return Err(Error::DimensionMismatch {
                detail: format!(
                    "step function with {} knots but {} values",
                    knots.len(),
                    values.len()
                ),
            });
        }
        let increasing = knots.windows(2).all(|w| w[0] < w[1]);
        let nondecreasing = values.windows(2).all(|w| w[0] <= w[1]);
        let nonnegative = values.first().is_none_or(|&v| v >= 0.0);
        let finite = knots.iter().chain(values.iter()).all(|v| v.is_finite());
        if !(increasing && nondecreasing && nonnegative && finite) {
            return Err(Error::InvalidConfig {
                detail: "step function requires strictly increasing knots and nondecreasing nonnegative values".into(),
            });
        }
        Ok(StepFunction { knots, values })
    }

    pub fn empty() -> StepFunction {
        StepFunction {
            knots: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Value at the largest knot <= t, or 0 before the first knot.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|&k| k <= t);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1]
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Jump size at an exact knot location (0 if t is not a knot).
    pub fn increment_at(&self, t: f64) -> f64 {
        match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(0) => self.values[0],
            Ok(j) => self.values[j] - self.values[j - 1],
            Err(_) => 0.0,
        }
    }

    /// (knot, jump) pairs.
    pub fn increments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.knots.iter().enumerate().map(|(j, &t)| {
            let prev = if j == 0 { 0.0 } else { self.values[j - 1] };
            (t, self.values[j] - prev)
        })
    }

    /// Multiply all values by a positive constant.
    pub fn scaled(&self, c: f64) -> StepFunction {
        StepFunction {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// Weighted Breslow estimator of the cumulative baseline hazard.
///
/// At each distinct event time t_j the hazard jumps by
/// `D(t_j) / sum_{i in R_j} q_i exp(eta_i)` where `D(t_j)` counts events at
/// t_j and `R_j` is the at-risk set `{i : y_i >= t_j}`. Callers supply
/// weights with `q_i = 1` on events.
pub fn breslow_cumhaz(
    y: &[f64],
    delta: &[bool],
    linear_predictor: &[f64],
    weights: &[f64],
) -> Result<StepFunction> {
    let n = y.len();
    assert_eq!(delta.len(), n);
    assert_eq!(linear_predictor.len(), n);
    assert_eq!(weights.len(), n);
    debug_assert!(
        y.iter()
            .zip(delta)
            .zip(weights)
            .all(|((_, &d), &w)| !d || (w - 1.0).abs() < 1e-9),
        "breslow_cumhaz expects weight 1 on events"
    );

    if !delta.iter().any(|&d| d) {
        return Err(Error::NoEvents);
    }

    // Walk times descending, maintaining the weighted risk-set sum.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).unwrap());

    let mut at_risk = 0.0;
    let mut knots_rev: Vec<f64> = Vec::new();
    let mut increments_rev: Vec<f64> = Vec::new();
    let mut idx = 0;
    while idx < n {
        let t = y[order[idx]];
        let mut events = 0usize;
        while idx < n && y[order[idx]] == t {
            let i = order[idx];
            at_risk += weights[i] * linear_predictor[i].exp();
            if delta[i] {
                events += 1;
            }
            idx += 1;
        }
        if events > 0 {
            knots_rev.push(t);
            increments_rev.push(events as f64 / at_risk);
        }
    }

    let knots: Vec<f64> = knots_rev.into_iter().rev().collect();
    let mut values: Vec<f64> = increments_rev.into_iter().rev().collect();
    let mut acc = 0.0;
    for v in values.iter_mut() {
        acc += *v;
        *v = acc;
    }
    StepFunction::new(knots, values)
}
