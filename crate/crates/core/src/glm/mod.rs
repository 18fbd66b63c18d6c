//! Numerical kernels: weighted logistic regression, weighted Cox partial
//! likelihood, and the weighted Breslow baseline cumulative hazard.
//!
//! All three are pure functions of their inputs and safe to call
//! concurrently from replicate workers.

mod baseline;
mod cox;
mod linear;
mod logistic;

pub use baseline::{breslow_cumhaz, StepFunction};
pub use cox::{cox_partial_loglik, fit_cox, CoxFit};
pub use linear::{fit_linear, LinearFit};
pub use logistic::{expit, fit_logistic, logistic_loglik, softplus, LogisticFit};

pub(crate) use cox::fit_cox_warm;
pub(crate) use logistic::fit_logistic_warm;
