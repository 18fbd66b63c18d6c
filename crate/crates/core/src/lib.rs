//! Cox proportional-hazards mixture cure models with multiple imputation of
//! partially observed covariates.
//!
//! The crate provides:
//!
//! - [`data`]: dataset representation, covariate roles, CSV/schema I/O
//! - [`glm`]: weighted logistic and Cox kernels plus the Breslow baseline
//! - [`cure`]: EM estimation of the mixture cure model with bootstrap SEs
//! - [`impute`]: chained-equations multiple imputation with exact
//!   conditional draws or first-order approximate regressions
//! - [`pool`]: Rubin's rules
//! - [`sim`]: the simulation lab (scenarios A-F, amputation, study metrics)
//! - [`diagnostics`]: sufficient-follow-up interval check

pub mod cure;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod glm;
pub mod impute;
pub mod linalg;
pub mod pool;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
