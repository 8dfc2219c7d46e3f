//! Estimation of mixed multinomial logit models.
//!
//! The crate bundles a semi-synthetic panel choice generator, three
//! estimators (variational Bayes, Metropolis-within-Gibbs MCMC and maximum
//! simulated likelihood) and an evaluation harness computing parameter RMSE
//! and predictive total variation distance. See `examples/` for runnable
//! entry points to each capability.

pub mod data;
pub mod dist;
pub mod elise;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod mcmc;
pub mod mnl;
pub mod msle;
pub mod optim;
pub mod quasirandom;
pub mod seed;
pub(crate) mod serde_mat;
pub mod vb;

pub use error::{Error, Result};
