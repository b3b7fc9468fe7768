//! Sparse support recovery from deterministically censored designs.
//!
//! The pipeline imputes each missing cell from its most predictive observed
//! neighbor feature (scored on a pairwise-complete covariance), solves the
//! Lasso on the imputed design, and can certify the recovered support with a
//! primal-dual witness.

pub mod covariance;
pub mod data;
pub mod error;
pub mod experiments;
pub mod impute;
pub mod lasso;
pub mod synth;
pub mod witness;

pub use error::{Error, Result};
