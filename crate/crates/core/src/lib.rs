//! Exact densities, gradients, fitting and sampling for nested Archimedean
//! copulas under per-variable right censoring.
//!
//! Every observation contributes the mixed partial derivative of the copula
//! CDF in its uncensored coordinates. The derivative is assembled bottom-up
//! over the nesting tree from univariate Taylor jets of the generators,
//! partial Bell transforms across edges and Cauchy products across
//! siblings, all carried in sign/log-magnitude form.

pub mod bell;
pub mod bench;
pub mod data;
pub mod error;
pub mod fit;
pub mod generators;
pub mod grad;
pub mod jet;
pub mod sample;
pub mod stats;
pub mod num;
pub mod optim;
pub mod tree;
pub mod validity;

pub use error::{Error, Result};
