//! Numerical laboratory for transport-entropy inequalities with Bregman costs.
//!
//! The crate discretizes log-concave (and mildly perturbed) measures
//! `dμ_V = e^{-V} dx / Z` on uniform tensor grids, solves the optimal transport
//! problems they induce, and checks the associated inequalities at desk scale:
//!
//! - [`potentials`]: closed-form potentials `V` with gradient and Hessian oracles.
//! - [`measures`]: grid measures, relative entropy, moments, translations.
//! - [`costs`]: the Bregman cost `c_V`, the capped quadratic `N`, `F(t) = t - log(1+t)`.
//! - [`transport`]: network simplex, log-domain Sinkhorn, 1D quantile couplings.
//! - [`spectral`]: Cheeger and Poincaré constants of grid measures.
//! - [`matrixfn`]: spectral calculus of `F` on symmetric matrices, sphere averages.
//! - [`harness`]: one check per inequality, producing [`harness::InequalityReport`]s.
//! - [`config`]: run configuration shared with the command-line front end.

#![forbid(unsafe_code)]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod costs;
pub mod error;
pub mod harness;
pub mod matrixfn;
pub mod measures;
pub mod potentials;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
