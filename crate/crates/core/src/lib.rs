//! Detection of latent confounders between two observed scalar variables.
//!
//! The pipeline fits a model `X = u(T) + N_X`, `Y = v(T) + N_Y` with the
//! latent `T` and both noise terms jointly independent. Latent values are
//! initialised by an Isomap embedding refined into a principal curve, then
//! re-projected to minimise the summed HSIC dependence between residuals
//! and latent values. The [`moments`] module holds numerical experiments on
//! recovering noise moments from conditional moments.

pub mod cli;
pub mod curve;
pub mod data;
pub mod dependence;
pub mod error;
pub mod gp;
pub mod ican;
pub mod moments;
mod numeric;
pub mod projection;
pub mod report;

pub use error::{Error, Result};
