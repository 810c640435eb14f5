//! Causal effect estimation when outcomes and covariates are curves.
//!
//! The crate covers the full pipeline: a functional data model ([`fdata`]),
//! elastic registration under the Fisher–Rao metric ([`elastic`]), Fréchet
//! means and dynamic treatment effects ([`frechet`]), classical IPW and
//! doubly-robust baselines ([`classical`]), kernels and Kronecker-structured
//! Gram matrices ([`kernels`]), kernel ridge estimators of potential-outcome
//! curves ([`estimators`]), asymptotic confidence intervals ([`inference`]),
//! and synthetic scenario generators with known ground truth ([`simgen`]).

pub mod classical;
pub mod cli;
pub mod elastic;
mod error;
pub mod estimators;
pub mod fdata;
pub mod frechet;
pub mod inference;
pub mod kernels;
pub mod simgen;

pub use error::{Error, Result};

/// Propensity clipping shared by the weighting estimators.
pub const PROPENSITY_CLIP: f64 = 0.01;
