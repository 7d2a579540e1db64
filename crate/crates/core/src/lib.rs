//! Clustered regression with unknown clusters.
//!
//! `M` experiments each observe `y = h_mᵀx + w`, and the regression vectors
//! `h_m` are shared within unknown groups of experiments. This crate provides
//! estimators that pool data across experiments ([`estimators`], [`svt`]),
//! a Gaussian cluster simulator ([`synth`]), and an evaluation harness
//! ([`eval`]) driven by the `cruc` command-line tool ([`cli`]).

pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod lsq;
pub mod rng;
pub mod svt;
pub mod synth;

pub use error::{Error, Result};
