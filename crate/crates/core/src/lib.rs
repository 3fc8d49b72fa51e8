//! Equilibrium model of telehealth price and cost regulation, and a Poisson
//! pseudo-maximum-likelihood pipeline for staggered triple-interaction
//! difference-in-differences with absorbed fixed effects.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causal;
pub mod consistency;
pub mod equilibrium;
pub mod error;
pub mod ingest;
pub mod montecarlo;
pub mod panel;
pub mod ppml;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
