//! Joint power and bandwidth allocation maximizing the weighted sum of
//! utility-energy efficiencies under secrecy-rate constraints.
//!
//! The global solver is [`outer::solve`]; [`baselines`] holds the power-only,
//! bandwidth-only and alternating comparisons, and [`scenario`] builds
//! random instances from path-loss parameters.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod inner;
pub mod model;
pub mod outer;
pub mod scenario;
pub mod special;
pub mod utility;

pub use error::{Result, UeeError};
