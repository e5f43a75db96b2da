//! Experiment runner around `uee-core`: TOML run configs, parallel
//! sweeps, long-format CSV/JSON-lines output and a self-check suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;
pub mod validate;

pub use config::{ConfigError, Format, RunConfig};
pub use run::{run_points, sweep_points, write_rows, Algorithm, Axis, Row, RunResult};
