//! Scenario runner behind the `gibbsflow` command: TOML scenarios in, run
//! directories with `manifest.json`, `results.csv` and `verdict.csv` out.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiments;
pub mod runner;
pub mod scenario;
