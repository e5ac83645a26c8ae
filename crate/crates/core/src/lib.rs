//! Simulation and exact verification tools for spatial birth-and-death
//! dynamics that are reversible with respect to finite-range Gibbs point
//! processes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod estimators;
pub mod interaction;
pub mod lattice;
pub mod noise;
pub mod stats;

pub use config::{Configuration, MarkedConfiguration, Point, Window};
pub use error::{Error, Result};
pub use interaction::{AreaQuadrature, InteractionKind, InteractionSpec, PairBounds, PairPotential};
pub use noise::{propose_events, shared_restriction, EventStream, ProposalEvent, SeedSpec};
pub use stats::EstimatorReport;
