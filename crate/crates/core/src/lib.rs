//! Maki-Thompson rumour spreading on Newman-Watts small-world graphs.
//!
//! - [`graph`]: `G(n, k, p)` construction, queries and serialization.
//! - [`process`]: exact discrete-time dynamics, including the variant that
//!   samples shortcuts in tandem with the rumour.
//! - [`meanfield`]: `α`, the mean-field ODE, Lambert `W₀` and `z∞`.
//! - [`branching`]: blocking vertices, blocked clusters and the offspring
//!   means bounding the phase transition.
//! - [`experiments`]: the Monte-Carlo harness and its statistics.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branching;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod meanfield;
pub mod poisson;
pub mod process;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{Graph, GraphParams};
pub use process::{RunOutcome, SeedVertex};
