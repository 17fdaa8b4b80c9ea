//! Emission regulation inside a moving geofence around a detected cyclist.
//!
//! Hybrid vehicles inside the fence are given probabilities of staying in
//! polluting mode so that the expected aggregate emission rate stays within
//! a budget, favouring cleaner vehicles on roads cyclists rarely use. Each
//! vehicle enacts its probability with a weighted coin toss.
//!
//! - [`emission`]: average-speed emission model and coefficient tables
//! - [`optimizer`]: the probability assignment and a brute-force reference
//! - [`coordinator`]: fence lifecycle, emission budget, mode commands
//! - [`sim`]: route-following microsimulation and scenario files
//! - [`report`]: traces, summaries, plot tables, baseline comparison

// `!(x >= 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coordinator;
pub mod emission;
pub mod error;
pub mod geometry;
pub mod ids;
pub mod optimizer;
pub mod report;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use ids::{CyclistId, EdgeId, VehicleId};
