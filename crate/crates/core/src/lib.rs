//! Occupancy prediction for observed `M_t/G/∞` queues.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrivals;
pub mod cli;
pub mod dist;
pub mod error;
pub mod horizon;
pub mod inference;
pub mod observed;
pub mod quadrature;
pub mod roots;
pub mod sim;
pub mod stats;

pub use arrivals::{ArrivalRate, CutSide, Domain};
pub use dist::ServiceDistribution;
pub use error::{Error, Result};
