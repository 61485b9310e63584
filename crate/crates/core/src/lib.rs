//! Exact numerics for shuffled randomized response in the critical regime.
//!
//! Finite-n experiments, their Poisson / Skellam / compound-Poisson limits,
//! privacy curves and trade-off functions, explicit coupling bounds, and the
//! sweeps that check observed convergence rates against those bounds.

// `!(x >= 0.0)` rejects NaN together with negative values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod cli;
pub mod coupling;
pub mod curve;
pub mod dist;
pub mod error;
pub mod hybrid;
pub mod limit;
pub mod rr;

pub use error::{Error, Result};
