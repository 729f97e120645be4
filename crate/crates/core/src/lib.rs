//! Tail capacities of the G-normal distribution.
//!
//! * [`special_fn`]: normal and Student-t distribution functions.
//! * [`capacity`]: closed-form one-sided solutions, `p1`, the `p2 ≈ 2 p1`
//!   approximation and its error bounds.
//! * [`gheat`]: explicit monotone finite-difference solver for the G-heat
//!   equation, used as an independent oracle and to locate the two-sided
//!   switching thresholds.
//! * [`policy`]: variance-control rules for an adversarial experimenter.
//! * [`simulate`]: reproducible parallel Monte Carlo of type-I error rates.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod capacity;
pub mod gheat;
pub mod policy;
pub mod simulate;
pub mod special_fn;

pub use error::{Error, Result};
pub use capacity::{TailQuery, VolatilityBand};
pub use special_fn::Probability;
