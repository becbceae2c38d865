//! Simulation of LOS MIMO links impaired by oscillator phase noise.
//!
//! The crate models the channel, Wiener and stationary phase noise, the
//! pilot-trained zero-forcing receiver with decision-directed phase tracking,
//! and the Monte-Carlo harness that produces EVM/SER curves.

// NaN-rejecting comparisons are written as `!(x >= 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod modem;
pub mod numerics;
pub mod phasenoise;
pub mod receiver;
pub mod scenario;
pub mod spectrum;
pub mod validation;

pub use error::{Error, Result};
