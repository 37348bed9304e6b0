//! Real-time V2X link emulation for a single ego vehicle.
//!
//! Each step of a mobility trace is turned into the set of messages the ego
//! would receive: links are classified as LOS, building-obstructed or
//! vehicle-obstructed, given a path loss and correlated shadowing, filtered by
//! receiver sensitivity, and the delivered ones carry a position degraded by
//! a correlated GNSS error.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod gnss;
pub mod pipeline;
pub mod rng;
pub mod scenario;
