//! Sign-based gradient methods for finite-sum nonconvex problems under random
//! reshuffling.
//!
//! The crate provides SignRR (signSGD over per-epoch permutations), its
//! variance-reduced variant SignRVR, the momentum variant SignRVM, their
//! multi-worker counterparts with byte accounting, with-replacement baselines,
//! runtime checks of the inequalities behind the convergence analysis, and an
//! experiment harness.

// `!(x > 0.0)` is used on purpose so NaN lands on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod distributed;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod optimizers;
pub mod problems;
pub mod rng;
pub mod schedules;
pub mod theory;
pub mod trace;

pub use error::{Error, Result};
