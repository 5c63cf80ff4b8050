//! Curvature-adaptive bandit convex optimization.
//!
//! FTRL over a lifted domain regularized by a normal barrier, with
//! per-round `ℓ₂` regularization tuned to the revealed strong convexity,
//! plus baselines, seeded environments and a verification harness.

pub mod algorithms;
pub mod barrier;
pub mod env;
pub mod error;
pub mod ftrl;
pub mod harness;
pub mod numerics;
pub mod rng;
pub mod validation;

pub use error::{BcoError, Result};
