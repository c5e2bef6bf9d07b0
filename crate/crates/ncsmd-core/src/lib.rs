//! Noisy comparison-based stochastic mirror descent (NC-SMD) for dueling
//! bandits over compact convex action sets.
//!
//! The crate simulates a comparison oracle driven by a hidden strongly
//! convex cost function and a link function, runs the mirror-descent solver
//! with Dikin-ellipsoid probes on a regularized self-concordant barrier, and
//! accounts regret in both the dueling-bandit and function-optimization
//! senses, together with the theoretical bounds and a validation battery.

pub mod analysis;
pub mod barriers;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod oracle;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};
