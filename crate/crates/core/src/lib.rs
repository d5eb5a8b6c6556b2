//! Balls into bins with `k` offered choices per ball and a persistent
//! state budget of `m` bits.
//!
//! [`model`] holds the load vector and offer samplers, [`membits`] the bit
//! ledger that enforces the budget, [`algorithms`] the allocation policies,
//! [`diagnostics`] the collision predictors and bound checks, and
//! [`harness`] the seeded experiment runner behind the command-line tool.

pub mod algorithms;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod membits;
pub mod model;
pub mod rng;

pub use algorithms::{build_policy, AllocationPolicy, PolicyKind, PolicyOutcome, PolicySpec};
pub use error::{Error, Result};
pub use membits::BitLedger;
pub use model::{LoadVector, Offer, ProblemSize};
pub use rng::RngStream;
