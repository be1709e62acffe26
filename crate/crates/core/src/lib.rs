//! Contextual bilateral trade with one-bit feedback.
//!
//! A learner posts one price per round to a seller and a buyer whose
//! valuations are Lipschitz functions of a public context in `[0, 1]^d`,
//! and only learns whether the trade happened. This crate provides the
//! tree-based posting policies for known and unknown Lipschitz constants,
//! valuation environments (including the lower-bound instances), and a
//! harness that measures regret.

pub mod env;
pub mod error;
pub mod harness;
pub mod policy;
pub mod rng;
pub mod tree;
pub mod types;

pub use error::{Error, Result};
pub use policy::{KnownLPolicy, PhaseTag, Posting, PricingPolicy, UnknownLPolicy};
pub use tree::{NodeId, Tree, TreeParams};
pub use types::{best_gft, capped_grid, gft, Context, Feedback, Price, PriceGrid, ValuationPair};
