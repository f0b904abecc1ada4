//! Multi-task ranking over guest search journeys.
//!
//! * [`domain`]: milestone taxonomy, journey records, label attribution and
//!   training-data rules.
//! * [`sim`]: a seeded synthetic world that generates journeys with known
//!   conversion structure.
//! * [`model`]: the ranker (shared towers, chained positive heads, negative
//!   heads, context-conditioned combination) and its training loop.
//! * [`eval`]: NDCG, multi-seed comparison, task ablations and
//!   coefficient curves.

pub mod domain;
pub mod eval;
pub mod model;
pub mod sim;
mod error;

pub use error::{Error, Result};
