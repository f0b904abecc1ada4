//! The ranker: shared towers, chained funnel heads, negative-outcome heads
//! and a context-conditioned linear combination.

mod batch;
mod config;
mod ranker;
mod train;

pub use batch::{Batch, Normalizer};
pub use config::{LossWeights, ModelConfig, ModelSpecs, TrainConfig};
pub use ranker::{
    eligibility, Candidate, ForwardVars, JourneyRanker, LossVars, ModelManifest, ModelOutputs, Module,
    ScoredCandidate,
};
pub use train::{init_model, train, train_from, EpochLosses, TrainHistory};
