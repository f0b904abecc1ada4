//! Seeded synthetic journeys with a known conversion model.

mod config;
mod generate;
mod report;
mod world;

pub use config::{
    default_negative_coefficients, default_stage_coefficients, GeneratorConfig, Logistic, NegativeCoefficients,
    StageCoefficients,
};
pub use generate::{generate, generate_shard, SHARD_SIZE};
pub use report::{ctr_rejection_correlation, summarize, FunnelReport, MilestoneCount};
pub use world::{true_ranking, WorldTruth};
