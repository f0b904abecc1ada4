use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{GeneratorConfig, NegativeCoefficients, StageCoefficients};
use journey_nn::sigmoid;

/// Ground truth of a generated world: listing qualities plus the exact
/// conversion model journeys were sampled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldTruth {
    /// Latent quality vector per listing, indexed by listing id.
    pub listing_features: Vec<Vec<f64>>,
    pub stage: StageCoefficients,
    pub negative: NegativeCoefficients,
    pub ctr_negative_coupling: f64,
    pub days_ahead_ushape_strength: f64,
    pub late_journey_negative_coupling: f64,
    pub max_days_ahead: f64,
    pub max_searches_per_journey: usize,
    pub context_dim: usize,
}

impl WorldTruth {
    pub(crate) fn sample(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Self {
        let listing_features = (0..cfg.n_listings)
            .map(|_| {
                (0..cfg.listing_feature_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Self {
            listing_features,
            stage: cfg.stage(),
            negative: cfg.negative(),
            ctr_negative_coupling: cfg.ctr_negative_coupling,
            days_ahead_ushape_strength: cfg.days_ahead_ushape_strength,
            late_journey_negative_coupling: cfg.late_journey_negative_coupling,
            max_days_ahead: cfg.max_days_ahead,
            max_searches_per_journey: cfg.max_searches_per_journey,
            context_dim: cfg.context_feature_dim,
        }
    }

    pub fn n_listings(&self) -> usize {
        self.listing_features.len()
    }

    pub fn features(&self, listing: u32) -> &[f64] {
        &self.listing_features[listing as usize]
    }

    /// Conditional probabilities along the funnel: `c`, `lc|c`, `pp|lc`,
    /// `req|pp`, `book|req,¬rej`, `unc|book,¬cancelled`.
    pub fn stage_probabilities(&self, listing: u32) -> [f64; 6] {
        let x = self.features(listing);
        self.stage.as_array().map(|l| sigmoid(l.logit(x)))
    }

    /// Rejection and host/guest cancellation probabilities under `context`
    /// (days ahead of check-in first, previous searches second).
    pub fn negative_probabilities(&self, listing: u32, context: &[f64]) -> [f64; 3] {
        let x = self.features(listing);
        let ctr = self.stage.c.linear(x);
        let days = context[0].clamp(0.0, self.max_days_ahead) / self.max_days_ahead;
        let ushape = (2.0 * days - 1.0).powi(2);
        let cap = (self.max_searches_per_journey.max(2) - 1) as f64;
        let late = context[1].clamp(0.0, cap) / cap;
        let shared = self.ctr_negative_coupling * ctr + self.late_journey_negative_coupling * late;
        let s = self.days_ahead_ushape_strength;
        let [rej, cbh, cbg] = self.negative.as_array();
        [
            sigmoid(rej.logit(x) + shared + s * ushape),
            sigmoid(cbh.logit(x) + shared + s * ushape),
            sigmoid(cbg.logit(x) + shared + s * days),
        ]
    }

    /// Joint probability of reaching each funnel milestone from a single
    /// impression.
    pub fn joint_probabilities(&self, listing: u32, context: &[f64]) -> [f64; 6] {
        let s = self.stage_probabilities(listing);
        let [rej, cbh, cbg] = self.negative_probabilities(listing, context);
        let c = s[0];
        let lc = c * s[1];
        let pp = lc * s[2];
        let req = pp * s[3];
        let book = req * (1.0 - rej) * s[4];
        let unc = book * (1.0 - cbh) * (1.0 - cbg) * s[5];
        [c, lc, pp, req, book, unc]
    }

    pub fn p_unc(&self, listing: u32, context: &[f64]) -> f64 {
        self.joint_probabilities(listing, context)[5]
    }

    /// Orders `candidates` by true P(unc), highest first, ties by id.
    pub fn rank(&self, context: &[f64], candidates: &[u32]) -> Vec<u32> {
        let mut scored: Vec<(f64, u32)> = candidates.iter().map(|&l| (self.p_unc(l, context), l)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, l)| l).collect()
    }
}

/// Every listing of `world`, ordered by true P(unc) under `context`.
pub fn true_ranking(world: &WorldTruth, context: &[f64]) -> Vec<u32> {
    let all: Vec<u32> = (0..world.n_listings() as u32).collect();
    world.rank(context, &all)
}
