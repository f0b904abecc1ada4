use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sigmoid(bias + weights · listing_features)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Logistic {
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias + self.linear(x)
    }

    /// The weight part alone, without the bias.
    pub fn linear(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }
}

/// Conditional conversion models along the positive funnel. `book` is the
/// host acceptance of a request that was not rejected; `unc` is survival of
/// a booking that no one cancelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageCoefficients {
    pub c: Logistic,
    pub lc: Logistic,
    pub pp: Logistic,
    pub req: Logistic,
    pub book: Logistic,
    pub unc: Logistic,
}

impl StageCoefficients {
    pub fn as_array(&self) -> [&Logistic; 6] {
        [&self.c, &self.lc, &self.pp, &self.req, &self.book, &self.unc]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeCoefficients {
    pub rej: Logistic,
    pub cbh: Logistic,
    pub cbg: Logistic,
}

impl NegativeCoefficients {
    pub fn as_array(&self) -> [&Logistic; 3] {
        [&self.rej, &self.cbh, &self.cbg]
    }
}

/// Declarative description of a synthetic world and its guests.
///
/// Coefficient blocks may be omitted, in which case defaults sized to
/// `listing_feature_dim` are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_guests: usize,
    pub n_listings: usize,
    pub listings_per_search: usize,
    pub max_searches_per_journey: usize,
    pub listing_feature_dim: usize,
    /// At least 2: days ahead of check-in and number of previous searches
    /// come first; the rest are uninformative noise.
    pub context_feature_dim: usize,
    pub stage_coefficients: Option<StageCoefficients>,
    pub negative_coefficients: Option<NegativeCoefficients>,
    /// Added `×` the listing's click logit to every negative-outcome logit.
    pub ctr_negative_coupling: f64,
    /// Height of the days-ahead U on rejection and host-cancellation logits
    /// (and of the rising ramp on guest cancellations).
    pub days_ahead_ushape_strength: f64,
    /// Added `×` (previous searches / max) to every negative-outcome logit.
    pub late_journey_negative_coupling: f64,
    /// Chance that a result slot re-shows a listing the guest already saw.
    pub revisit_probability: f64,
    pub window_days: f64,
    pub max_days_ahead: f64,
    pub mean_search_gap_days: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_guests: 2_000,
            n_listings: 2_000,
            listings_per_search: 10,
            max_searches_per_journey: 8,
            listing_feature_dim: 8,
            context_feature_dim: 3,
            stage_coefficients: None,
            negative_coefficients: None,
            ctr_negative_coupling: 0.5,
            days_ahead_ushape_strength: 1.5,
            late_journey_negative_coupling: 1.5,
            revisit_probability: 0.3,
            window_days: 30.0,
            max_days_ahead: 180.0,
            mean_search_gap_days: 2.0,
            seed: 17,
        }
    }
}

fn sparse(dim: usize, terms: &[(usize, f64)]) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    for &(i, v) in terms {
        w[i % dim] += v;
    }
    w
}

/// Default funnel: each stage leans on its own pair of listing features so
/// intermediate milestones carry information the final one lacks.
pub fn default_stage_coefficients(dim: usize) -> StageCoefficients {
    let l = |terms: &[(usize, f64)], bias| Logistic {
        weights: sparse(dim, terms),
        bias,
    };
    StageCoefficients {
        c: l(&[(0, 0.9), (1, 0.6)], -2.0),
        lc: l(&[(1, 0.5), (2, 0.8)], 0.0),
        pp: l(&[(2, 0.4), (3, 0.8)], -0.2),
        req: l(&[(3, 0.4), (4, 0.8)], 0.0),
        book: l(&[(5, 0.6)], 2.0),
        unc: l(&[(0, 0.2)], 3.0),
    }
}

/// Default negatives: host-side outcomes driven by features the funnel
/// barely uses.
pub fn default_negative_coefficients(dim: usize) -> NegativeCoefficients {
    let l = |terms: &[(usize, f64)], bias| Logistic {
        weights: sparse(dim, terms),
        bias,
    };
    NegativeCoefficients {
        rej: l(&[(6, 1.0), (5, -0.4)], -4.5),
        cbh: l(&[(7, 1.0), (6, 0.4)], -4.6),
        cbg: l(&[(4, 0.6), (7, 0.4)], -4.4),
    }
}

impl GeneratorConfig {
    /// The reference world for multi-seed experiments: about 50k searches
    /// over 32 listing features. Clicks depend on a broad block of twelve
    /// features, each later funnel stage adds a small block of its own, and
    /// every negative outcome has two private features plus the click
    /// coupling.
    pub fn golden() -> Self {
        let dim = 32;
        let l = |terms: &[(usize, f64)], bias| Logistic {
            weights: sparse(dim, terms),
            bias,
        };
        let block = |from: usize, n: usize, w: f64| -> Vec<(usize, f64)> { (from..from + n).map(|i| (i, w)).collect() };
        Self {
            n_guests: 15_000,
            listing_feature_dim: dim,
            stage_coefficients: Some(StageCoefficients {
                c: l(&block(0, 12, 0.35), -2.0),
                lc: l(&block(12, 4, 0.15), 0.0),
                pp: l(&block(16, 4, 0.15), -0.2),
                req: l(&block(20, 4, 0.15), 0.0),
                book: l(&[(24, 0.2)], 2.0),
                unc: l(&[(25, 0.1)], 3.0),
            }),
            negative_coefficients: Some(NegativeCoefficients {
                rej: l(&[(26, 0.8), (27, 0.48)], -4.5),
                cbh: l(&[(28, 0.8), (29, 0.48)], -4.6),
                cbg: l(&[(30, 0.8), (31, 0.48)], -4.4),
            }),
            ..Self::default()
        }
    }

    pub fn stage(&self) -> StageCoefficients {
        self.stage_coefficients
            .clone()
            .unwrap_or_else(|| default_stage_coefficients(self.listing_feature_dim))
    }

    pub fn negative(&self) -> NegativeCoefficients {
        self.negative_coefficients
            .clone()
            .unwrap_or_else(|| default_negative_coefficients(self.listing_feature_dim))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_guests", self.n_guests),
            ("n_listings", self.n_listings),
            ("max_searches_per_journey", self.max_searches_per_journey),
            ("listing_feature_dim", self.listing_feature_dim),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.listings_per_search < 2 {
            return Err(Error::config(
                "listings_per_search",
                "must be at least 2 so every search can be ranked",
            ));
        }
        if self.listings_per_search > self.n_listings {
            return Err(Error::config("listings_per_search", "exceeds n_listings"));
        }
        if self.context_feature_dim < 2 {
            return Err(Error::config(
                "context_feature_dim",
                "must be at least 2 (days ahead, previous searches)",
            ));
        }
        if self.max_searches_per_journey >= 1000 {
            return Err(Error::config("max_searches_per_journey", "must be below 1000"));
        }
        for (key, v) in [
            ("ctr_negative_coupling", self.ctr_negative_coupling),
            ("days_ahead_ushape_strength", self.days_ahead_ushape_strength),
            ("late_journey_negative_coupling", self.late_journey_negative_coupling),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(key, "must be finite and non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.revisit_probability) {
            return Err(Error::config("revisit_probability", "must lie in [0, 1]"));
        }
        for (key, v) in [
            ("window_days", self.window_days),
            ("max_days_ahead", self.max_days_ahead),
            ("mean_search_gap_days", self.mean_search_gap_days),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::config(key, "must be finite and positive"));
            }
        }
        let dim = self.listing_feature_dim;
        let stage = self.stage();
        let names = ["c", "lc", "pp", "req", "book", "unc"];
        for (name, l) in names.iter().zip(stage.as_array()) {
            check_logistic(&format!("stage_coefficients.{name}"), l, dim)?;
        }
        let neg = self.negative();
        for (name, l) in ["rej", "cbh", "cbg"].iter().zip(neg.as_array()) {
            check_logistic(&format!("negative_coefficients.{name}"), l, dim)?;
        }
        Ok(())
    }
}

fn check_logistic(key: &str, l: &Logistic, dim: usize) -> Result<()> {
    if l.weights.len() != dim {
        return Err(Error::config(
            format!("{key}.weights"),
            format!("has {} entries, listing_feature_dim is {dim}", l.weights.len()),
        ));
    }
    if !l.bias.is_finite() || l.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::config(key, "coefficients must be finite"));
    }
    Ok(())
}
