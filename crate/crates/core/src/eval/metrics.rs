use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::ndcg::ndcg_from_scores;
use crate::domain::{Dataset, Milestone};
use crate::error::{Error, Result};
use crate::model::JourneyRanker;
use crate::sim::WorldTruth;

/// Mean NDCG for one relevance label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelNdcg {
    pub milestone: Milestone,
    /// `None` when no search has a positive for this label.
    pub mean: Option<f64>,
    /// Searches with at least one positive.
    pub searches: usize,
    /// Searches skipped for lack of positives.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub searches_total: usize,
    /// Relevance = uncancelled booking.
    pub overall: LabelNdcg,
    /// One entry per positive funnel milestone.
    pub per_milestone: Vec<LabelNdcg>,
}

/// NDCG of `scores` (one vector per search, dataset order) for `label`.
pub fn label_ndcg(data: &Dataset, scores: &[Vec<f64>], label: Milestone) -> Result<LabelNdcg> {
    if scores.len() != data.n_searches() {
        return Err(Error::Contract(format!(
            "{} score vectors for {} searches",
            scores.len(),
            data.n_searches()
        )));
    }
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for (s, sc) in data.searches().zip(scores) {
        if sc.len() != s.impressions.len() {
            return Err(Error::Contract(format!("search {}: score count differs from impressions", s.search_id)));
        }
        let ids: Vec<u32> = s.impressions.iter().map(|i| i.listing_id).collect();
        let rel: Vec<bool> = s.impressions.iter().map(|i| i.labels.get(label)).collect();
        match ndcg_from_scores(sc, &ids, &rel) {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    Ok(LabelNdcg {
        milestone: label,
        mean: (n > 0).then(|| sum / n as f64),
        searches: n,
        skipped,
    })
}

pub fn evaluate_scores(data: &Dataset, scores: &[Vec<f64>]) -> Result<EvalReport> {
    let per_milestone = Milestone::CHAIN
        .iter()
        .map(|&m| label_ndcg(data, scores, m))
        .collect::<Result<Vec<_>>>()?;
    let overall = per_milestone
        .iter()
        .find(|l| l.milestone == Milestone::Unc)
        .cloned()
        .expect("unc is in the chain");
    Ok(EvalReport {
        searches_total: data.n_searches(),
        overall,
        per_milestone,
    })
}

/// Scores `data` with `model` and reports NDCG. Refuses a different schema.
pub fn evaluate(model: &JourneyRanker, data: &Dataset) -> Result<EvalReport> {
    let scores = model.score_dataset(data)?;
    evaluate_scores(data, &scores)
}

/// True log P(unc) of every impression under the generating world.
pub fn oracle_scores(world: &WorldTruth, data: &Dataset) -> Vec<Vec<f64>> {
    data.searches()
        .map(|s| s.impressions.iter().map(|i| world.p_unc(i.listing_id, &s.context).ln()).collect())
        .collect()
}

/// Independent uniform scores.
pub fn random_scores(data: &Dataset, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    data.searches()
        .map(|s| s.impressions.iter().map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// Mean and two-sided 95% Student-t half-width. Needs two or more values.
pub fn t_interval(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Contract(format!(
            "a confidence interval needs at least 2 seeds, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok((mean, t * (var / n as f64).sqrt()))
}

/// Multi-seed NDCG summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdcgReport {
    pub mean: f64,
    pub per_seed: Vec<f64>,
    pub ci_half_width: f64,
    pub n_searches: usize,
}

impl NdcgReport {
    pub fn from_seeds(per_seed: Vec<f64>, n_searches: usize) -> Result<Self> {
        let (mean, ci_half_width) = t_interval(&per_seed)?;
        Ok(Self {
            mean,
            per_seed,
            ci_half_width,
            n_searches,
        })
    }
}

/// Paired per-seed difference `a - b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub ndcg_a: Vec<f64>,
    pub ndcg_b: Vec<f64>,
    pub deltas: Vec<f64>,
    pub mean_delta: f64,
    pub ci_half_width: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Mean delta relative to mean NDCG of `b`, in percent.
    pub relative_percent: f64,
    pub n_searches: usize,
}

impl Comparison {
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

pub fn compare(seeds: &[u64], ndcg_a: &[f64], ndcg_b: &[f64], n_searches: usize) -> Result<Comparison> {
    if ndcg_a.len() != ndcg_b.len() || ndcg_a.len() != seeds.len() {
        return Err(Error::Contract("paired comparison needs one value per seed on both sides".into()));
    }
    let deltas: Vec<f64> = ndcg_a.iter().zip(ndcg_b).map(|(a, b)| a - b).collect();
    let (mean_delta, half) = t_interval(&deltas)?;
    let mean_b = ndcg_b.iter().sum::<f64>() / ndcg_b.len() as f64;
    Ok(Comparison {
        seeds: seeds.to_vec(),
        ndcg_a: ndcg_a.to_vec(),
        ndcg_b: ndcg_b.to_vec(),
        deltas,
        mean_delta,
        ci_half_width: half,
        ci_low: mean_delta - half,
        ci_high: mean_delta + half,
        relative_percent: if mean_b == 0.0 { 0.0 } else { 100.0 * mean_delta / mean_b },
        n_searches,
    })
}
