use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{filter_training_searches, Dataset, Milestone, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilestoneCount {
    pub milestone: Milestone,
    pub impressions: usize,
    /// Share of all impressions.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub journeys: usize,
    pub searches: usize,
    pub impressions: usize,
    /// Every milestone, in funnel order.
    pub milestones: Vec<MilestoneCount>,
    /// Number of searches -> number of journeys with that many.
    pub searches_per_journey: BTreeMap<usize, usize>,
    pub outcomes: BTreeMap<String, usize>,
    pub pp_filter_retained_fraction: f64,
}

impl FunnelReport {
    pub fn count(&self, m: Milestone) -> usize {
        self.milestones
            .iter()
            .find(|c| c.milestone == m)
            .map_or(0, |c| c.impressions)
    }
}

pub fn summarize(data: &Dataset) -> FunnelReport {
    let impressions = data.n_impressions();
    let mut counts = [0usize; 10];
    for imp in data.impressions() {
        for m in imp.labels.milestones() {
            counts[m as usize] += 1;
        }
    }
    let milestones = Milestone::ALL
        .iter()
        .map(|&m| MilestoneCount {
            milestone: m,
            impressions: counts[m as usize],
            rate: if impressions == 0 { 0.0 } else { counts[m as usize] as f64 / impressions as f64 },
        })
        .collect();
    let mut searches_per_journey = BTreeMap::new();
    let mut outcomes = BTreeMap::new();
    for j in &data.journeys {
        *searches_per_journey.entry(j.searches.len()).or_insert(0) += 1;
        let key = match j.outcome {
            Outcome::Unc => "unc",
            Outcome::CancelledOrRejected => "cancelled_or_rejected",
            Outcome::Abandoned => "abandoned",
        };
        *outcomes.entry(key.to_string()).or_insert(0) += 1;
    }
    FunnelReport {
        journeys: data.journeys.len(),
        searches: data.n_searches(),
        impressions,
        milestones,
        searches_per_journey,
        outcomes,
        pp_filter_retained_fraction: filter_training_searches(data).1.retained_fraction,
    }
}

/// Pearson correlation, over requested impressions, between the listing's
/// click-through rate in `data` and whether the request was rejected.
/// `None` when either side has no variance.
pub fn ctr_rejection_correlation(data: &Dataset) -> Option<f64> {
    let mut shown: HashMap<u32, (usize, usize)> = HashMap::new();
    for imp in data.impressions() {
        let e = shown.entry(imp.listing_id).or_insert((0, 0));
        e.0 += 1;
        e.1 += imp.labels.get(Milestone::C) as usize;
    }
    let pairs: Vec<(f64, f64)> = data
        .impressions()
        .filter(|i| i.labels.get(Milestone::Req))
        .map(|i| {
            let (n, c) = shown[&i.listing_id];
            (c as f64 / n as f64, i.labels.get(Milestone::Rej) as u8 as f64)
        })
        .collect();
    pearson(&pairs)
}

pub(crate) fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
