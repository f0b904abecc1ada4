use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::milestone::{LabelRule, Milestone};
use super::records::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    Label(LabelRule),
    ListingWidth,
    ContextWidth,
    NonFiniteFeature,
    TooFewImpressions,
    DuplicatePosition,
    DuplicateListing,
    JourneyWindow,
    SearchOrder,
    MultipleUncListings,
    OutcomeMismatch,
}

impl Violation {
    pub fn describe(self) -> String {
        match self {
            Violation::Label(rule) => rule.describe().to_string(),
            Violation::ListingWidth => "listing feature width differs from schema".into(),
            Violation::ContextWidth => "context width differs from schema".into(),
            Violation::NonFiniteFeature => "feature value is NaN or infinite".into(),
            Violation::TooFewImpressions => "search has fewer than 2 impressions".into(),
            Violation::DuplicatePosition => "position repeated within a search".into(),
            Violation::DuplicateListing => "listing shown twice in one search".into(),
            Violation::JourneyWindow => "journey spans more than the window".into(),
            Violation::SearchOrder => "searches not in time order".into(),
            Violation::MultipleUncListings => "more than one listing carries unc".into(),
            Violation::OutcomeMismatch => "journey outcome disagrees with its labels".into(),
        }
    }

    fn key(self) -> String {
        match self {
            Violation::Label(rule) => serde_json::to_value(rule)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            other => serde_json::to_value(other)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        }
    }
}

/// Violation counts by type. An empty report means the dataset is accepted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub journeys: usize,
    pub searches: usize,
    pub impressions: usize,
    pub violations: BTreeMap<String, usize>,
    /// First few offending records, for diagnostics.
    pub examples: Vec<String>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn total_violations(&self) -> usize {
        self.violations.values().sum()
    }

    pub fn count(&self, v: Violation) -> usize {
        self.violations.get(&v.key()).copied().unwrap_or(0)
    }

    fn record(&mut self, v: Violation, where_: impl FnOnce() -> String) {
        *self.violations.entry(v.key()).or_insert(0) += 1;
        if self.examples.len() < 10 {
            self.examples.push(format!("{}: {}", where_(), v.describe()));
        }
    }
}

/// Checks every label invariant, feature width, search shape and journey
/// window in `data`.
pub fn validate_dataset(data: &Dataset) -> ValidationReport {
    let schema = &data.schema;
    let mut report = ValidationReport {
        journeys: data.journeys.len(),
        searches: data.n_searches(),
        impressions: data.n_impressions(),
        ..Default::default()
    };
    for j in &data.journeys {
        let g = j.guest_id;
        if let (Some(first), Some(last)) = (j.searches.first(), j.searches.last()) {
            if last.t_days - first.t_days > schema.window_days {
                report.record(Violation::JourneyWindow, || format!("guest {g}"));
            }
        }
        if j.searches.windows(2).any(|w| w[1].t_days < w[0].t_days) {
            report.record(Violation::SearchOrder, || format!("guest {g}"));
        }
        let unc_listings: HashSet<u32> = j
            .impressions()
            .filter(|i| i.labels.get(Milestone::Unc))
            .map(|i| i.listing_id)
            .collect();
        if unc_listings.len() > 1 {
            report.record(Violation::MultipleUncListings, || format!("guest {g}"));
        }
        if j.derived_outcome() != j.outcome {
            report.record(Violation::OutcomeMismatch, || format!("guest {g}"));
        }
        for s in &j.searches {
            let sid = s.search_id;
            if s.context.len() != schema.context_dim() {
                report.record(Violation::ContextWidth, || format!("search {sid}"));
            }
            if s.context.iter().any(|v| !v.is_finite()) {
                report.record(Violation::NonFiniteFeature, || format!("search {sid}"));
            }
            if s.impressions.len() < 2 {
                report.record(Violation::TooFewImpressions, || format!("search {sid}"));
            }
            let mut positions = HashSet::new();
            let mut listings = HashSet::new();
            for imp in &s.impressions {
                let lid = imp.listing_id;
                if !positions.insert(imp.position) {
                    report.record(Violation::DuplicatePosition, || format!("search {sid} listing {lid}"));
                }
                if !listings.insert(imp.listing_id) {
                    report.record(Violation::DuplicateListing, || format!("search {sid} listing {lid}"));
                }
                if imp.features.len() != schema.listing_dim() {
                    report.record(Violation::ListingWidth, || format!("search {sid} listing {lid}"));
                }
                if imp.features.iter().any(|v| !v.is_finite()) {
                    report.record(Violation::NonFiniteFeature, || format!("search {sid} listing {lid}"));
                }
                for rule in imp.labels.violations() {
                    report.record(Violation::Label(rule), || format!("search {sid} listing {lid}"));
                }
            }
        }
    }
    report
}
